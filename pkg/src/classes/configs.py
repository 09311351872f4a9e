from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Tuple

from ..classes.element_types import (
    BackboneTypes,
    EmptyMaskPolicy,
    EntropySign,
    TransductiveScope,
)
from ..classes.errors import ConfigError

# Budget above which generated samples start to dominate a novel class.
K_BUDGET_ONE_SHOT = 3
K_BUDGET_FEW_SHOT = 5

# 8 shapes x 7 colours
MAX_SYNTHETIC_CLASSES = 56


@dataclass(frozen=True)
class ExtractorConfig:
    beta: float = 40.0
    output_size: Tuple[int, int] = (84, 84)
    empty_mask_policy: EmptyMaskPolicy = EmptyMaskPolicy.WHOLE_IMAGE
    pad_to_square: bool = True

    def __post_init__(self):
        if not 0 <= self.beta <= 255:
            raise ConfigError(f"beta must lie in [0, 255], got {self.beta}")
        if len(self.output_size) != 2 or min(self.output_size) < 1:
            raise ConfigError(f"output_size must be positive, got {self.output_size}")


@dataclass(frozen=True)
class MinerConfig:
    top_m: int = 5
    match_size: Tuple[int, int] = (64, 64)
    target_count: int = 50_000
    # None derives the budget from target_count
    pairs_per_class: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.top_m < 1:
            raise ConfigError(f"top_m must be >= 1, got {self.top_m}")
        if self.target_count < 1:
            raise ConfigError(f"target_count must be >= 1, got {self.target_count}")
        if self.pairs_per_class is not None and self.pairs_per_class < 1:
            raise ConfigError("pairs_per_class must be >= 1 when given")
        if len(self.match_size) != 2 or min(self.match_size) < 1:
            raise ConfigError(f"match_size must be positive, got {self.match_size}")


@dataclass(frozen=True)
class SyntheticSpec:
    """
    Posed-shapes dataset: a class is a (shape, colour) signature; rotation,
    scale, position and the cluttered background are class-independent.
    """

    n_classes: int = 20
    samples_per_class: int = 30
    image_size: int = 64
    n_rotations: int = 8
    scales: Tuple[float, ...] = (0.45, 0.6, 0.75)
    offsets: Tuple[float, ...] = (-0.15, 0.0, 0.15)
    clutter_shapes: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 1 or self.samples_per_class < 1:
            raise ConfigError("n_classes and samples_per_class must be positive")
        if self.image_size < 16:
            raise ConfigError("image_size must be at least 16 pixels")
        if self.n_rotations < 1 or not self.scales or not self.offsets:
            raise ConfigError("posture vocabulary must not be empty")
        if self.n_classes > MAX_SYNTHETIC_CLASSES:
            raise ConfigError(
                f"at most {MAX_SYNTHETIC_CLASSES} shape/colour classes are available, got {self.n_classes}"
            )
        if max(self.scales) > 1 or min(self.scales) <= 0:
            raise ConfigError("scales must lie in (0, 1]")


@dataclass
class FotConfig:
    """
    Every hyperparameter of the pipeline, flat so it maps one-to-one onto a
    `key = value` config file.
    """

    # paths
    data_dir: str = ""
    saliency_dir: str = ""
    work_dir: str = "work"
    split_file: str = ""
    sod_model: str = ""
    results_file: str = "results.csv"
    dataset: str = "custom"

    # class split; all zeros picks the dataset default
    n_base: int = 0
    n_val: int = 0
    n_novel: int = 0
    split_seed: int = 0

    # foreground extractor
    beta: float = 40.0
    image_size: int = 84
    pad_to_square: bool = True
    empty_mask_policy: EmptyMaskPolicy = EmptyMaskPolicy.WHOLE_IMAGE

    # quadruplet miner
    top_m: int = 5
    match_size: int = 64
    target_count: int = 50_000
    pairs_per_class: int = 0

    # networks
    backbone: BackboneTypes = BackboneTypes.CONV4
    # 0 picks 2 (fixed) for conv4 and a learnable scale otherwise
    cosine_scale: float = 0.0
    gen_widths: Tuple[int, ...] = (64, 128, 256)
    gen_res_blocks: int = 1

    # base training
    base_epochs: int = 100
    base_batch: int = 16
    base_lr: float = 1e-3

    # generator training
    gen_epochs: int = 1000
    gen_batch: int = 32
    gen_lr: float = 1e-3
    lambda_mse: float = 1.0

    # novel fine-tuning; k_generated < 0 picks 3 (1-shot) or 5
    k_generated: int = -1
    finetune_iters: int = 100
    original_only_iters: int = 40
    finetune_lr: float = 1e-3
    finetune_batch: int = 0
    transductive: bool = False
    entropy_sign: EntropySign = EntropySign.MINIMIZE_ENTROPY
    entropy_weight: float = 1.0
    transductive_scope: TransductiveScope = TransductiveScope.ALL

    # episodic evaluation
    n_way: int = 5
    k_shot: int = 1
    n_query: int = 16
    n_episodes: int = 600
    remove_background: bool = True
    resize_foreground: bool = True
    use_generator: bool = True
    # episodes evaluated concurrently
    eval_workers: int = 1

    seed: int = 0
    device: str = "cpu"

    _warnings: list = field(default_factory=list, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.original_only_iters > self.finetune_iters:
            raise ConfigError(
                "original_only_iters must not exceed finetune_iters "
                f"({self.original_only_iters} > {self.finetune_iters})"
            )
        if self.lambda_mse < 0:
            raise ConfigError("lambda_mse must be non-negative")
        if self.resize_foreground and not self.remove_background:
            raise ConfigError("resize_foreground requires remove_background")
        if min(self.n_way, self.k_shot, self.n_query) < 1:
            raise ConfigError("n_way, k_shot and n_query must be positive")
        if self.image_size < 1 or self.match_size < 1:
            raise ConfigError("image_size and match_size must be positive")
        if self.eval_workers < 1:
            raise ConfigError("eval_workers must be >= 1")
        if self.k_over_budget():
            self._warnings.append(
                f"k_generated={self.k_generated} exceeds the usual budget of {self.k_budget()} "
                f"for {self.k_shot}-shot tasks; generated samples may dominate"
            )
        # validates ranges of the derived views early
        self.extractor_config()
        self.miner_config()

    def k_budget(self) -> int:
        return K_BUDGET_ONE_SHOT if self.k_shot == 1 else K_BUDGET_FEW_SHOT

    def k_over_budget(self) -> bool:
        return self.k_generated > self.k_budget()

    @property
    def warnings(self) -> list:
        return list(self._warnings)

    def resolved_k(self) -> int:
        if self.k_generated >= 0:
            return self.k_generated
        return K_BUDGET_ONE_SHOT if self.k_shot == 1 else K_BUDGET_FEW_SHOT

    def resolved_scale(self) -> Tuple[float, bool]:
        """Cosine classifier scale and whether it is learnable."""
        if self.cosine_scale > 0:
            return self.cosine_scale, False
        if self.backbone is BackboneTypes.CONV4:
            return 2.0, False
        return 10.0, True

    def extractor_config(self) -> ExtractorConfig:
        return ExtractorConfig(
            beta=self.beta,
            output_size=(self.image_size, self.image_size),
            empty_mask_policy=self.empty_mask_policy,
            pad_to_square=self.pad_to_square,
        )

    def miner_config(self) -> MinerConfig:
        return MinerConfig(
            top_m=self.top_m,
            match_size=(self.match_size, self.match_size),
            target_count=self.target_count,
            pairs_per_class=self.pairs_per_class or None,
            seed=self.seed,
        )

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values.pop("_warnings", None)
        return values
