import copy
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Protocol, Sequence, Tuple

import torch

from ..classes.configs import ExtractorConfig, FotConfig
from ..classes.episode import Episode
from ..classes.image_sample import ImageSample, SampleRegistry
from ..classes.report import EvalReport, VariantFlags
from ..classes.saliency import SaliencyMap
from ..datamodel.episodes import sample_episode
from ..extractor.foreground import prepare_sample
from ..logger.logger import Logger, LoggerManager
from ..miner.quadruplets import PartnerFinder
from ..networks.backbones import FeatureExtractor
from ..networks.classifier import CosineClassifier
from ..networks.generator import PostureGenerator
from ..saliency.store import SaliencyMngr
from ..training.augment import SupportAugmenter
from ..training.finetune import EpisodeBatch, Finetuner, predict
from ..utils.file_manager import FilesMngr


class EpisodeSolver(Protocol):
    """Anything that labels the query set of a prepared episode."""

    def solve(self, batch: EpisodeBatch, n_way: int, flags: VariantFlags, seed: int) -> torch.Tensor:
        ...


class FinetuneSolver:
    """
    Fits a fresh cosine classifier on the support set and labels the queries.
    Transductive episodes work on a private copy of the extractor.
    """

    def __init__(self, extractor: FeatureExtractor, cfg: FotConfig):
        self.extractor = extractor
        self.cfg = cfg

    def solve(self, batch: EpisodeBatch, n_way: int, flags: VariantFlags, seed: int) -> torch.Tensor:
        cfg = copy.copy(self.cfg)
        cfg.transductive = flags.transductive
        extractor = copy.deepcopy(self.extractor) if flags.transductive else self.extractor
        device = next(extractor.parameters()).device
        scale, learnable = cfg.resolved_scale()
        classifier = CosineClassifier(extractor.feature_dim, n_way, scale, learnable).to(device)
        with torch.no_grad():
            classifier.weight.normal_(0.0, 0.01, generator=torch.Generator(device=device).manual_seed(seed))
        batch = batch.to(device)
        Finetuner(cfg).finetune(batch, extractor, classifier, seed=seed)
        return predict(extractor, classifier, batch.query_x).cpu()


@dataclass
class PipelineComponents:
    """Trained pieces an evaluation run draws on."""

    solver: EpisodeSolver
    extractor_cfg: ExtractorConfig = field(default_factory=ExtractorConfig)
    saliency: Optional[SaliencyMngr] = None
    generator: Optional[PostureGenerator] = None
    partners: Optional[PartnerFinder] = None
    base_images: Mapping[str, torch.Tensor] = field(default_factory=dict)
    k_generated: int = 0


class Evaluator:
    """Episodic N-way K-shot evaluation of one pipeline variant or an ablation grid."""

    def __init__(
        self,
        components: PipelineComponents,
        n_way: int = 5,
        k_shot: int = 1,
        n_query: int = 16,
        dataset: str = "custom",
        workers: int = 1,
    ):
        self.components = components
        self.n_way = n_way
        self.k_shot = k_shot
        self.n_query = n_query
        self.dataset = dataset
        self.workers = max(1, workers)
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)
        # per-report cache, shared by the episode threads
        self._prepared: Dict[Tuple[bool, bool, bool, str], Tuple[ImageSample, Optional[SaliencyMap]]] = {}
        self._prepared_lock = threading.Lock()

    def _check(self, flags: VariantFlags):
        if flags.use_generator and (self.components.generator is None or self.components.partners is None):
            raise ValueError(f"variant {flags.name} needs a trained generator and a quadruplet set")
        if (flags.remove_background or flags.use_generator) and self.components.saliency is None:
            raise ValueError(f"variant {flags.name} needs saliency maps")

    def prepare(
        self, sample: ImageSample, flags: VariantFlags
    ) -> Tuple[ImageSample, Optional[SaliencyMap]]:
        needs_map = flags.remove_background or flags.use_generator
        key = (flags.remove_background, flags.resize_foreground, needs_map, sample.identifier)
        with self._prepared_lock:
            cached = self._prepared.get(key)
        if cached is not None:
            return cached
        saliency_map = self.components.saliency.compute_saliency(sample) if needs_map else None
        prepared = prepare_sample(sample, saliency_map, self.components.extractor_cfg, flags)
        with self._prepared_lock:
            return self._prepared.setdefault(key, prepared)

    def run_episode(self, episode: Episode, flags: VariantFlags) -> float:
        """
        Routes support and query through the same extractor stages, optionally
        grows the support with generated samples, solves the episode and
        returns the fraction of correctly labelled queries.
        """
        self._check(flags)
        support, support_maps = [], {}
        for sample in episode.support:
            processed, processed_map = self.prepare(sample, flags)
            support.append(processed)
            support_maps[processed.identifier] = processed_map
        query = [self.prepare(sample, flags)[0] for sample in episode.query]
        if flags.use_generator:
            augmenter = SupportAugmenter(
                self.components.generator, self.components.partners, self.components.base_images
            )
            support = augmenter.augment_support(
                support, support_maps, self.components.k_generated, seed=episode.seed
            )
        batch = EpisodeBatch.fromSamples(
            support,
            [episode.label_map[sample.class_id] for sample in support],
            query,
            [episode.label_map[sample.class_id] for sample in query],
        )
        predictions = self.components.solver.solve(batch, episode.n_way, flags, episode.seed)
        return float((predictions == batch.query_y).float().mean())

    def _episodes(self, registry: SampleRegistry, n_episodes: int, seed: int) -> List[Episode]:
        return [
            sample_episode(registry, self.n_way, self.k_shot, self.n_query, seed + offset)
            for offset in range(n_episodes)
        ]

    def _report(
        self, episodes: Sequence[Episode], flags: VariantFlags, seed: int
    ) -> EvalReport:
        self._check(flags)
        try:
            if self.workers == 1:
                accuracies = [self.run_episode(episode, flags) for episode in episodes]
            else:
                with ThreadPoolExecutor(max_workers=self.workers) as pool:
                    accuracies = list(pool.map(lambda episode: self.run_episode(episode, flags), episodes))
        finally:
            with self._prepared_lock:
                self._prepared.clear()
        report = EvalReport.from_accuracies(
            [100.0 * accuracy for accuracy in accuracies],
            self.n_way,
            self.k_shot,
            self.n_query,
            self.dataset,
            flags,
            seed,
            [episode.fingerprint() for episode in episodes],
        )
        self.logger.info(f"{report.task} {flags.name}: {report.summary()} over {report.n_episodes} episodes")
        return report

    def evaluate(
        self, registry: SampleRegistry, flags: VariantFlags, n_episodes: int, seed: int = 0
    ) -> EvalReport:
        """Episodes use seeds seed .. seed + n_episodes - 1."""
        if n_episodes < 1:
            raise ValueError(f"n_episodes must be >= 1, got {n_episodes}")
        return self._report(self._episodes(registry, n_episodes, seed), flags, seed)

    def ablate(
        self,
        registry: SampleRegistry,
        grid: Sequence[VariantFlags],
        n_episodes: int,
        seed: int = 0,
    ) -> List[EvalReport]:
        """One report per variant; every variant sees the same episodes."""
        if not grid:
            return []
        if n_episodes < 1:
            raise ValueError(f"n_episodes must be >= 1, got {n_episodes}")
        episodes = self._episodes(registry, n_episodes, seed)
        return [self._report(episodes, flags, seed) for flags in grid]


def run_episode(episode: Episode, components: PipelineComponents, flags: VariantFlags) -> float:
    return Evaluator(components, episode.n_way, episode.k_shot, episode.n_query).run_episode(episode, flags)


def evaluate(
    registry: SampleRegistry,
    components: PipelineComponents,
    flags: VariantFlags,
    n_episodes: int,
    seed: int,
    cfg: FotConfig = None,
) -> EvalReport:
    cfg = cfg or FotConfig()
    evaluator = Evaluator(components, cfg.n_way, cfg.k_shot, cfg.n_query, cfg.dataset, cfg.eval_workers)
    return evaluator.evaluate(registry, flags, n_episodes, seed)


def ablate(
    registry: SampleRegistry,
    components: PipelineComponents,
    grid: Sequence[VariantFlags],
    n_episodes: int,
    seed: int,
    cfg: FotConfig = None,
) -> List[EvalReport]:
    cfg = cfg or FotConfig()
    evaluator = Evaluator(components, cfg.n_way, cfg.k_shot, cfg.n_query, cfg.dataset, cfg.eval_workers)
    return evaluator.ablate(registry, grid, n_episodes, seed)


REPORT_HEADER = ("task", "variant", "episodes", "accuracy (%)")


def format_report_table(reports: Sequence[EvalReport]) -> str:
    """Fixed-width console table, one row per report."""
    rows = [REPORT_HEADER] + [
        (report.task, report.flags.name, str(report.n_episodes), report.summary())
        for report in reports
    ]
    widths = [max(len(row[column]) for row in rows) for column in range(len(REPORT_HEADER))]
    lines = [" | ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "-+-".join("-" * width for width in widths))
    return "\n".join(lines)


def write_report(reports: Sequence[EvalReport], results_file: str) -> None:
    """Appends `task,variant,n_episodes,mean,ci95,seed` lines to `results_file`."""
    FilesMngr().append_lines(results_file, (report.to_line() for report in reports))
