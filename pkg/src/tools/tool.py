import os
import time
import traceback
from pathlib import Path, PurePosixPath
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import torch

from ..classes.configs import FotConfig
from ..classes.element_types import SplitRole
from ..classes.errors import FotError, StageError
from ..classes.image_sample import ImageSample, SampleRegistry
from ..classes.quadruplet import Quadruplet
from ..classes.report import EvalReport, VariantFlags
from ..classes.saliency import SaliencyMap
from ..classes.split import SplitConfig
from ..datamodel.dataset import DatasetMngr
from ..datamodel.episodes import sample_episode
from ..evaluation.harness import (
    Evaluator,
    FinetuneSolver,
    PipelineComponents,
    format_report_table,
    write_report,
)
from ..extractor.foreground import ForegroundExtractor, stage_for
from ..logger.logger import Logger, LoggerManager
from ..miner.quadruplets import PartnerFinder, QuadrupletMiner
from ..networks.backbones import FeatureExtractor
from ..networks.checkpoint import load_checkpoint, save_checkpoint
from ..networks.classifier import CosineClassifier
from ..networks.factory import build_classifier, build_feature_extractor, build_generator
from ..networks.generator import PostureGenerator
from ..saliency.backend import TorchModelSaliencyBackend
from ..saliency.store import SaliencyMngr, SaliencyStore
from ..training.augment import SupportAugmenter
from ..training.base_trainer import BaseTrainer, label_mapping
from ..training.common import seed_everything
from ..training.generator_trainer import GeneratorTrainer
from ..utils.config_manager import ConfigMngr
from ..utils.counters import Counters
from ..utils.file_manager import FilesMngr
from ..utils.time import TimeUtils

EXTRACT = "extract"
TRAIN_BASE = "train-base"
MINE = "mine"
TRAIN_GEN = "train-gen"
EVAL = "eval"
ABLATE = "ablate"

# Config keys whose values determine the output of a stage.
STAGE_KEYS: Dict[str, Tuple[str, ...]] = {
    EXTRACT: (
        "data_dir", "saliency_dir", "split_file", "sod_model", "dataset",
        "n_base", "n_val", "n_novel", "split_seed",
        "beta", "image_size", "pad_to_square", "empty_mask_policy",
        "remove_background", "resize_foreground", "use_generator",
    ),
    TRAIN_BASE: ("backbone", "cosine_scale", "base_epochs", "base_batch", "base_lr", "seed"),
    MINE: ("top_m", "match_size", "target_count", "pairs_per_class", "seed"),
    TRAIN_GEN: ("gen_widths", "gen_res_blocks", "gen_epochs", "gen_batch", "gen_lr", "lambda_mse", "seed"),
    EVAL: (
        "n_way", "k_shot", "n_query", "n_episodes", "k_generated",
        "finetune_iters", "original_only_iters", "finetune_lr", "finetune_batch",
        "transductive", "entropy_sign", "entropy_weight", "transductive_scope", "seed",
    ),
}
STAGE_KEYS[ABLATE] = STAGE_KEYS[EVAL]

DONE_MARKER = "DONE"
SPLIT_FILE = "split.txt"
IMAGES_DIR = "images"
MAPS_DIR = "maps"
EXTRACTOR_CHECKPOINT = "extractor.pt"
CLASSIFIER_CHECKPOINT = "classifier.pt"
GENERATOR_CHECKPOINT = "generator.pt"
MANIFEST_FILE = "quadruplets.txt"
REPORT_FILE = "report.txt"
TABLE_FILE = "table.txt"
CLASSIFIER_TAG = "cosine"
GENERATOR_TAG = "posture-generator"


class PipelineTool:
    """
    Runs the pipeline stages in order. Every stage writes into
    `work_dir/<stage>-<hash>`, where the hash covers the config keys of the
    stage and the hashes of its upstream stages; a `DONE` marker seals a
    finished stage so reruns skip it.
    """

    time_utils = TimeUtils()
    file_manager = FilesMngr()

    LOG_DELIMITER_COLOR_MAIN = "cyan"
    LOG_DELIMITER_COLOR_STAGE = "purple"
    LOG_DELIMITER_COLOR_ERROR = "bold_red"
    LOG_INFO_COLOR_TIME = "green"
    LOG_INFO_COLOR_PATH = "blue"

    MSG_TOOL_START = "{tool_name} START"
    MSG_PIPELINE_SUCCESS = "PIPELINE SUCCESS"
    MSG_PIPELINE_FAILED = "PIPELINE FAILED"
    MSG_STAGE_START = "STAGE {stage}"
    MSG_STAGE_SKIPPED = "Stage '{stage}' already done under config {config_hash}; skipped"
    MSG_STAGE_DIR = "Stage directory: {path}"
    MSG_STAGE_ERROR = "Stage '{stage}' finished with error: {reason}"
    MSG_STAGE_EXECUTION_TIME = "Stage '{stage}' execution time: {time_str}"
    MSG_PROGRAM_START_TIME = "Program start time: {time_str}"
    MSG_PROGRAM_END_TIME = "Program end time: {time_str}"
    MSG_PROGRAM_EXECUTION_TIME = "Program execution time: {time_str}"
    MSG_COUNTERS = "Counters: {counters}"

    def __init__(self, cfg: FotConfig, name: str = "FOT"):
        self.cfg = cfg
        self.name = name
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)
        self.config_mngr = ConfigMngr()
        self.datasets = DatasetMngr()
        self._hashes: Dict[str, str] = {}
        self._split: Optional[SplitConfig] = None
        self._registry: Optional[SampleRegistry] = None
        self._saliency: Optional[SaliencyMngr] = None
        self._processed: Optional[Tuple[List[ImageSample], Dict[str, SaliencyMap]]] = None

    # ------------------------------------------------------------------ stages

    def upstream(self, stage: str) -> Tuple[str, ...]:
        if stage == EXTRACT:
            return ()
        if stage in (TRAIN_BASE, MINE):
            return (EXTRACT,)
        if stage == TRAIN_GEN:
            return (TRAIN_BASE, MINE)
        if stage == EVAL and not self.cfg.use_generator:
            return (EXTRACT, TRAIN_BASE)
        return (EXTRACT, TRAIN_BASE, MINE, TRAIN_GEN)

    def stage_hash(self, stage: str) -> str:
        if stage not in self._hashes:
            self._hashes[stage] = self.config_mngr.hash(
                self.cfg,
                STAGE_KEYS[stage],
                [self.stage_hash(parent) for parent in self.upstream(stage)],
            )
        return self._hashes[stage]

    def stage_dir(self, stage: str) -> str:
        return os.path.join(self.cfg.work_dir, f"{stage}-{self.stage_hash(stage)}")

    def is_done(self, stage: str) -> bool:
        return os.path.isfile(os.path.join(self.stage_dir(stage), DONE_MARKER))

    def _foreign_outputs(self, stage: str) -> List[str]:
        """Finished outputs of `stage` produced under another config."""
        if not os.path.isdir(self.cfg.work_dir):
            return []
        own = os.path.basename(self.stage_dir(stage))
        return sorted(
            entry.name
            for entry in Path(self.cfg.work_dir).iterdir()
            if entry.is_dir()
            and entry.name.startswith(f"{stage}-")
            and entry.name != own
            and (entry / DONE_MARKER).is_file()
        )

    def require(self, stage: str, consumer: str):
        """Refuses to go on when `stage` has no output for the current config."""
        if self.is_done(stage):
            return
        foreign = self._foreign_outputs(stage)
        if foreign:
            raise StageError(
                consumer,
                f"outputs of '{stage}' ({foreign[-1]}) were produced under a different config "
                f"(current {self.stage_hash(stage)}); rerun '{stage}'",
            )
        raise StageError(consumer, f"stage '{stage}' has not been run for this config")

    def execute(self, stage: str, action: Callable[[str], None], force: bool = False) -> str:
        """
        Runs `action(stage_dir)` unless the stage is already sealed. A stage
        directory left without a marker is treated as an interrupted run and
        cleared first. Failures are re-raised as `StageError`.
        """
        path = self.stage_dir(stage)
        if self.is_done(stage) and not force:
            self.logger.info(
                self.MSG_STAGE_SKIPPED.format(stage=stage, config_hash=self.stage_hash(stage))
            )
            return path

        self.logger.delimiter(
            text=self.MSG_STAGE_START.format(stage=stage.upper()),
            color=self.LOG_DELIMITER_COLOR_STAGE,
        )
        self.logger.info(self.MSG_STAGE_DIR.format(path=path), color=self.LOG_INFO_COLOR_PATH)
        if os.path.isdir(path):
            self.file_manager.remove_directory(path)
        os.makedirs(path, exist_ok=True)

        with self.time_utils.stopwatch() as elapsed:
            try:
                for parent in self.upstream(stage):
                    self.require(parent, stage)
                action(path)
            except StageError:
                raise
            except (FotError, ValueError, LookupError, RuntimeError, OSError) as error:
                self._handle_exception(error, self.MSG_STAGE_ERROR.format(stage=stage, reason=error))
                raise StageError(stage, str(error)) from error
        self.file_manager.write_lines(
            os.path.join(path, DONE_MARKER),
            [f"hash = {self.stage_hash(stage)}"]
            + self.config_mngr.render(self.cfg, STAGE_KEYS[stage]),
        )
        self.logger.info(
            self.MSG_STAGE_EXECUTION_TIME.format(
                stage=stage, time_str=self.time_utils.format_time_m_s(elapsed[0])
            ),
            color=self.LOG_INFO_COLOR_TIME,
        )
        return path

    def _handle_exception(self, error: Exception, message: str):
        self.logger.error(message)
        self.logger.debug("".join(traceback.format_exception(type(error), error, error.__traceback__)))

    # --------------------------------------------------------------- data access

    @property
    def flags(self) -> VariantFlags:
        return VariantFlags(
            remove_background=self.cfg.remove_background,
            resize_foreground=self.cfg.resize_foreground,
            use_generator=self.cfg.use_generator,
            transductive=self.cfg.transductive,
        )

    def split(self) -> SplitConfig:
        if self._split is None:
            if self.cfg.split_file and os.path.isfile(self.cfg.split_file):
                self._split = self.datasets.load_split(self.cfg.split_file)
            else:
                names = self.datasets.class_names_on_disk(self.cfg.data_dir)
                counts = (self.cfg.n_base, self.cfg.n_val, self.cfg.n_novel)
                if not any(counts):
                    counts = self.datasets.default_split_counts(self.cfg.dataset, len(names))
                self._split = self.datasets.make_split(names, counts, self.cfg.split_seed)
        return self._split

    def registry(self) -> SampleRegistry:
        if self._registry is None:
            if not self.cfg.data_dir:
                raise StageError(EXTRACT, "data_dir is not configured")
            self._registry = self.datasets.load_dataset(self.cfg.data_dir, self.split())
        return self._registry

    def saliency(self) -> SaliencyMngr:
        if self._saliency is None:
            store = SaliencyStore(self.cfg.saliency_dir or None)
            backend = None
            if self.cfg.sod_model:
                backend = TorchModelSaliencyBackend.fromFile(self.cfg.sod_model, device=self.cfg.device)
            self._saliency = SaliencyMngr(store, backend)
        return self._saliency

    def processed_base(self) -> Tuple[List[ImageSample], Dict[str, SaliencyMap]]:
        """Processed base samples and their carried maps, read back from the extract stage."""
        if self._processed is None:
            root = self.stage_dir(EXTRACT)
            stage = stage_for(self.flags)
            samples, maps = [], {}
            for sample in self.registry().getSamplesOfRole(SplitRole.BASE):
                relative = PurePosixPath(sample.source_id)
                parts = (*relative.parent.parts, f"{relative.stem}.png")
                pixels = self.file_manager.load_image(os.path.join(root, IMAGES_DIR, *parts))
                processed = sample.withPixels(pixels, stage)
                samples.append(processed)
                map_path = os.path.join(root, MAPS_DIR, *parts)
                if os.path.isfile(map_path):
                    maps[processed.identifier] = SaliencyMap(
                        processed.identifier, self.file_manager.load_grayscale(map_path)
                    )
            self._processed = samples, maps
        return self._processed

    def _device(self) -> torch.device:
        return torch.device(self.cfg.device)

    def load_base_networks(self) -> Tuple[FeatureExtractor, CosineClassifier, Dict[int, int]]:
        samples, _ = self.processed_base()
        labels = label_mapping(samples)
        extractor = build_feature_extractor(self.cfg)
        classifier = build_classifier(self.cfg, extractor.feature_dim, len(labels))
        root, config_hash = self.stage_dir(TRAIN_BASE), self.stage_hash(TRAIN_BASE)
        load_checkpoint(os.path.join(root, EXTRACTOR_CHECKPOINT), extractor, self.cfg.backbone.value, config_hash)
        load_checkpoint(os.path.join(root, CLASSIFIER_CHECKPOINT), classifier, CLASSIFIER_TAG, config_hash)
        extractor.to(self._device()).eval()
        classifier.to(self._device()).eval()
        return extractor, classifier, labels

    def load_generator(self) -> PostureGenerator:
        generator = build_generator(self.cfg)
        load_checkpoint(
            os.path.join(self.stage_dir(TRAIN_GEN), GENERATOR_CHECKPOINT),
            generator,
            GENERATOR_TAG,
            self.stage_hash(TRAIN_GEN),
        )
        return generator.to(self._device()).eval()

    def load_quadruplets(self) -> List[Quadruplet]:
        samples, _ = self.processed_base()
        class_of = {sample.identifier: sample.class_id for sample in samples}
        return QuadrupletMiner(self.cfg.miner_config()).load_manifest(
            os.path.join(self.stage_dir(MINE), MANIFEST_FILE), class_of
        )

    def components(self, flags: VariantFlags) -> PipelineComponents:
        extractor, _, _ = self.load_base_networks()
        needs_saliency = flags.remove_background or flags.use_generator
        components = PipelineComponents(
            solver=FinetuneSolver(extractor, self.cfg),
            extractor_cfg=self.cfg.extractor_config(),
            saliency=self.saliency() if needs_saliency else None,
            k_generated=self.cfg.resolved_k(),
        )
        if flags.use_generator:
            samples, maps = self.processed_base()
            components.generator = self.load_generator()
            components.partners = PartnerFinder(
                self.load_quadruplets(), maps, self.cfg.miner_config().match_size
            )
            components.base_images = {sample.identifier: sample.pixels for sample in samples}
        return components

    def evaluator(self, flags: VariantFlags) -> Evaluator:
        return Evaluator(
            self.components(flags),
            self.cfg.n_way,
            self.cfg.k_shot,
            self.cfg.n_query,
            self.cfg.dataset,
            self.cfg.eval_workers,
        )

    # ------------------------------------------------------------ stage bodies

    def _extract(self, path: str):
        split = self.split()
        self.datasets.save_split(os.path.join(path, SPLIT_FILE), split)
        extractor = ForegroundExtractor(self.cfg.extractor_config(), self.saliency())
        base = self.registry().getSamplesOfRole(SplitRole.BASE)
        if not base:
            raise StageError(EXTRACT, "the split holds no base samples")
        extractor.write_processed(
            base, self.flags, os.path.join(path, IMAGES_DIR), os.path.join(path, MAPS_DIR)
        )
        self._processed = None

    def _train_base(self, path: str):
        samples, _ = self.processed_base()
        seed_everything(self.cfg.seed)
        extractor = build_feature_extractor(self.cfg).to(self._device())
        labels = label_mapping(samples)
        classifier = build_classifier(self.cfg, extractor.feature_dim, len(labels)).to(self._device())
        history = BaseTrainer(self.cfg).train_base(samples, extractor, classifier)
        config_hash = self.stage_hash(TRAIN_BASE)
        meta = {"classes": len(labels), "final_loss": history[-1] if history else None}
        save_checkpoint(os.path.join(path, EXTRACTOR_CHECKPOINT), extractor, self.cfg.backbone.value, config_hash, meta)
        save_checkpoint(os.path.join(path, CLASSIFIER_CHECKPOINT), classifier, CLASSIFIER_TAG, config_hash, meta)
        self.file_manager.write_lines(os.path.join(path, "history.txt"), (f"{loss:.6f}" for loss in history))

    def _mine(self, path: str):
        samples, maps = self.processed_base()
        miner = QuadrupletMiner(self.cfg.miner_config())
        quadruplets = miner.mine_quadruplets(samples, maps)
        miner.save_manifest(os.path.join(path, MANIFEST_FILE), quadruplets)

    def _train_gen(self, path: str):
        samples, _ = self.processed_base()
        extractor, classifier, labels = self.load_base_networks()
        seed_everything(self.cfg.seed)
        generator = build_generator(self.cfg).to(self._device())
        history = GeneratorTrainer(self.cfg).train_generator(
            self.load_quadruplets(),
            {sample.identifier: sample.pixels for sample in samples},
            labels,
            extractor,
            classifier,
            generator,
        )
        meta = {"final_loss": history.losses[-1] if history.losses else None}
        save_checkpoint(
            os.path.join(path, GENERATOR_CHECKPOINT),
            generator,
            GENERATOR_TAG,
            self.stage_hash(TRAIN_GEN),
            meta,
        )
        self.file_manager.write_lines(
            os.path.join(path, "history.txt"),
            (f"{loss:.6f},{mse:.6f}" for loss, mse in zip(history.losses, history.mse)),
        )

    def _write_reports(self, path: str, reports: Sequence[EvalReport]):
        table = format_report_table(reports)
        self.file_manager.write_lines(os.path.join(path, REPORT_FILE), (r.to_line() for r in reports))
        self.file_manager.write_lines(os.path.join(path, TABLE_FILE), table.splitlines())
        if self.cfg.results_file:
            write_report(reports, self.cfg.results_file)

    def _eval(self, path: str):
        report = self.evaluator(self.flags).evaluate(
            self.registry(), self.flags, self.cfg.n_episodes, self.cfg.seed
        )
        self._write_reports(path, [report])

    def _ablate(self, path: str):
        grid = VariantFlags.ablation_grid(self.cfg.transductive)
        evaluator = self.evaluator(grid[-1])
        reports = evaluator.ablate(self.registry(), grid, self.cfg.n_episodes, self.cfg.seed)
        self._write_reports(path, reports)

    # ----------------------------------------------------------- entry points

    def _framed(self, title: str, body: Callable[[], None]):
        self.logger.delimiter(
            text=self.MSG_TOOL_START.format(tool_name=f"{self.name} {title}".upper()),
            color=self.LOG_DELIMITER_COLOR_MAIN,
        )
        start_time = time.time()
        self.logger.info(
            self.MSG_PROGRAM_START_TIME.format(time_str=self.time_utils.format_time_h_m_s(start_time)),
            color=self.LOG_INFO_COLOR_TIME,
        )
        failed = False
        try:
            body()
        except Exception:
            failed = True
            raise
        finally:
            end_time = time.time()
            self.logger.info(
                self.MSG_PROGRAM_END_TIME.format(time_str=self.time_utils.format_time_h_m_s(end_time)),
                color=self.LOG_INFO_COLOR_TIME,
            )
            self.logger.info(
                self.MSG_PROGRAM_EXECUTION_TIME.format(
                    time_str=self.time_utils.format_time_m_s(end_time - start_time)
                ),
                color=self.LOG_INFO_COLOR_TIME,
            )
            counters = Counters().snapshot()
            if counters:
                self.logger.info(self.MSG_COUNTERS.format(counters=counters))
            self.logger.delimiter(
                text=self.MSG_PIPELINE_FAILED if failed else self.MSG_PIPELINE_SUCCESS,
                color=self.LOG_DELIMITER_COLOR_ERROR if failed else self.LOG_DELIMITER_COLOR_MAIN,
            )

    def stages(self) -> List[str]:
        """Stage order of a full run; mining and generator training need the generator flag."""
        if self.cfg.use_generator:
            return [EXTRACT, TRAIN_BASE, MINE, TRAIN_GEN, EVAL]
        return [EXTRACT, TRAIN_BASE, EVAL]

    def run_stage(self, stage: str, force: bool = False) -> str:
        actions = {
            EXTRACT: self._extract,
            TRAIN_BASE: self._train_base,
            MINE: self._mine,
            TRAIN_GEN: self._train_gen,
            EVAL: self._eval,
            ABLATE: self._ablate,
        }
        if stage in (MINE, TRAIN_GEN) and not self.cfg.use_generator:
            raise StageError(stage, "use_generator is off; the stage has no consumer")
        return self.execute(stage, actions[stage], force)

    def run_pipeline(self) -> str:
        """Runs every stage not yet done and returns the printed report table."""
        outcome: List[str] = []

        def body():
            for stage in self.stages():
                self.run_stage(stage)
            outcome.append(self.read_table(EVAL))

        self._framed("run", body)
        return outcome[0]

    def run_single(self, stage: str, force: bool = False) -> str:
        outcome: List[str] = []
        self._framed(stage, lambda: outcome.append(self.run_stage(stage, force)))
        return outcome[0]

    def read_table(self, stage: str) -> str:
        with open(os.path.join(self.stage_dir(stage), TABLE_FILE), "r", encoding="utf-8") as handle:
            return handle.read().rstrip("\n")

    # -------------------------------------------------- standalone outputs

    def extract_to(self, out_dir: str) -> int:
        """
        Processes every split, not only the base classes, into `out_dir`
        mirroring `<class>/<file>`. No stage directory is involved.
        """
        samples = list(self.registry())
        if not samples:
            raise StageError(EXTRACT, f"no images found under '{self.cfg.data_dir}'")
        extractor = ForegroundExtractor(self.cfg.extractor_config(), self.saliency())
        written: List[int] = []
        self._framed(EXTRACT, lambda: written.append(extractor.write_processed(samples, self.flags, out_dir)))
        return written[0]

    def mine_to(self, manifest_path: str) -> List[Quadruplet]:
        """Extracts the base classes in memory and writes the mined manifest to `manifest_path`."""
        base = self.registry().getSamplesOfRole(SplitRole.BASE)
        if not base:
            raise StageError(MINE, "the split holds no base samples")
        # mining always needs the carried saliency maps
        flags = VariantFlags(self.cfg.remove_background, self.cfg.resize_foreground, use_generator=True)
        extractor = ForegroundExtractor(self.cfg.extractor_config(), self.saliency())
        miner = QuadrupletMiner(self.cfg.miner_config())
        mined: List[Quadruplet] = []

        def body():
            processed = extractor.process_all(base, flags)
            maps = {saliency_map.identifier: saliency_map for _, saliency_map in processed if saliency_map is not None}
            mined.extend(miner.mine_quadruplets([sample for sample, _ in processed], maps))
            miner.save_manifest(manifest_path, mined)

        self._framed(MINE, body)
        return mined

    # ------------------------------------------------------ single episodes

    def augment_episode(self, seed: int, out_dir: str) -> List[ImageSample]:
        """Writes the processed and augmented support set of one episode."""
        for parent in (EXTRACT, TRAIN_BASE, MINE, TRAIN_GEN):
            self.require(parent, "augment")
        components = self.components(self.flags)
        episode = sample_episode(self.registry(), self.cfg.n_way, self.cfg.k_shot, self.cfg.n_query, seed)
        evaluator = Evaluator(components, episode.n_way, episode.k_shot, episode.n_query)
        support, maps = [], {}
        for sample in episode.support:
            processed, processed_map = evaluator.prepare(sample, self.flags)
            support.append(processed)
            maps[processed.identifier] = processed_map
        augmenter = SupportAugmenter(components.generator, components.partners, components.base_images)
        augmented = augmenter.augment_support(support, maps, components.k_generated, seed=seed)
        self.file_manager.prepare_output_directory(out_dir, force=True)
        for sample in augmented:
            label = episode.label_map[sample.class_id]
            name = sample.identifier.replace("/", "_").replace("@", "-")
            self.file_manager.save_image(os.path.join(out_dir, f"{label}", f"{name}.png"), sample.pixels)
        self.logger.info(f"Wrote {len(augmented)} support samples of episode {seed} to '{out_dir}'")
        return augmented

    def finetune_episode(self, seed: int) -> float:
        """Fine-tunes on one episode and returns its query accuracy."""
        for parent in self.upstream(EVAL):
            self.require(parent, "finetune")
        episode = sample_episode(self.registry(), self.cfg.n_way, self.cfg.k_shot, self.cfg.n_query, seed)
        accuracy = self.evaluator(self.flags).run_episode(episode, self.flags)
        self.logger.info(f"Episode {seed} ({self.flags.name}): accuracy {100 * accuracy:.2f}%")
        return accuracy

