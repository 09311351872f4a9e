import os
import random
from typing import Dict, Sequence, Tuple

from ..classes.element_types import SplitRole
from ..classes.errors import ConfigError
from ..classes.image_sample import ImageSample, SampleRegistry
from ..classes.split import SplitConfig
from ..logger.logger import Logger, LoggerManager
from ..utils.counters import Counters, CounterTypes
from ..utils.file_manager import FilesMngr, decode_row, encode_row

# (base, val, novel) class counts of the standard benchmark splits
DATASET_SPLITS: Dict[str, Tuple[int, int, int]] = {
    "cub": (120, 30, 50),
    "dogs": (70, 20, 30),
    "cars": (130, 17, 49),
    "miniimagenet": (64, 16, 20),
}


class DatasetMngr:
    """Class splits, split files and dataset registries."""

    counters = Counters()
    file_manager = FilesMngr()

    def __init__(self):
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)

    def make_split(
        self, class_names: Sequence[str], counts: Tuple[int, int, int], seed: int
    ) -> SplitConfig:
        """
        Randomly partitions `class_names` into base / val / novel classes of the
        given sizes. Class ids follow the lexicographic order of the names, the
        permutation depends only on `seed`.
        """
        names = tuple(sorted(class_names))
        n_base, n_val, n_novel = counts
        if min(counts) < 0:
            raise ConfigError(f"Split counts must be non-negative, got {counts}")
        if n_base + n_val + n_novel != len(names):
            raise ConfigError(
                f"Split counts {n_base}+{n_val}+{n_novel} do not match "
                f"{len(names)} classes"
            )
        order = list(range(len(names)))
        random.Random(seed).shuffle(order)
        return SplitConfig(
            class_names=names,
            base_classes=frozenset(order[:n_base]),
            val_classes=frozenset(order[n_base : n_base + n_val]),
            novel_classes=frozenset(order[n_base + n_val :]),
        )

    def default_split_counts(self, dataset: str, n_classes: int) -> Tuple[int, int, int]:
        """
        Standard counts for the known benchmarks; other datasets get roughly
        60/15/25 percent with at least five novel classes where possible.
        """
        key = dataset.lower().replace("-", "").replace("_", "")
        if key in DATASET_SPLITS:
            counts = DATASET_SPLITS[key]
            if sum(counts) != n_classes:
                raise ConfigError(
                    f"Dataset '{dataset}' expects {sum(counts)} classes, found {n_classes}"
                )
            return counts

        n_novel = min(max(5, round(0.25 * n_classes)), n_classes)
        n_val = min(round(0.15 * n_classes), n_classes - n_novel)
        n_base = n_classes - n_novel - n_val
        if n_base < 1:
            raise ConfigError(f"{n_classes} classes are too few for a base/val/novel split")
        return n_base, n_val, n_novel

    def save_split(self, path: str, split: SplitConfig):
        self.file_manager.write_lines(
            path,
            (
                encode_row((name, split.role_of(class_id).value))
                for class_id, name in enumerate(split.class_names)
            ),
        )

    def load_split(self, path: str) -> SplitConfig:
        roles: Dict[str, SplitRole] = {}
        for line in self.file_manager.read_lines(path):
            fields = decode_row(line)
            if len(fields) != 2 or not fields[0]:
                raise ConfigError(f"Malformed split line {line!r} in '{path}'")
            name, role = fields
            try:
                roles[name] = SplitRole(role.lower())
            except ValueError:
                raise ConfigError(f"Unknown split role '{role}' in '{path}'") from None

        names = tuple(sorted(roles))
        by_role = {
            role: frozenset(i for i, name in enumerate(names) if roles[name] is role)
            for role in SplitRole
        }
        return SplitConfig(
            names, by_role[SplitRole.BASE], by_role[SplitRole.VAL], by_role[SplitRole.NOVEL]
        )

    def class_names_on_disk(self, root_path: str) -> list:
        self.file_manager.is_directory(root_path, "Dataset root")
        return self.file_manager.list_subdirectories(root_path)

    def load_dataset(self, root_path: str, split: SplitConfig) -> SampleRegistry:
        """
        Registers every image under `root/<class_name>/` with the split role of
        its class, ordered by (class name, file name). Unreadable files are
        skipped with a warning and counted in `registry.skipped`.
        """
        class_names = self.class_names_on_disk(root_path)
        for name in class_names:
            if name not in split.class_names:
                raise ConfigError(f"unassigned class '{name}' in dataset '{root_path}'")
        missing = sorted(set(split.class_names) - set(class_names))
        if missing:
            self.logger.warning(
                f"{len(missing)} split classes have no directory, e.g. '{missing[0]}'"
            )

        registry = SampleRegistry(split, root_path)
        for name in class_names:
            class_id = split.class_id(name)
            role = split.role_of(class_id)
            class_dir = os.path.join(root_path, name)
            for file_name in self.file_manager.list_image_files(class_dir):
                path = os.path.join(class_dir, file_name)
                if not self.file_manager.is_readable_image(path):
                    self.logger.warning(f"Skipping unreadable image '{path}'")
                    registry.skipped += 1
                    self.counters.increase(CounterTypes.SKIPPED_IMAGES)
                    continue
                registry.addElement(
                    ImageSample(
                        identifier=f"{name}/{file_name}",
                        class_id=class_id,
                        split_role=role,
                        source_path=path,
                        class_name=name,
                    )
                )
        registry.freeze()

        summary = ", ".join(
            f"{len(registry.getSamplesOfRole(role))} {role.value}" for role in SplitRole
        )
        self.logger.info(
            f"Loaded {len(registry)} samples from '{root_path}' ({summary}); "
            f"skipped {registry.skipped} unreadable"
        )
        return registry
