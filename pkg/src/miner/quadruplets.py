import math
import random
from collections import defaultdict
from typing import Dict, List, Mapping, Sequence, Tuple

import torch

from ..classes.configs import MinerConfig
from ..classes.errors import DatasetError
from ..classes.image_sample import ImageSample
from ..classes.quadruplet import Quadruplet
from ..classes.saliency import SaliencyMap
from ..logger.logger import Logger, LoggerManager
from ..saliency.store import resize_map
from ..utils.counters import Counters, CounterTypes
from ..utils.file_manager import FilesMngr


def flatten_map(saliency_map: SaliencyMap, match_size: Tuple[int, int]) -> torch.Tensor:
    """The map resized to `match_size`, as a float64 vector."""
    return resize_map(saliency_map, match_size).values.reshape(-1).double()


def row_distances(query: torch.Tensor, matrix: torch.Tensor) -> torch.Tensor:
    """Euclidean distance from `query` (D) to every row of `matrix` (n x D)."""
    return torch.sqrt(((matrix - query) ** 2).sum(dim=1))


def saliency_distance(
    m1: SaliencyMap, m2: SaliencyMap, match_size: Tuple[int, int] = (64, 64)
) -> float:
    """Euclidean distance between two maps after resizing both to `match_size`."""
    return float(
        row_distances(flatten_map(m1, match_size), flatten_map(m2, match_size).unsqueeze(0))[0]
    )


class MapIndex:
    """
    Flattened maps of a fixed set of samples, rows ordered by ascending id so
    that a stable sort on distance breaks ties by id.
    """

    def __init__(
        self,
        maps: Mapping[str, SaliencyMap],
        class_of: Mapping[str, int],
        match_size: Tuple[int, int],
    ):
        self.ids: List[str] = sorted(class_of)
        missing = [identifier for identifier in self.ids if identifier not in maps]
        if missing:
            raise DatasetError(f"no saliency map for sample '{missing[0]}'")
        self.position: Dict[str, int] = {identifier: i for i, identifier in enumerate(self.ids)}
        self.classes = torch.tensor([class_of[i] for i in self.ids], dtype=torch.long)
        self.match_size = match_size
        self.matrix = torch.stack([flatten_map(maps[i], match_size) for i in self.ids])

    def distances_from(self, identifier: str) -> torch.Tensor:
        return row_distances(self.matrix[self.position[identifier]], self.matrix)

    def distances_to(self, saliency_map: SaliencyMap) -> torch.Tensor:
        return row_distances(flatten_map(saliency_map, self.match_size), self.matrix)

    @staticmethod
    def nearest(distances: torch.Tensor, allowed: torch.Tensor, k: int) -> List[int]:
        """Row indices of the `k` smallest allowed distances, ties by id."""
        candidates = torch.nonzero(allowed).flatten()
        order = torch.sort(distances[candidates], stable=True).indices[:k]
        return candidates[order].tolist()


def _pair_from_index(members: Sequence[str], index: int) -> Tuple[str, str]:
    """Decodes an index in [0, n(n-1)) into an ordered pair of distinct members."""
    first, rest = divmod(index, len(members) - 1)
    second = rest if rest < first else rest + 1
    return members[first], members[second]


class QuadrupletMiner:
    """Builds the generator training set by saliency map matching."""

    counters = Counters()
    file_manager = FilesMngr()

    def __init__(self, cfg: MinerConfig):
        self.cfg = cfg
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)

    def pair_budget(self, n_classes: int) -> int:
        if self.cfg.pairs_per_class is not None:
            return self.cfg.pairs_per_class
        return max(1, math.ceil(self.cfg.target_count / (n_classes * self.cfg.top_m)))

    def mine_quadruplets(
        self, samples: Sequence[ImageSample], maps: Mapping[str, SaliencyMap]
    ) -> List[Quadruplet]:
        """
        For every sampled same-class pair (A1, A2): the `top_m` samples of other
        classes closest to A1 become B1 candidates, and for each B1 the sample
        of B1's class (other than B1) closest to A2 becomes B2. Classes with a
        single sample cannot form pairs and are skipped.
        """
        by_class: Dict[int, List[str]] = defaultdict(list)
        for sample in samples:
            by_class[sample.class_id].append(sample.identifier)
        eligible = sorted(c for c, members in by_class.items() if len(members) >= 2)
        for class_id in sorted(set(by_class) - set(eligible)):
            self.logger.warning(f"Base class {class_id} has a single sample; skipped")
            self.counters.increase(CounterTypes.SKIPPED_MINER_CLASSES)
        if len(eligible) < 2:
            raise DatasetError(
                "mining needs at least 2 base classes holding 2 or more samples each"
            )

        class_of = {i: c for c in eligible for i in by_class[c]}
        index = MapIndex(maps, class_of, self.cfg.match_size)
        budget = self.pair_budget(len(eligible))
        rng = random.Random(self.cfg.seed)
        row_ids = torch.arange(len(index.ids))

        quadruplets: List[Quadruplet] = []
        for class_a in eligible:
            members = sorted(by_class[class_a])
            n_pairs = len(members) * (len(members) - 1)
            picked = sorted(rng.sample(range(n_pairs), min(budget, n_pairs)))
            other_class = index.classes != class_a
            row_cache: Dict[str, torch.Tensor] = {}

            def distances(identifier: str) -> torch.Tensor:
                if identifier not in row_cache:
                    row_cache[identifier] = index.distances_from(identifier)
                return row_cache[identifier]

            for pair_index in picked:
                a1, a2 = _pair_from_index(members, pair_index)
                for b1 in index.nearest(distances(a1), other_class, self.cfg.top_m):
                    class_b = int(index.classes[b1])
                    allowed = (index.classes == class_b) & (row_ids != b1)
                    b2 = index.nearest(distances(a2), allowed, 1)[0]
                    quadruplets.append(
                        Quadruplet(a1, a2, index.ids[b1], index.ids[b2], class_a, class_b)
                    )

        if len(quadruplets) > self.cfg.target_count:
            keep = sorted(rng.sample(range(len(quadruplets)), self.cfg.target_count))
            quadruplets = [quadruplets[i] for i in keep]
        self.logger.info(
            f"Mined {len(quadruplets)} quadruplets over {len(eligible)} base classes "
            f"({budget} pairs per class at most)"
        )
        return quadruplets

    def save_manifest(self, path: str, quadruplets: Sequence[Quadruplet]):
        self.file_manager.write_lines(path, (q.to_line() for q in quadruplets))

    def load_manifest(self, path: str, class_of: Mapping[str, int]) -> List[Quadruplet]:
        return [Quadruplet.from_line(line, class_of) for line in self.file_manager.read_lines(path)]


class PartnerFinder:
    """
    Posture partners for novel samples: base samples X1 that appear as A1 in
    the quadruplet set, ranked by saliency distance, each paired with an A2
    drawn from the quadruplets starting at it.
    """

    def __init__(
        self,
        quadruplets: Sequence[Quadruplet],
        base_maps: Mapping[str, SaliencyMap],
        match_size: Tuple[int, int] = (64, 64),
    ):
        if not quadruplets:
            raise DatasetError("no quadruplets to draw posture partners from; run mining first")
        self.transforms: Dict[str, List[str]] = defaultdict(list)
        for quadruplet in quadruplets:
            self.transforms[quadruplet.a1].append(quadruplet.a2)
        class_of = {quadruplet.a1: quadruplet.class_a for quadruplet in quadruplets}
        self.index = MapIndex(base_maps, class_of, match_size)

    def find(self, novel_map: SaliencyMap, count: int, seed: int = 0) -> List[Tuple[str, str]]:
        if count <= 0:
            return []
        distances = self.index.distances_to(novel_map)
        ranked = MapIndex.nearest(distances, torch.ones_like(distances, dtype=torch.bool), len(distances))
        rng = random.Random(seed)
        pairs = []
        for i in range(count):
            x1 = self.index.ids[ranked[i % len(ranked)]]
            pairs.append((x1, rng.choice(self.transforms[x1])))
        return pairs


def find_posture_partners(
    novel_map: SaliencyMap,
    base_maps: Mapping[str, SaliencyMap],
    quadruplets: Sequence[Quadruplet],
    count: int,
    seed: int = 0,
    match_size: Tuple[int, int] = (64, 64),
) -> List[Tuple[str, str]]:
    """
    `count` (X1, X2) pairs for a novel sample: X1 walks the A1 entries of
    `quadruplets` from the closest map outward, X2 is drawn uniformly from the
    entries of `quadruplets` starting at X1.
    """
    return PartnerFinder(quadruplets, base_maps, match_size).find(novel_map, count, seed)
