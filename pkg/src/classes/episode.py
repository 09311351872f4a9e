import hashlib
from dataclasses import dataclass
from typing import Dict, List

import torch

from ..classes.image_sample import ImageSample


@dataclass
class Episode:
    """One N-way K-shot task drawn from the novel classes."""

    n_way: int
    k_shot: int
    n_query: int
    support: List[ImageSample]
    query: List[ImageSample]
    label_map: Dict[int, int]
    seed: int = 0

    def support_labels(self) -> torch.Tensor:
        return torch.tensor(
            [self.label_map[sample.class_id] for sample in self.support],
            dtype=torch.long,
        )

    def query_labels(self) -> torch.Tensor:
        return torch.tensor(
            [self.label_map[sample.class_id] for sample in self.query],
            dtype=torch.long,
        )

    def fingerprint(self) -> str:
        """Short digest of the support and query ids, used to pair ablation runs."""
        digest = hashlib.sha1()
        for sample in self.support:
            digest.update(sample.identifier.encode("utf-8") + b"\x00")
        digest.update(b"|")
        for sample in self.query:
            digest.update(sample.identifier.encode("utf-8") + b"\x00")
        return digest.hexdigest()[:16]
