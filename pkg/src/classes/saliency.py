from dataclasses import dataclass
from typing import Tuple

import torch

from ..classes.basic import Basic


class SaliencyMap(Basic):
    """
    One-channel foreground relevance map of a sample, values in [0, 1].
    The identifier is the id of the source sample.
    """

    def __init__(self, source_id: str, values: torch.Tensor):
        super().__init__(source_id)
        if values.dim() == 2:
            values = values.unsqueeze(0)
        if values.dim() != 3 or values.shape[0] != 1 or min(values.shape) <= 0:
            raise ValueError(
                f"Saliency map of '{source_id}' must be 1 x H x W, got {tuple(values.shape)}"
            )
        if not torch.isfinite(values).all():
            raise ValueError(f"Saliency map of '{source_id}' has non-finite values")
        if values.min() < 0 or values.max() > 1:
            raise ValueError(f"Saliency map of '{source_id}' leaves [0, 1]")
        self.values: torch.Tensor = values

    @property
    def source_id(self) -> str:
        return self.identifier

    @property
    def size(self) -> Tuple[int, int]:
        return int(self.values.shape[1]), int(self.values.shape[2])


class BinaryMask:
    """Thresholded saliency: a 1 x H x W boolean tensor."""

    def __init__(self, bits: torch.Tensor):
        if bits.dim() != 3 or bits.shape[0] != 1:
            raise ValueError(f"Mask must be 1 x H x W, got {tuple(bits.shape)}")
        self.bits: torch.Tensor = bits.to(torch.bool)

    @property
    def size(self) -> Tuple[int, int]:
        return int(self.bits.shape[1]), int(self.bits.shape[2])

    def is_empty(self) -> bool:
        return not bool(self.bits.any())

    def as_float(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return self.bits.to(dtype)


@dataclass(frozen=True)
class BoundingBox:
    top: int
    left: int
    height: int
    width: int

    def __post_init__(self):
        if self.top < 0 or self.left < 0:
            raise ValueError(f"Bounding box origin must be non-negative: {self}")
        if self.height < 1 or self.width < 1:
            raise ValueError(f"Bounding box must be at least 1 x 1: {self}")

    @classmethod
    def full(cls, height: int, width: int) -> "BoundingBox":
        return cls(0, 0, height, width)

    def fits(self, height: int, width: int) -> bool:
        return self.top + self.height <= height and self.left + self.width <= width

    def crop(self, tensor: torch.Tensor) -> torch.Tensor:
        """Crops the last two dimensions of `tensor`."""
        if not self.fits(tensor.shape[-2], tensor.shape[-1]):
            raise ValueError(
                f"{self} does not fit an image of {tuple(tensor.shape[-2:])}"
            )
        return tensor[
            ..., self.top : self.top + self.height, self.left : self.left + self.width
        ]
