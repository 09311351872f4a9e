from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple

import torch
from PIL import Image

from ..classes.basic import Basic, BasicArray
from ..classes.element_types import SampleStage, SplitRole
from ..classes.split import SplitConfig
from ..utils.file_manager import FilesMngr


class ImageSample(Basic):
    """
    A labeled image. Pixels are a channels-first float tensor in [0, 1].

    Samples registered from disk keep only their `source_path` and decode the
    file on every `pixels` access; processed and generated samples carry their
    tensor directly.
    """

    def __init__(
        self,
        identifier: str,
        class_id: int,
        split_role: SplitRole,
        pixels: Optional[torch.Tensor] = None,
        source_path: Optional[str] = None,
        class_name: str = "",
        synthetic: bool = False,
        stage: SampleStage = SampleStage.RAW,
        source_id: Optional[str] = None,
    ):
        """
        Args:
            identifier (str): Dataset-unique id, `<class_name>/<file_name>` for disk samples.
            class_id (int): Registry class id.
            split_role (SplitRole): Partition the class belongs to.
            pixels (torch.Tensor, optional): C x H x W tensor; required when no `source_path`.
            source_path (str, optional): Image file decoded lazily.
            class_name (str): Directory name of the class.
            synthetic (bool): True for generator output.
            stage (SampleStage): Processing stage the pixels are at.
            source_id (str, optional): Id of the raw sample this one was derived from.
        """
        super().__init__(identifier)
        if pixels is None and source_path is None:
            raise ValueError(f"Sample '{identifier}' needs pixels or a source path")
        if pixels is not None:
            validate_pixels(pixels, identifier)
        self.class_id: int = class_id
        self.split_role: SplitRole = split_role
        self.class_name: str = class_name
        self.source_path: Optional[str] = source_path
        self.synthetic: bool = synthetic
        self.stage: SampleStage = stage
        self.source_id: str = source_id or identifier
        self._pixels: Optional[torch.Tensor] = pixels

    @property
    def pixels(self) -> torch.Tensor:
        if self._pixels is not None:
            return self._pixels
        pixels = FilesMngr().load_image(self.source_path)
        validate_pixels(pixels, self.identifier)
        return pixels

    @property
    def size(self) -> Tuple[int, int]:
        """(height, width) without decoding the pixel data of disk samples."""
        if self._pixels is not None:
            return int(self._pixels.shape[1]), int(self._pixels.shape[2])
        with Image.open(self.source_path) as image:
            width, height = image.size
        return height, width

    def withPixels(
        self, pixels: torch.Tensor, stage: SampleStage, synthetic: Optional[bool] = None
    ) -> "ImageSample":
        """
        Returns a derived sample carrying `pixels`. The id gets a stage tag;
        class and split role are preserved.
        """
        return ImageSample(
            identifier=f"{self.source_id}@{stage.tag}",
            class_id=self.class_id,
            split_role=self.split_role,
            pixels=pixels,
            class_name=self.class_name,
            synthetic=self.synthetic if synthetic is None else synthetic,
            stage=stage,
            source_id=self.source_id,
        )

    def __repr__(self) -> str:
        return (
            f"ImageSample(identifier={self.identifier!r}, class_id={self.class_id}, "
            f"split_role={self.split_role.value!r}, stage={self.stage.tag!r}, "
            f"synthetic={self.synthetic})"
        )


def validate_pixels(pixels: torch.Tensor, identifier: str = "") -> None:
    if pixels.dim() != 3 or min(pixels.shape) <= 0:
        raise ValueError(
            f"Sample '{identifier}' must be a non-empty C x H x W tensor, got {tuple(pixels.shape)}"
        )
    if not torch.isfinite(pixels).all():
        raise ValueError(f"Sample '{identifier}' has non-finite pixels")


class SampleRegistry(BasicArray[ImageSample]):
    """
    Dataset registry: every sample of a dataset root with its split role.
    Immutable after loading.
    """

    def __init__(self, split: SplitConfig, root: str = ""):
        super().__init__(ImageSample)
        self.split: SplitConfig = split
        self.root: str = root
        self.skipped: int = 0
        self._by_class: Dict[int, List[ImageSample]] = defaultdict(list)

    def addElement(self, new_element: ImageSample) -> int:
        expected_role = self.split.role_of(new_element.class_id)
        if new_element.split_role is not expected_role:
            raise ValueError(
                f"Sample '{new_element.identifier}' has role {new_element.split_role.value} "
                f"but class {new_element.class_id} is {expected_role.value}"
            )
        index = super().addElement(new_element)
        self._by_class[new_element.class_id].append(new_element)
        return index

    def getSamplesOfClass(self, class_id: int) -> List[ImageSample]:
        return list(self._by_class.get(class_id, []))

    def getClassIds(self, role: Optional[SplitRole] = None) -> List[int]:
        """Class ids present in the registry, ascending, optionally of one role."""
        return sorted(
            class_id
            for class_id, samples in self._by_class.items()
            if samples and (role is None or self.split.role_of(class_id) is role)
        )

    def getSamplesOfRole(self, role: SplitRole) -> List[ImageSample]:
        return self.filter(lambda sample: sample.split_role is role)

    def className(self, class_id: int) -> str:
        return self.split.class_names[class_id]

    @classmethod
    def fromSamples(
        cls, split: SplitConfig, samples: Sequence[ImageSample], root: str = ""
    ) -> "SampleRegistry":
        registry = cls(split, root)
        for sample in samples:
            registry.addElement(sample)
        return registry.freeze()
