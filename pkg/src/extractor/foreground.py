import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import PurePosixPath
from typing import Iterable, List, Optional, Tuple

import torch
import torch.nn.functional as F

from ..classes.configs import ExtractorConfig
from ..classes.element_types import EmptyMaskPolicy, SampleStage
from ..classes.image_sample import ImageSample
from ..classes.report import VariantFlags
from ..classes.saliency import BinaryMask, BoundingBox, SaliencyMap
from ..logger.logger import Logger, LoggerManager
from ..saliency.store import SaliencyMngr
from ..utils.counters import Counters, CounterTypes
from ..utils.file_manager import FilesMngr


def threshold_saliency(saliency_map: SaliencyMap, beta: float) -> BinaryMask:
    """
    A pixel is foreground iff its channel-mean value, on the 0-255 scale, is
    at least `beta`. Maps are stored in [0, 1], so the comparison happens
    against beta / 255 in the map's own precision.
    """
    if not 0 <= beta <= 255:
        raise ValueError(f"beta must lie in [0, 255], got {beta}")
    values = saliency_map.values
    mean = values.mean(dim=0, keepdim=True)
    threshold = torch.tensor(beta / 255.0, dtype=mean.dtype)
    return BinaryMask(mean >= threshold)


def apply_mask(pixels: torch.Tensor, mask: BinaryMask) -> torch.Tensor:
    """Keeps pixels under the mask and blacks out the rest, on every channel."""
    if tuple(pixels.shape[-2:]) != mask.size:
        raise ValueError(
            f"mask of size {mask.size} does not match image of size {tuple(pixels.shape[-2:])}"
        )
    return pixels * mask.as_float(pixels.dtype)


def mask_bounding_box(
    mask: BinaryMask, empty_mask_policy: EmptyMaskPolicy = EmptyMaskPolicy.WHOLE_IMAGE
) -> BoundingBox:
    """Tightest axis-aligned box around the set bits."""
    height, width = mask.size
    if mask.is_empty():
        if empty_mask_policy is EmptyMaskPolicy.ERROR:
            raise ValueError("no salient region")
        Counters().increase(CounterTypes.EMPTY_MASKS)
        return BoundingBox.full(height, width)

    bits = mask.bits[0]
    rows = torch.nonzero(bits.any(dim=1)).flatten()
    cols = torch.nonzero(bits.any(dim=0)).flatten()
    top, bottom = int(rows[0]), int(rows[-1])
    left, right = int(cols[0]), int(cols[-1])
    return BoundingBox(top, left, bottom - top + 1, right - left + 1)


def zoom_in(
    cropped: torch.Tensor, output_size: Tuple[int, int], pad_to_square: bool = True
) -> torch.Tensor:
    """
    Resizes a C x h x w crop to `output_size` with bilinear interpolation.
    With `pad_to_square` the shorter side is first padded with black,
    centred, so the object keeps its aspect ratio.
    """
    _, height, width = cropped.shape
    if height < 1 or width < 1:
        raise ValueError("cannot zoom an empty crop")
    if pad_to_square and height != width:
        side = max(height, width)
        pad_top = (side - height) // 2
        pad_left = (side - width) // 2
        cropped = F.pad(
            cropped,
            (pad_left, side - width - pad_left, pad_top, side - height - pad_top),
            value=0.0,
        )
    if tuple(cropped.shape[-2:]) == tuple(output_size):
        return cropped
    return F.interpolate(
        cropped.unsqueeze(0), size=tuple(output_size), mode="bilinear", align_corners=False
    )[0]


def _process(
    pixels: torch.Tensor,
    saliency_map: Optional[SaliencyMap],
    cfg: ExtractorConfig,
    remove_background: bool,
    crop: bool,
) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
    """Shared routing of the three processing variants; also carries the map along."""
    if not remove_background:
        image = zoom_in(pixels, cfg.output_size, cfg.pad_to_square)
        if saliency_map is None:
            return image, None
        return image, zoom_in(saliency_map.values, cfg.output_size, cfg.pad_to_square)

    mask = threshold_saliency(saliency_map, cfg.beta)
    masked = apply_mask(pixels, mask)
    masked_map = apply_mask(saliency_map.values, mask)
    box = (
        mask_bounding_box(mask, cfg.empty_mask_policy)
        if crop
        else BoundingBox.full(*mask.size)
    )
    image = zoom_in(box.crop(masked), cfg.output_size, cfg.pad_to_square)
    carried = zoom_in(box.crop(masked_map), cfg.output_size, cfg.pad_to_square)
    return image, carried


def extract_foreground(
    sample: ImageSample, saliency_map: SaliencyMap, cfg: ExtractorConfig
) -> ImageSample:
    """Threshold, mask, crop to the mask's bounding box and zoom in."""
    image, _ = _process(sample.pixels, saliency_map, cfg, remove_background=True, crop=True)
    return sample.withPixels(image, SampleStage.FOREGROUND)


def remove_background(
    sample: ImageSample, saliency_map: SaliencyMap, cfg: ExtractorConfig
) -> ImageSample:
    """Masks the background but keeps the whole frame (no crop)."""
    image, _ = _process(sample.pixels, saliency_map, cfg, remove_background=True, crop=False)
    return sample.withPixels(image, SampleStage.BACKGROUND_REMOVED)


def stage_for(flags: VariantFlags) -> SampleStage:
    if flags.resize_foreground:
        return SampleStage.FOREGROUND
    if flags.remove_background:
        return SampleStage.BACKGROUND_REMOVED
    return SampleStage.RESIZED


def prepare_sample(
    sample: ImageSample,
    saliency_map: Optional[SaliencyMap],
    cfg: ExtractorConfig,
    flags: VariantFlags,
) -> Tuple[ImageSample, Optional[SaliencyMap]]:
    """
    Routes a sample through the processing selected by `flags` and returns
    it together with its saliency map carried through the same geometry.
    Without background removal the map is optional and only resized.
    """
    if flags.remove_background and saliency_map is None:
        raise ValueError(f"background removal of '{sample.identifier}' needs a saliency map")
    image, carried = _process(
        sample.pixels,
        saliency_map,
        cfg,
        remove_background=flags.remove_background,
        crop=flags.resize_foreground,
    )
    processed = sample.withPixels(image, stage_for(flags))
    processed_map = None if carried is None else SaliencyMap(processed.identifier, carried.clamp(0.0, 1.0))
    return processed, processed_map


class ForegroundExtractor:
    """Batch front-end of the extractor over a set of samples."""

    file_manager = FilesMngr()

    def __init__(self, cfg: ExtractorConfig, saliency: SaliencyMngr, workers: int = 4):
        self.cfg = cfg
        self.saliency = saliency
        self.workers = max(1, workers)
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)

    def process(
        self, sample: ImageSample, flags: VariantFlags
    ) -> Tuple[ImageSample, Optional[SaliencyMap]]:
        """Saliency is only fetched when the variant masks or mines with it."""
        needs_map = flags.remove_background or flags.use_generator
        saliency_map = self.saliency.compute_saliency(sample) if needs_map else None
        return prepare_sample(sample, saliency_map, self.cfg, flags)

    def process_all(
        self, samples: Iterable[ImageSample], flags: VariantFlags
    ) -> List[Tuple[ImageSample, Optional[SaliencyMap]]]:
        """Processes samples in parallel; the result keeps the input order."""
        samples = list(samples)
        if self.workers == 1 or len(samples) < 2:
            return [self.process(sample, flags) for sample in samples]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(lambda sample: self.process(sample, flags), samples))

    def write_processed(
        self,
        samples: Iterable[ImageSample],
        flags: VariantFlags,
        image_dir: str,
        map_dir: Optional[str] = None,
    ) -> int:
        """
        Writes processed images (and optionally their carried maps) mirroring
        the dataset layout, `<dir>/<class_name>/<image_stem>.png`.
        """
        written = 0
        for processed, processed_map in self.process_all(samples, flags):
            relative = PurePosixPath(processed.source_id)
            parts = (*relative.parent.parts, f"{relative.stem}.png")
            self.file_manager.save_image(os.path.join(image_dir, *parts), processed.pixels)
            if map_dir is not None and processed_map is not None:
                self.file_manager.save_image(os.path.join(map_dir, *parts), processed_map.values)
            written += 1
        self.logger.info(f"Wrote {written} processed samples to '{image_dir}'")
        return written
