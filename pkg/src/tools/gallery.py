import os
from typing import Mapping, Optional, Sequence

import torch

from ..classes.configs import ExtractorConfig
from ..classes.image_sample import ImageSample
from ..classes.quadruplet import Quadruplet
from ..extractor.foreground import apply_mask, mask_bounding_box, threshold_saliency, zoom_in
from ..logger.logger import Logger, LoggerManager
from ..networks.generator import PostureGenerator
from ..saliency.store import SaliencyMngr
from ..utils.file_manager import FilesMngr


def _safe_name(identifier: str) -> str:
    return identifier.replace("/", "_").replace("@", "-")


class GalleryWriter:
    """Debug dumps of the extractor stages and of mined quadruplets."""

    file_manager = FilesMngr()

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)

    def extractor_stages(
        self, samples: Sequence[ImageSample], saliency: SaliencyMngr, cfg: ExtractorConfig
    ) -> int:
        """original, saliency, mask, masked and cropped-zoomed image per sample."""
        for sample in samples:
            folder = os.path.join(self.out_dir, "extractor", _safe_name(sample.identifier))
            saliency_map = saliency.compute_saliency(sample)
            mask = threshold_saliency(saliency_map, cfg.beta)
            masked = apply_mask(sample.pixels, mask)
            box = mask_bounding_box(mask, cfg.empty_mask_policy)
            foreground = zoom_in(box.crop(masked), cfg.output_size, cfg.pad_to_square)
            stages = {
                "0_original": sample.pixels,
                "1_saliency": saliency_map.values,
                "2_mask": mask.as_float(),
                "3_masked": masked,
                "4_foreground": foreground,
            }
            for name, tensor in stages.items():
                self.file_manager.save_image(os.path.join(folder, f"{name}.png"), tensor)
        self.logger.info(f"Extractor gallery of {len(samples)} samples in '{self.out_dir}'")
        return len(samples)

    def quadruplets(
        self,
        entries: Sequence[Quadruplet],
        images: Mapping[str, torch.Tensor],
        generator: Optional[PostureGenerator] = None,
    ) -> int:
        """A1, A2, B1, B2 and, with a generator, G(A1, A2, B1) per quadruplet."""
        for index, quadruplet in enumerate(entries):
            folder = os.path.join(self.out_dir, "quadruplets", f"{index:04d}")
            members = {
                "a1": images[quadruplet.a1],
                "a2": images[quadruplet.a2],
                "b1": images[quadruplet.b1],
                "b2": images[quadruplet.b2],
            }
            if generator is not None:
                device = next(generator.parameters()).device
                with torch.no_grad():
                    members["generated"] = generator(
                        *(members[key].unsqueeze(0).to(device) for key in ("a1", "a2", "b1"))
                    )[0].cpu()
            for name, tensor in members.items():
                self.file_manager.save_image(os.path.join(folder, f"{name}.png"), tensor)
        self.logger.info(f"Quadruplet gallery of {len(entries)} entries in '{self.out_dir}'")
        return len(entries)
