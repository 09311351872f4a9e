from collections import OrderedDict
from typing import Dict, List, Mapping, Sequence

import torch

from ..classes.element_types import SampleStage
from ..classes.image_sample import ImageSample
from ..classes.saliency import SaliencyMap
from ..logger.logger import Logger, LoggerManager
from ..miner.quadruplets import PartnerFinder
from ..networks.generator import PostureGenerator
from ..utils.counters import CounterTypes, Counters

# Spreads partner-search seeds of different support samples apart.
SEED_STRIDE = 7919


def round_robin_counts(k: int, n_sources: int) -> List[int]:
    """Generated samples per source when k are spread over n sources in turn."""
    return [k // n_sources + (1 if i < k % n_sources else 0) for i in range(n_sources)]


class SupportAugmenter:
    """Adds generator output to the support set of a novel episode."""

    def __init__(
        self,
        generator: PostureGenerator,
        partners: PartnerFinder,
        base_images: Mapping[str, torch.Tensor],
    ):
        self.generator = generator
        self.partners = partners
        self.base_images = base_images
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)

    def augment_support(
        self,
        support: Sequence[ImageSample],
        support_maps: Mapping[str, SaliencyMap],
        k: int,
        seed: int = 0,
    ) -> List[ImageSample]:
        """
        Returns the original support followed by exactly `k` synthetic samples
        per class. The sources of a class are used round-robin; each generated
        image is G(X1, X2, Z) with (X1, X2) the posture partners of source Z.
        """
        if k < 0:
            raise ValueError(f"k must be non-negative, got {k}")
        augmented = list(support)
        if k == 0 or not support:
            return augmented
        by_class: Dict[int, List[ImageSample]] = OrderedDict()
        for sample in support:
            by_class.setdefault(sample.class_id, []).append(sample)

        self.generator.eval()
        device = next(self.generator.parameters()).device
        position = 0
        for class_id, sources in by_class.items():
            for source, count in zip(sources, round_robin_counts(k, len(sources))):
                position += 1
                if count == 0:
                    continue
                pairs = self.partners.find(
                    support_maps[source.identifier], count, seed=seed + SEED_STRIDE * position
                )
                x1 = torch.stack([self.base_images[a1] for a1, _ in pairs])
                x2 = torch.stack([self.base_images[a2] for _, a2 in pairs])
                z = source.pixels.unsqueeze(0).expand(count, *source.pixels.shape)
                with torch.no_grad():
                    generated = self.generator(x1.to(device), x2.to(device), z.to(device)).cpu()
                for index, pixels in enumerate(generated):
                    augmented.append(
                        ImageSample(
                            identifier=f"{source.source_id}@gen{index}",
                            class_id=source.class_id,
                            split_role=source.split_role,
                            pixels=pixels.contiguous(),
                            class_name=source.class_name,
                            synthetic=True,
                            stage=SampleStage.GENERATED,
                            source_id=source.source_id,
                        )
                    )
                Counters().increase(CounterTypes.GENERATED_SAMPLES, count)
        self.logger.debug(
            f"Support grown from {len(support)} to {len(augmented)} samples (k={k})"
        )
        return augmented


def augment_support(
    support: Sequence[ImageSample],
    support_maps: Mapping[str, SaliencyMap],
    generator: PostureGenerator,
    partners: PartnerFinder,
    base_images: Mapping[str, torch.Tensor],
    k: int,
    seed: int = 0,
) -> List[ImageSample]:
    return SupportAugmenter(generator, partners, base_images).augment_support(
        support, support_maps, k, seed
    )
