import os
from pathlib import PurePosixPath
from typing import Dict, Optional, Tuple

import torch
import torch.nn.functional as F

from ..classes.errors import SaliencyUnavailableError
from ..classes.image_sample import ImageSample
from ..classes.saliency import SaliencyMap
from ..logger.logger import Logger, LoggerManager
from ..saliency.backend import SaliencyBackend
from ..utils.counters import Counters, CounterTypes
from ..utils.file_manager import FilesMngr


def quantize_map(values: torch.Tensor) -> torch.Tensor:
    """Rounds to the 8-bit grid of the cache format."""
    return torch.round(values.clamp(0.0, 1.0) * 255.0) / 255.0


def resize_map(saliency_map: SaliencyMap, target: Tuple[int, int]) -> SaliencyMap:
    """Bilinear resize of a map to (height, width), values clamped to [0, 1]."""
    height, width = target
    if height < 1 or width < 1:
        raise ValueError(f"target size must be positive, got {target}")
    if saliency_map.size == (height, width):
        return SaliencyMap(saliency_map.source_id, saliency_map.values.clone())
    resized = F.interpolate(
        saliency_map.values.unsqueeze(0),
        size=(height, width),
        mode="bilinear",
        align_corners=False,
    )[0]
    return SaliencyMap(saliency_map.source_id, resized.clamp(0.0, 1.0))


class SaliencyStore:
    """
    Map cache laid out like the dataset: `<root>/<class_name>/<image_stem>.png`,
    8-bit grayscale. Without a root the cache lives in memory only.
    """

    file_manager = FilesMngr()

    def __init__(self, root: Optional[str] = None):
        self.root = root
        self._memory: Dict[str, torch.Tensor] = {}

    def path_for(self, source_id: str) -> Optional[str]:
        if self.root is None:
            return None
        relative = PurePosixPath(source_id)
        return os.path.join(self.root, *relative.parent.parts, f"{relative.stem}.png")

    def __contains__(self, source_id: str) -> bool:
        if self.root is None:
            return source_id in self._memory
        return os.path.isfile(self.path_for(source_id))

    def read(self, source_id: str) -> Optional[SaliencyMap]:
        if self.root is None:
            values = self._memory.get(source_id)
            return None if values is None else SaliencyMap(source_id, values)
        path = self.path_for(source_id)
        if not os.path.isfile(path):
            return None
        return SaliencyMap(source_id, self.file_manager.load_grayscale(path))

    def write(self, saliency_map: SaliencyMap):
        values = quantize_map(saliency_map.values)
        if self.root is None:
            self._memory[saliency_map.source_id] = values
        else:
            self.file_manager.save_image(self.path_for(saliency_map.source_id), values)


class SaliencyMngr:
    """Serves saliency maps from the cache and fills it from a backend on a miss."""

    counters = Counters()

    def __init__(self, store: SaliencyStore, backend: Optional[SaliencyBackend] = None):
        self.store = store
        self.backend = backend
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)

    def compute_saliency(self, sample: ImageSample) -> SaliencyMap:
        """
        Returns the map of `sample` at the sample's own resolution. Cached maps
        of another resolution are resized with a warning; backend output is
        quantized to the cache grid and written back so repeated calls agree.
        """
        source_id = sample.source_id
        size = sample.size
        cached = self.store.read(source_id)
        if cached is not None:
            self.counters.increase(CounterTypes.SALIENCY_CACHE_HITS)
            if cached.size != size:
                self.logger.warning(
                    f"Cached map of '{source_id}' is {cached.size}, image is {size}; resizing"
                )
                self.counters.increase(CounterTypes.RESIZED_CACHE_MAPS)
                cached = resize_map(cached, size)
            return cached

        if self.backend is None:
            location = self.store.root or "the in-memory cache"
            raise SaliencyUnavailableError(
                f"no saliency map for '{source_id}' and no backend loaded; "
                f"precompute maps into {location}"
            )

        self.counters.increase(CounterTypes.SALIENCY_BACKEND_CALLS)
        predicted = SaliencyMap(source_id, self.backend.predict(sample).float().clamp(0.0, 1.0))
        if predicted.size != size:
            predicted = resize_map(predicted, size)
        saliency_map = SaliencyMap(source_id, quantize_map(predicted.values))
        self.store.write(saliency_map)
        return saliency_map
