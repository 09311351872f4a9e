from abc import ABC, abstractmethod
from typing import Callable, Mapping, Tuple, Union

import torch
import torch.nn.functional as F

from ..classes.image_sample import ImageSample
from ..logger.logger import Logger, LoggerManager

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class SaliencyBackend(ABC):
    """A pretrained salient-object detector, or a stand-in for one."""

    name = "backend"

    def __init__(self):
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)

    @abstractmethod
    def predict(self, sample: ImageSample) -> torch.Tensor:
        """Returns a 1 x h x w map in [0, 1]; it may differ in size from the sample."""


class ConstantSaliencyBackend(SaliencyBackend):
    name = "constant"

    def __init__(self, value: float = 0.0):
        super().__init__()
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"constant saliency must lie in [0, 1], got {value}")
        self.value = value

    def predict(self, sample: ImageSample) -> torch.Tensor:
        height, width = sample.size
        return torch.full((1, height, width), self.value)


class OracleSaliencyBackend(SaliencyBackend):
    """
    Returns known foreground masks, e.g. the shape masks a synthetic dataset
    emits while rendering. `masks` maps source ids to maps or is a callable.
    """

    name = "oracle"

    def __init__(
        self,
        masks: Union[Mapping[str, torch.Tensor], Callable[[ImageSample], torch.Tensor]],
    ):
        super().__init__()
        self.masks = masks

    def predict(self, sample: ImageSample) -> torch.Tensor:
        if callable(self.masks):
            values = self.masks(sample)
        else:
            try:
                values = self.masks[sample.source_id]
            except KeyError:
                raise KeyError(f"oracle has no mask for '{sample.source_id}'") from None
        values = values.float()
        return values.unsqueeze(0) if values.dim() == 2 else values


class TorchModelSaliencyBackend(SaliencyBackend):
    """
    Wraps a pretrained SOD network such as an exported BASNet. The image is
    resized to the network input and normalised with ImageNet statistics; the
    first side output is min-max normalised per image.
    """

    name = "torch-model"

    def __init__(
        self,
        model: torch.nn.Module,
        input_size: Tuple[int, int] = (256, 256),
        device: str = "cpu",
    ):
        super().__init__()
        self.model = model.to(device).eval()
        self.input_size = input_size
        self.device = device
        self.mean = torch.tensor(IMAGENET_MEAN, device=device).view(1, 3, 1, 1)
        self.std = torch.tensor(IMAGENET_STD, device=device).view(1, 3, 1, 1)

    @classmethod
    def fromFile(cls, path: str, device: str = "cpu", **kwargs) -> "TorchModelSaliencyBackend":
        """Loads a TorchScript export of the detector."""
        model = torch.jit.load(path, map_location=device)
        return cls(model, device=device, **kwargs)

    @torch.no_grad()
    def predict(self, sample: ImageSample) -> torch.Tensor:
        pixels = sample.pixels.unsqueeze(0).to(self.device)
        height, width = pixels.shape[-2:]
        if pixels.shape[1] == 1:
            pixels = pixels.expand(-1, 3, -1, -1)
        net_input = F.interpolate(
            pixels, size=self.input_size, mode="bilinear", align_corners=False
        )
        output = self.model((net_input - self.mean) / self.std)
        if isinstance(output, (tuple, list)):
            output = output[0]
        prediction = output[:, :1]
        low, high = prediction.min(), prediction.max()
        prediction = (prediction - low) / (high - low + 1e-8)
        prediction = F.interpolate(
            prediction, size=(height, width), mode="bilinear", align_corners=False
        )
        return prediction[0].clamp(0.0, 1.0).cpu()
