from typing import Tuple

import torch
import torch.nn as nn
from torchvision import models

from ..classes.element_types import BackboneTypes


def conv_block(in_channels: int, out_channels: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1),
        nn.BatchNorm2d(out_channels),
        nn.ReLU(inplace=True),
        # ceil_mode keeps tiny inputs from collapsing to zero size
        nn.MaxPool2d(2, ceil_mode=True),
    )


class FeatureExtractor(nn.Module):
    """Backbone mapping C x H x W images to d-dimensional feature vectors."""

    def __init__(
        self,
        architecture: BackboneTypes = BackboneTypes.CONV4,
        input_size: Tuple[int, int] = (84, 84),
        in_channels: int = 3,
        width: int = 64,
    ):
        super().__init__()
        self.architecture = architecture
        self.input_size = tuple(input_size)
        self.in_channels = in_channels

        if architecture is BackboneTypes.CONV4:
            self.blocks = nn.Sequential(
                conv_block(in_channels, width),
                conv_block(width, width),
                conv_block(width, width),
                conv_block(width, width),
            )
            self.body = nn.Sequential(self.blocks, nn.AdaptiveAvgPool2d(1))
            self.feature_dim = width
        else:
            if in_channels != 3:
                raise ValueError("ResNet backbones expect 3-channel images")
            factory = {
                BackboneTypes.RESNET18: models.resnet18,
                BackboneTypes.RESNET34: models.resnet34,
            }[architecture]
            resnet = factory(weights=None)
            self.feature_dim = resnet.fc.in_features
            resnet.fc = nn.Identity()
            self.body = resnet

    def final_block(self) -> nn.Module:
        if self.architecture is BackboneTypes.CONV4:
            return self.blocks[-1]
        return self.body.layer4

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.dim() != 4 or images.shape[1] != self.in_channels:
            raise ValueError(
                f"expected a batch of {self.in_channels}-channel images, got {tuple(images.shape)}"
            )
        if tuple(images.shape[-2:]) != self.input_size:
            raise ValueError(
                f"image size {tuple(images.shape[-2:])} does not match the "
                f"configured input size {self.input_size}"
            )
        return self.body(images).flatten(1)


def extract_features(extractor: FeatureExtractor, pixels: torch.Tensor) -> torch.Tensor:
    """Features of one image (C x H x W -> d) or of a batch (B x C x H x W -> B x d)."""
    if pixels.dim() == 3:
        return extractor(pixels.unsqueeze(0))[0]
    return extractor(pixels)
