from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(channels, channels, 3, 1, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, 1, 1),
        )

    def forward(self, x):
        return F.relu(x + self.net(x))


class PostureGenerator(nn.Module):
    """
    Encoder-decoder conditioned on the channel-wise concatenation
    [A1, A2, B1]; predicts B1 moved into the posture change A1 -> A2.

    The first encoder stage keeps the resolution, each further stage halves
    it; the decoder mirrors the encoder with transposed convolutions.
    """

    def __init__(
        self,
        image_channels: int = 3,
        widths: Sequence[int] = (64, 128, 256),
        res_blocks: int = 1,
    ):
        super().__init__()
        if not widths:
            raise ValueError("generator needs at least one stage width")
        self.image_channels = image_channels
        self.widths = tuple(widths)

        encoder, channels = [], 3 * image_channels
        for stage, width in enumerate(widths):
            if stage == 0:
                encoder.append(nn.Conv2d(channels, width, 3, 1, 1))
            else:
                encoder.append(nn.Conv2d(channels, width, 4, 2, 1))
            encoder.append(nn.ReLU(inplace=True))
            encoder.extend(ResBlock(width) for _ in range(res_blocks))
            channels = width
        self.encoder = nn.Sequential(*encoder)

        decoder = []
        for width in reversed(widths[:-1]):
            decoder.append(nn.ConvTranspose2d(channels, width, 4, 2, 1))
            decoder.append(nn.ReLU(inplace=True))
            decoder.extend(ResBlock(width) for _ in range(res_blocks))
            channels = width
        decoder.append(nn.Conv2d(channels, image_channels, 3, 1, 1))
        self.decoder = nn.Sequential(*decoder)

    def forward(self, a1: torch.Tensor, a2: torch.Tensor, b1: torch.Tensor) -> torch.Tensor:
        if not (a1.shape == a2.shape == b1.shape):
            raise ValueError(
                f"generator inputs differ in shape: {tuple(a1.shape)}, "
                f"{tuple(a2.shape)}, {tuple(b1.shape)}"
            )
        if a1.dim() != 4 or a1.shape[1] != self.image_channels:
            raise ValueError(
                f"expected a batch of {self.image_channels}-channel images, got {tuple(a1.shape)}"
            )
        out = self.decoder(self.encoder(torch.cat([a1, a2, b1], dim=1)))
        if out.shape[-2:] != a1.shape[-2:]:
            out = F.interpolate(out, size=a1.shape[-2:], mode="bilinear", align_corners=False)
        return torch.sigmoid(out).clamp(0.0, 1.0)


def generate(
    generator: PostureGenerator, a1: torch.Tensor, a2: torch.Tensor, z1: torch.Tensor
) -> torch.Tensor:
    """Single-image (C x H x W) or batched call of the generator."""
    if a1.dim() == 3:
        return generator(a1.unsqueeze(0), a2.unsqueeze(0), z1.unsqueeze(0))[0]
    return generator(a1, a2, z1)
