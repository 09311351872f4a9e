from dataclasses import dataclass, field
from typing import List, Mapping, Sequence

import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader

from ..classes.configs import FotConfig
from ..classes.errors import DatasetError
from ..classes.quadruplet import Quadruplet
from ..logger.logger import Logger, LoggerManager
from ..networks.backbones import FeatureExtractor
from ..networks.classifier import CosineClassifier
from ..networks.generator import PostureGenerator
from .common import frozen, parameter_checksum
from .losses import generator_loss


@dataclass
class GeneratorHistory:
    losses: List[float] = field(default_factory=list)
    mse: List[float] = field(default_factory=list)


class GeneratorTrainer:
    """
    Trains the posture generator on the mined quadruplets: G(A1, A2, B1)
    should reproduce B2. The extractor and base classifier stay frozen.
    """

    LOG_EVERY = 50

    def __init__(self, cfg: FotConfig):
        self.cfg = cfg
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)

    def train_generator(
        self,
        quadruplets: Sequence[Quadruplet],
        images: Mapping[str, torch.Tensor],
        labels: Mapping[int, int],
        extractor: FeatureExtractor,
        classifier: CosineClassifier,
        generator: PostureGenerator,
        epochs: int = None,
    ) -> GeneratorHistory:
        """
        Args:
            quadruplets: Mined quadruplets.
            images: Processed base image per sample id.
            labels: Registry class id to base classifier label.
        """
        if not quadruplets:
            raise DatasetError("quadruplet manifest is empty; nothing to train the generator on")
        epochs = self.cfg.gen_epochs if epochs is None else epochs
        ids = sorted({i for q in quadruplets for i in (q.a1, q.a2, q.b1, q.b2)})
        missing = [i for i in ids if i not in images]
        if missing:
            raise DatasetError(f"no processed image for quadruplet member '{missing[0]}'")
        position = {identifier: index for index, identifier in enumerate(ids)}
        device = torch.device(self.cfg.device)
        stack = torch.stack([images[identifier] for identifier in ids]).to(device)
        members = torch.tensor(
            [[position[q.a1], position[q.a2], position[q.b1], position[q.b2]] for q in quadruplets],
            dtype=torch.long,
        )
        targets = torch.tensor([labels[q.class_b] for q in quadruplets], dtype=torch.long).to(device)
        loader = DataLoader(
            torch.arange(len(quadruplets)),
            batch_size=self.cfg.gen_batch,
            shuffle=True,
            generator=torch.Generator().manual_seed(self.cfg.seed),
        )
        optimizer = torch.optim.Adam(generator.parameters(), lr=self.cfg.gen_lr)
        checksums = parameter_checksum(extractor), parameter_checksum(classifier)
        history = GeneratorHistory()
        self.logger.info(f"Generator training: {len(quadruplets)} quadruplets, {epochs} epochs")
        extractor.eval()
        classifier.eval()
        with frozen([extractor, classifier]):
            for epoch in range(epochs):
                generator.train()
                total, total_mse, seen = 0.0, 0.0, 0
                for batch in loader:
                    a1, a2, b1, b2 = (stack[members[batch, column]] for column in range(4))
                    pred = generator(a1, a2, b1)
                    loss = generator_loss(
                        pred, b2, extractor, classifier, targets[batch], self.cfg.lambda_mse
                    )
                    optimizer.zero_grad()
                    loss.backward()
                    optimizer.step()
                    total += float(loss.detach()) * len(batch)
                    total_mse += float(F.mse_loss(pred.detach(), b2)) * len(batch)
                    seen += len(batch)
                history.losses.append(total / seen)
                history.mse.append(total_mse / seen)
                if (epoch + 1) % self.LOG_EVERY == 0 or epoch + 1 == epochs:
                    self.logger.info(
                        f"Generator epoch {epoch + 1}/{epochs}: loss {history.losses[-1]:.4f}, "
                        f"mse {history.mse[-1]:.5f}"
                    )
        generator.eval()
        if (parameter_checksum(extractor), parameter_checksum(classifier)) != checksums:
            raise RuntimeError("frozen extractor or base classifier changed during generator training")
        return history


def train_generator(
    quadruplets: Sequence[Quadruplet],
    images: Mapping[str, torch.Tensor],
    labels: Mapping[int, int],
    extractor: FeatureExtractor,
    classifier: CosineClassifier,
    generator: PostureGenerator,
    cfg: FotConfig,
) -> GeneratorHistory:
    return GeneratorTrainer(cfg).train_generator(quadruplets, images, labels, extractor, classifier, generator)
