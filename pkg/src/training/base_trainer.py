from typing import Dict, List, Optional, Sequence, Tuple

import torch
from torch.utils.data import DataLoader, TensorDataset

from ..classes.configs import FotConfig
from ..classes.errors import DatasetError
from ..classes.image_sample import ImageSample
from ..logger.logger import Logger, LoggerManager
from ..networks.backbones import FeatureExtractor
from ..networks.classifier import CosineClassifier, classify
from .losses import base_loss


def label_mapping(samples: Sequence[ImageSample]) -> Dict[int, int]:
    """Registry class ids to contiguous classifier labels, in id order."""
    return {class_id: label for label, class_id in enumerate(sorted({s.class_id for s in samples}))}


def stack_samples(
    samples: Sequence[ImageSample], labels: Optional[Dict[int, int]] = None
) -> Tuple[torch.Tensor, torch.Tensor]:
    labels = labels if labels is not None else label_mapping(samples)
    images = torch.stack([sample.pixels for sample in samples])
    targets = torch.tensor([labels[sample.class_id] for sample in samples], dtype=torch.long)
    return images, targets


class BaseTrainer:
    """Joint training of the feature extractor and the base cosine classifier."""

    LOG_EVERY = 10

    def __init__(self, cfg: FotConfig):
        self.cfg = cfg
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)

    def train_base(
        self,
        samples: Sequence[ImageSample],
        extractor: FeatureExtractor,
        classifier: CosineClassifier,
        epochs: Optional[int] = None,
    ) -> List[float]:
        """
        Minimises the base cross-entropy over `samples` with Adam and returns
        the mean loss of every epoch. Zero epochs leaves every parameter as is.
        """
        if not samples:
            raise DatasetError("no base samples to train on")
        labels = label_mapping(samples)
        if classifier.num_classes != len(labels):
            raise ValueError(
                f"classifier has {classifier.num_classes} outputs for {len(labels)} base classes"
            )
        epochs = self.cfg.base_epochs if epochs is None else epochs
        images, targets = stack_samples(samples, labels)
        device = torch.device(self.cfg.device)
        loader = DataLoader(
            TensorDataset(images, targets),
            batch_size=self.cfg.base_batch,
            shuffle=True,
            generator=torch.Generator().manual_seed(self.cfg.seed),
        )
        optimizer = torch.optim.Adam(
            list(extractor.parameters()) + list(classifier.parameters()), lr=self.cfg.base_lr
        )
        self.logger.info(
            f"Base training: {len(samples)} samples, {len(labels)} classes, {epochs} epochs"
        )
        history: List[float] = []
        for epoch in range(epochs):
            extractor.train()
            classifier.train()
            total, seen = 0.0, 0
            for batch, batch_targets in loader:
                batch, batch_targets = batch.to(device), batch_targets.to(device)
                loss = base_loss(classify(classifier, extractor(batch)), batch_targets)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += float(loss.detach()) * batch.shape[0]
                seen += batch.shape[0]
            history.append(total / seen)
            if (epoch + 1) % self.LOG_EVERY == 0 or epoch + 1 == epochs:
                self.logger.info(f"Base epoch {epoch + 1}/{epochs}: loss {history[-1]:.4f}")
        extractor.eval()
        classifier.eval()
        return history


@torch.no_grad()
def accuracy(
    extractor: FeatureExtractor,
    classifier: CosineClassifier,
    images: torch.Tensor,
    targets: torch.Tensor,
) -> float:
    extractor.eval()
    classifier.eval()
    predictions = classifier(extractor(images)).argmax(dim=1)
    return float((predictions == targets).float().mean())


def train_base(
    samples: Sequence[ImageSample],
    extractor: FeatureExtractor,
    classifier: CosineClassifier,
    cfg: FotConfig,
) -> List[float]:
    return BaseTrainer(cfg).train_base(samples, extractor, classifier)
