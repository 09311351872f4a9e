from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import torch

from ..classes.configs import FotConfig
from ..classes.element_types import TransductiveScope
from ..classes.image_sample import ImageSample
from ..logger.logger import Logger, LoggerManager
from ..networks.backbones import FeatureExtractor
from ..networks.classifier import CosineClassifier, classify
from .losses import finetune_loss

# Called with (iteration, synthetic flags of the support samples in the batch).
BatchHook = Callable[[int, torch.Tensor], None]


@dataclass
class EpisodeBatch:
    """Tensors of one episode after processing and augmentation."""

    support_x: torch.Tensor
    support_y: torch.Tensor
    support_synthetic: torch.Tensor
    query_x: torch.Tensor
    query_y: Optional[torch.Tensor] = None

    @classmethod
    def fromSamples(
        cls,
        support: Sequence[ImageSample],
        support_labels: Sequence[int],
        query: Sequence[ImageSample],
        query_labels: Optional[Sequence[int]] = None,
    ) -> "EpisodeBatch":
        return cls(
            support_x=torch.stack([sample.pixels for sample in support]),
            support_y=torch.tensor(list(support_labels), dtype=torch.long),
            support_synthetic=torch.tensor([sample.synthetic for sample in support], dtype=torch.bool),
            query_x=torch.stack([sample.pixels for sample in query]),
            query_y=None if query_labels is None else torch.tensor(list(query_labels), dtype=torch.long),
        )

    def to(self, device: torch.device) -> "EpisodeBatch":
        return EpisodeBatch(
            support_x=self.support_x.to(device),
            support_y=self.support_y.to(device),
            support_synthetic=self.support_synthetic.to(device),
            query_x=self.query_x.to(device),
            query_y=None if self.query_y is None else self.query_y.to(device),
        )


@dataclass
class FinetuneResult:
    classifier: CosineClassifier
    losses: List[float] = field(default_factory=list)


class Finetuner:
    """
    Fits a fresh novel classifier on an episode's support set. Inductive runs
    keep the extractor frozen; transductive runs also update it (all of it or
    its final block) and add the query entropy term.
    """

    def __init__(self, cfg: FotConfig):
        self.cfg = cfg
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)

    def _trainable_extractor_parameters(self, extractor: FeatureExtractor) -> List[torch.nn.Parameter]:
        if self.cfg.transductive_scope is TransductiveScope.FINAL_BLOCK:
            return list(extractor.final_block().parameters())
        return list(extractor.parameters())

    def finetune(
        self,
        batch: EpisodeBatch,
        extractor: FeatureExtractor,
        classifier: CosineClassifier,
        seed: int = 0,
        on_batch: Optional[BatchHook] = None,
    ) -> FinetuneResult:
        """
        Iterations below `original_only_iters` draw from the original support
        samples only; later iterations draw from the whole augmented support.
        A `finetune_batch` of 0 uses the whole pool every iteration.
        """
        if classifier.feature_dim != extractor.feature_dim:
            raise ValueError(
                f"classifier expects {classifier.feature_dim}-dim features but the "
                f"extractor produces {extractor.feature_dim}"
            )
        original = torch.nonzero(~batch.support_synthetic).flatten()
        everything = torch.arange(batch.support_x.shape[0])
        if original.numel() == 0:
            raise ValueError("support set holds no original samples")
        transductive = self.cfg.transductive
        if transductive and batch.query_x.shape[0] == 0:
            raise ValueError("transductive fine-tuning needs a non-empty query set")

        rng = torch.Generator().manual_seed(seed)
        result = FinetuneResult(classifier)
        extractor.eval()
        if transductive:
            tuned = self._trainable_extractor_parameters(extractor)
            tuned_ids = {id(parameter) for parameter in tuned}
            untouched = [p for p in extractor.parameters() if id(p) not in tuned_ids]
            saved = [(p, p.requires_grad) for p in untouched]
            for parameter in untouched:
                parameter.requires_grad_(False)
            optimizer = torch.optim.Adam(
                list(classifier.parameters()) + tuned, lr=self.cfg.finetune_lr
            )
            try:
                self._loop(batch, extractor, classifier, optimizer, original, everything, rng, on_batch, result, None)
            finally:
                for parameter, flag in saved:
                    parameter.requires_grad_(flag)
        else:
            # features are fixed; the optimizer never sees the extractor
            with torch.no_grad():
                features = extractor(batch.support_x)
            optimizer = torch.optim.Adam(classifier.parameters(), lr=self.cfg.finetune_lr)
            self._loop(batch, extractor, classifier, optimizer, original, everything, rng, on_batch, result, features)
        classifier.eval()
        return result

    def _loop(
        self,
        batch: EpisodeBatch,
        extractor: FeatureExtractor,
        classifier: CosineClassifier,
        optimizer: torch.optim.Optimizer,
        original: torch.Tensor,
        everything: torch.Tensor,
        rng: torch.Generator,
        on_batch: Optional[BatchHook],
        result: FinetuneResult,
        features: Optional[torch.Tensor],
    ):
        classifier.train()
        for iteration in range(self.cfg.finetune_iters):
            pool = original if iteration < self.cfg.original_only_iters else everything
            size = self.cfg.finetune_batch
            if 0 < size < pool.numel():
                pool = pool[torch.randperm(pool.numel(), generator=rng)[:size]]
            if on_batch is not None:
                on_batch(iteration, batch.support_synthetic[pool])
            if features is not None:
                support_features = features[pool]
                p_query = None
            else:
                support_features = extractor(batch.support_x[pool])
                p_query = classify(classifier, extractor(batch.query_x))
            loss = finetune_loss(
                classify(classifier, support_features), batch.support_y[pool], p_query, self.cfg
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            result.losses.append(float(loss.detach()))


@torch.no_grad()
def predict(
    extractor: FeatureExtractor, classifier: CosineClassifier, images: torch.Tensor
) -> torch.Tensor:
    extractor.eval()
    classifier.eval()
    return classifier(extractor(images)).argmax(dim=1)


def finetune(
    batch: EpisodeBatch,
    extractor: FeatureExtractor,
    classifier: CosineClassifier,
    cfg: FotConfig,
    seed: int = 0,
    on_batch: Optional[BatchHook] = None,
) -> FinetuneResult:
    return Finetuner(cfg).finetune(batch, extractor, classifier, seed, on_batch)
