from typing import Callable, Optional

import torch
import torch.nn.functional as F

from ..classes.configs import FotConfig
from ..classes.element_types import EntropySign
from ..networks.classifier import classify

LOG_EPS = 1e-12


def base_loss(p: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Mean negative log-probability of the true labels, log stabilised at 1e-12."""
    if p.dim() != 2 or p.shape[0] < 1:
        raise ValueError(f"expected a non-empty N x C probability batch, got {tuple(p.shape)}")
    if y.shape != (p.shape[0],):
        raise ValueError(f"expected {p.shape[0]} labels, got {tuple(y.shape)}")
    if bool((y < 0).any()) or bool((y >= p.shape[1]).any()):
        raise ValueError(f"label out of range for {p.shape[1]} classes")
    picked = p.gather(1, y.long().view(-1, 1)).squeeze(1)
    return -torch.log(picked.clamp_min(LOG_EPS)).mean()


def entropy(p: torch.Tensor) -> torch.Tensor:
    """Shannon entropy of every row of a probability batch."""
    return -(p * torch.log(p.clamp_min(LOG_EPS))).sum(dim=1)


def generator_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    extractor: Callable[[torch.Tensor], torch.Tensor],
    classifier: Callable[[torch.Tensor], torch.Tensor],
    y: torch.Tensor,
    lambda_mse: float,
) -> torch.Tensor:
    """
    lambda * pixel MSE against the true B2 plus the cross-entropy of the
    frozen base classifier on the generated image. Gradients reach `pred`
    through the frozen networks; freezing them is the caller's job.
    """
    if pred.shape != target.shape:
        raise ValueError(
            f"prediction {tuple(pred.shape)} and target {tuple(target.shape)} differ in shape"
        )
    mse = F.mse_loss(pred, target)
    ce = base_loss(classify(classifier, extractor(pred)), y)
    return lambda_mse * mse + ce


def finetune_loss(
    p_support: torch.Tensor,
    y_support: torch.Tensor,
    p_query: Optional[torch.Tensor],
    cfg: FotConfig,
) -> torch.Tensor:
    """
    Inductive: cross-entropy over the support set. Transductive: adds the mean
    query entropy (minimize_entropy) or the mean of sum p log p
    (paper_literal), weighted by `cfg.entropy_weight`.
    """
    ce = base_loss(p_support, y_support)
    if not cfg.transductive:
        if p_query is not None:
            raise ValueError("inductive fine-tuning does not use query predictions")
        return ce
    if p_query is None or p_query.shape[0] == 0:
        raise ValueError("transductive fine-tuning needs a non-empty query set")
    mean_entropy = entropy(p_query).mean()
    if cfg.entropy_sign is EntropySign.MINIMIZE_ENTROPY:
        return ce + cfg.entropy_weight * mean_entropy
    return ce - cfg.entropy_weight * mean_entropy
