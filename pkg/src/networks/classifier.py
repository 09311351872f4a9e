import torch
import torch.nn as nn
import torch.nn.functional as F

NORM_EPS = 1e-8


class CosineClassifier(nn.Module):
    """
    Logits are `scale` times the cosine similarity between a feature and each
    class weight vector, so every logit lies in [-scale, scale].
    """

    def __init__(
        self,
        feature_dim: int,
        num_classes: int,
        scale: float = 2.0,
        learnable_scale: bool = False,
    ):
        super().__init__()
        if scale <= 0:
            raise ValueError(f"scale must be positive, got {scale}")
        self.feature_dim = feature_dim
        self.num_classes = num_classes
        self.weight = nn.Parameter(torch.empty(num_classes, feature_dim))
        nn.init.normal_(self.weight, std=0.01)
        if learnable_scale:
            self.scale = nn.Parameter(torch.tensor(float(scale)))
        else:
            self.register_buffer("scale", torch.tensor(float(scale)))

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        if features.shape[-1] != self.feature_dim:
            raise ValueError(
                f"classifier expects {self.feature_dim}-dim features, got {features.shape[-1]}"
            )
        features = F.normalize(features, dim=-1, eps=NORM_EPS)
        weight = F.normalize(self.weight, dim=-1, eps=NORM_EPS)
        return self.scale * features @ weight.t()


def classify(classifier: CosineClassifier, features: torch.Tensor) -> torch.Tensor:
    """Softmax probabilities p(x) over the classifier's classes."""
    return torch.softmax(classifier(features), dim=-1)
