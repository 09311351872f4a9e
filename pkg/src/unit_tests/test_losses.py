import math

import pytest
import torch

from ..classes.configs import FotConfig
from ..classes.element_types import EntropySign
from ..networks.classifier import CosineClassifier
from ..training.losses import LOG_EPS, base_loss, entropy, finetune_loss, generator_loss


def logit_for(probability: float) -> float:
    """Logit d such that softmax([d, 0]) puts `probability` on class 0."""
    return math.log(probability / (1 - probability))


# ---------------------------
# Tests for base_loss
# ---------------------------
class TestBaseLoss:
    def test_closed_form(self):
        p = torch.tensor([[0.5, 0.5], [0.2, 0.8]])
        y = torch.tensor([0, 1])
        expected = -(math.log(0.5) + math.log(0.8)) / 2
        assert float(base_loss(p, y)) == pytest.approx(expected)

    def test_zero_probability_is_clamped(self):
        p = torch.tensor([[0.0, 1.0]])
        assert float(base_loss(p, torch.tensor([0]))) == pytest.approx(-math.log(LOG_EPS))

    def test_gradient_matches_finite_differences(self):
        p = torch.tensor([[0.3, 0.7], [0.6, 0.4]], dtype=torch.float64, requires_grad=True)
        y = torch.tensor([1, 0])
        assert torch.autograd.gradcheck(lambda probs: base_loss(probs, y), (p,))

    @pytest.mark.parametrize(
        "p, y, message",
        [
            (torch.zeros(0, 2), torch.zeros(0, dtype=torch.long), "non-empty"),
            (torch.full((2, 2), 0.5), torch.tensor([0]), "expected 2 labels"),
            (torch.full((1, 2), 0.5), torch.tensor([2]), "label out of range"),
            (torch.full((1, 2), 0.5), torch.tensor([-1]), "label out of range"),
        ],
    )
    def test_invalid_batches(self, p, y, message):
        with pytest.raises(ValueError, match=message):
            base_loss(p, y)


def test_entropy():
    p = torch.tensor([[0.5, 0.5], [1.0, 0.0], [0.25, 0.75]])
    expected = [math.log(2), 0.0, -(0.25 * math.log(0.25) + 0.75 * math.log(0.75))]
    assert entropy(p).tolist() == pytest.approx(expected, abs=1e-6)


# ---------------------------
# Tests for generator_loss
# ---------------------------
class TestGeneratorLoss:
    def test_closed_form(self):
        """
        Two pixels off by 0.1 and 0.3 with lambda 2 give 2 * 0.05, plus a
        cross-entropy of exactly 0.7 from the stub classifier
        """
        pred = torch.tensor([[[[0.1, 0.3]]]])
        target = torch.tensor([[[[0.0, 0.0]]]])
        d = logit_for(math.exp(-0.7))

        def extractor(images):
            return images.flatten(1)

        def classifier(features):
            return torch.tensor([[d, 0.0]]).expand(features.shape[0], -1)

        loss = generator_loss(pred, target, extractor, classifier, torch.tensor([0]), lambda_mse=2.0)
        assert float(loss) == pytest.approx(0.8, abs=1e-5)

    def test_lambda_zero_leaves_classification_only(self):
        pred = torch.rand(2, 1, 2, 2)

        def classifier(features):
            return torch.zeros(features.shape[0], 4)

        loss = generator_loss(pred, torch.zeros_like(pred), lambda x: x.flatten(1), classifier, torch.tensor([1, 3]), 0.0)
        assert float(loss) == pytest.approx(math.log(4), abs=1e-6)

    def test_gradient_reaches_prediction_only(self):
        pred = torch.rand(1, 1, 2, 2, requires_grad=True)
        linear = torch.nn.Linear(4, 3)
        for parameter in linear.parameters():
            parameter.requires_grad_(False)
        loss = generator_loss(pred, torch.zeros(1, 1, 2, 2), lambda x: x.flatten(1), linear, torch.tensor([2]), 1.0)
        loss.backward()
        assert pred.grad is not None and torch.any(pred.grad != 0)
        assert linear.weight.grad is None

    @pytest.mark.parametrize("lambda_mse", [0.0, 1.0, 4.0])
    def test_gradient_matches_finite_differences(self, lambda_mse):
        """
        The pixel term and the classification term through frozen toy networks
        both differentiate exactly with respect to the generated image
        """
        torch.manual_seed(3)
        extractor = torch.nn.Sequential(torch.nn.Flatten(), torch.nn.Linear(3 * 8 * 8, 6)).double()
        classifier = CosineClassifier(6, 3, scale=2.0).double()
        for parameter in [*extractor.parameters(), *classifier.parameters()]:
            parameter.requires_grad_(False)
        pred = torch.rand(2, 3, 8, 8, dtype=torch.float64, requires_grad=True)
        target = torch.rand(2, 3, 8, 8, dtype=torch.float64)
        y = torch.tensor([0, 2])
        assert torch.autograd.gradcheck(
            lambda images: generator_loss(images, target, extractor, classifier, y, lambda_mse), (pred,)
        )

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="differ in shape"):
            generator_loss(torch.zeros(1, 1, 2, 2), torch.zeros(1, 1, 2, 3), None, None, torch.tensor([0]), 1.0)


# ---------------------------
# Tests for finetune_loss
# ---------------------------
class TestFinetuneLoss:
    uniform = torch.full((3, 2), 0.5)
    labels = torch.tensor([0, 1, 0])

    def test_inductive_is_cross_entropy(self):
        loss = finetune_loss(self.uniform, self.labels, None, FotConfig())
        assert float(loss) == pytest.approx(math.log(2), abs=1e-6)

    def test_inductive_rejects_query(self):
        with pytest.raises(ValueError, match="inductive"):
            finetune_loss(self.uniform, self.labels, self.uniform, FotConfig())

    def test_minimize_entropy_adds_weighted_entropy(self):
        cfg = FotConfig(transductive=True, entropy_weight=0.5)
        loss = finetune_loss(self.uniform, self.labels, torch.full((4, 2), 0.5), cfg)
        assert float(loss) == pytest.approx(1.5 * math.log(2), abs=1e-6)

    def test_literal_sign_subtracts(self):
        cfg = FotConfig(transductive=True, entropy_sign=EntropySign.PAPER_LITERAL, entropy_weight=1.0)
        loss = finetune_loss(self.uniform, self.labels, torch.full((4, 2), 0.5), cfg)
        assert float(loss) == pytest.approx(0.0, abs=1e-6)

    def test_confident_query_costs_nothing_extra(self):
        cfg = FotConfig(transductive=True)
        confident = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        loss = finetune_loss(self.uniform, self.labels, confident, cfg)
        assert float(loss) == pytest.approx(math.log(2), abs=1e-6)

    @pytest.mark.parametrize("query", [None, torch.zeros(0, 2)])
    def test_transductive_needs_query(self, query):
        with pytest.raises(ValueError, match="non-empty query"):
            finetune_loss(self.uniform, self.labels, query, FotConfig(transductive=True))

    @pytest.mark.parametrize("sign", list(EntropySign))
    def test_transductive_gradient_matches_finite_differences(self, sign):
        cfg = FotConfig(transductive=True, entropy_sign=sign, entropy_weight=0.7)
        support_logits = torch.randn(4, 3, dtype=torch.float64, requires_grad=True)
        query_logits = torch.randn(5, 3, dtype=torch.float64, requires_grad=True)
        labels = torch.tensor([0, 1, 2, 1])

        def loss(support, query):
            return finetune_loss(torch.softmax(support, dim=1), labels, torch.softmax(query, dim=1), cfg)

        assert torch.autograd.gradcheck(loss, (support_logits, query_logits))

    def test_entropy_signs_sum_to_twice_cross_entropy(self):
        """
        The two transductive variants differ only in the sign of the query term
        """
        generator = torch.Generator().manual_seed(8)
        for _ in range(20):
            support = torch.softmax(torch.randn(5, 5, generator=generator, dtype=torch.float64), dim=1)
            query = torch.softmax(torch.randn(7, 5, generator=generator, dtype=torch.float64), dim=1)
            labels = torch.randint(0, 5, (5,), generator=generator)
            minimize = finetune_loss(support, labels, query, FotConfig(transductive=True))
            literal = finetune_loss(
                support, labels, query, FotConfig(transductive=True, entropy_sign=EntropySign.PAPER_LITERAL)
            )
            assert float(minimize + literal) == pytest.approx(2 * float(base_loss(support, labels)), abs=1e-9)
