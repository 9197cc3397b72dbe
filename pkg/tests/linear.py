"""Tiny analytically tractable models used as attack-test fixtures."""

import numpy as np

from tsrobust.autodiff import log_softmax, softmax
from tsrobust.model import Prediction


class LinearSoftmaxModel:
    """logits = W @ x.ravel() + b; implements the attack-facing interface."""

    def __init__(self, weights, bias):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)

    def logits(self, x):
        return self.weights @ np.asarray(x, dtype=np.float64).ravel() + self.bias

    def predict(self, x):
        logits = self.logits(x)
        probs = softmax(logits)
        return Prediction(logits=logits, probs=probs, label=int(np.argmax(probs)))

    def ce_loss(self, x, y):
        return float(-log_softmax(self.logits(x))[y])

    def loss_and_input_grad(self, x, target=None, loss_kind="cross_entropy", ref_logits=None):
        x = np.asarray(x, dtype=np.float64)
        if loss_kind != "cross_entropy":
            raise NotImplementedError
        logits = self.logits(x)
        probs = softmax(logits)
        g = probs.copy()
        g[target] -= 1.0
        return float(-log_softmax(logits)[target]), (g @ self.weights).reshape(x.shape)


def binary_margin_model(w, c=0.0):
    """Two-class model whose loss is monotone in the margin w.x + c."""
    w = np.asarray(w, dtype=np.float64)
    weights = np.stack([w / 2.0, -w / 2.0])
    bias = np.array([c / 2.0, -c / 2.0])
    return LinearSoftmaxModel(weights, bias)


class LabelOnlyModel:
    """Wrapper enforcing decision-only access: probabilities and gradients
    raise if touched."""

    def __init__(self, inner):
        self._inner = inner

    def predict(self, x):
        pred = self._inner.predict(x)
        return Prediction(logits=None, probs=None, label=pred.label)

    def loss_and_input_grad(self, *a, **k):
        raise AssertionError("label-only model: gradient access forbidden")


class ProbabilityOnlyModel:
    """Wrapper enforcing score-based black-box access: gradients raise."""

    def __init__(self, inner):
        self._inner = inner

    def predict(self, x):
        return self._inner.predict(x)

    def loss_and_input_grad(self, *a, **k):
        raise AssertionError("probability-only model: gradient access forbidden")
