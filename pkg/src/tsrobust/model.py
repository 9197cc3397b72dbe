"""Reference 1-D convolutional time-series classifier.

Architecture per block: conv -> relu -> optional GNLM denoising -> maxpool(2),
then global average pooling over time and a dense head. The GNLM block sits
immediately before each pooling layer.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, UsageError

CHECKPOINT_FORMAT_VERSION = 1

DEFAULT_CONV_BLOCKS = [(32, 5), (64, 5), (64, 5)]
POOL_WINDOW = 2


@dataclass
class ModelConfig:
    in_channels: int
    num_classes: int
    conv_blocks: list = field(default_factory=lambda: list(DEFAULT_CONV_BLOCKS))
    use_gnlm: bool = False
    seed: int = 0

    def validate(self):
        if self.in_channels < 1 or self.num_classes < 2:
            raise ConfigError("need in_channels >= 1 and num_classes >= 2")
        if not self.conv_blocks:
            raise ConfigError("at least one conv block required")
        for filters, kernel in self.conv_blocks:
            if filters < 1:
                raise ConfigError("conv filters must be >= 1")
            if kernel % 2 == 0 or kernel < 1:
                raise ConfigError("conv kernel sizes must be odd and positive")

    def to_dict(self):
        return {
            "in_channels": self.in_channels,
            "num_classes": self.num_classes,
            "conv_blocks": [list(b) for b in self.conv_blocks],
            "use_gnlm": self.use_gnlm,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            in_channels=d["in_channels"],
            num_classes=d["num_classes"],
            conv_blocks=[tuple(b) for b in d["conv_blocks"]],
            use_gnlm=d["use_gnlm"],
            seed=d["seed"],
        )


@dataclass
class Prediction:
    logits: np.ndarray
    probs: np.ndarray
    label: int


def _uniform_fan_in(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def build(config: ModelConfig) -> "Classifier":
    """Deterministically initialize a classifier from config.seed."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    params = {}
    c_in = config.in_channels
    for i, (filters, kernel) in enumerate(config.conv_blocks):
        params[f"conv{i}/kernels"] = _uniform_fan_in(
            rng, (filters, c_in, kernel), c_in * kernel
        )
        params[f"conv{i}/bias"] = np.zeros(filters)
        if config.use_gnlm:
            embed = ad.GnlmBlockParams.EMBED_DIM
            params[f"gnlm{i}/theta"] = _uniform_fan_in(rng, (filters, embed), filters)
            params[f"gnlm{i}/phi"] = _uniform_fan_in(rng, (filters, embed), filters)
        c_in = filters
    params["dense/weights"] = _uniform_fan_in(rng, (config.num_classes, c_in), c_in)
    params["dense/bias"] = np.zeros(config.num_classes)
    return Classifier(config, params)


class Classifier:
    """Parameterized model; immutable during inference and attacks."""

    def __init__(self, config: ModelConfig, parameters: dict):
        self.config = config
        self.parameters = parameters

    def parameter_count(self):
        return sum(p.size for p in self.parameters.values())

    def _forward(self, tape, x_node, param_nodes):
        h = x_node
        for i in range(len(self.config.conv_blocks)):
            h = ad.conv1d(h, param_nodes[f"conv{i}/kernels"], param_nodes[f"conv{i}/bias"])
            h = ad.relu(h)
            if self.config.use_gnlm:
                h = ad.gnlm_denoise(
                    h, param_nodes[f"gnlm{i}/theta"], param_nodes[f"gnlm{i}/phi"]
                )
            h = ad.maxpool1d(h, POOL_WINDOW)
        h = ad.global_avg_pool(h)
        return ad.dense(h, param_nodes["dense/weights"], param_nodes["dense/bias"])

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != self.config.in_channels:
            raise UsageError(
                f"input shape {x.shape} incompatible with {self.config.in_channels} channels"
            )
        return x

    def _graph(self, x):
        tape = ad.Tape()
        x_node = tape.leaf(self._check_input(x))
        param_nodes = {name: tape.leaf(p) for name, p in self.parameters.items()}
        logits = self._forward(tape, x_node, param_nodes)
        return tape, x_node, param_nodes, logits

    def predict(self, x) -> Prediction:
        tape = ad.Tape()
        x_node = tape.leaf(self._check_input(x))
        param_nodes = {name: tape.leaf(p) for name, p in self.parameters.items()}
        logits = self._forward(tape, x_node, param_nodes).value
        probs = ad.softmax(logits)
        return Prediction(logits=logits, probs=probs, label=int(np.argmax(probs)))

    def _loss_node(self, tape, logits, target, loss_kind, ref_logits):
        if loss_kind == "cross_entropy":
            if target is None:
                raise UsageError("cross_entropy loss requires a target label")
            return ad.softmax_cross_entropy(logits, target)
        if loss_kind == "kl_vs_reference":
            if ref_logits is None:
                raise UsageError("kl_vs_reference requires reference logits")
            ref = tape.leaf(np.asarray(ref_logits, dtype=np.float64))
            return ad.kl_divergence(ref, logits)
        raise UsageError(f"unknown loss kind {loss_kind!r}")

    def loss_and_input_grad(self, x, target=None, loss_kind="cross_entropy", ref_logits=None):
        """Loss value and its exact gradient w.r.t. the input; parameters untouched."""
        tape, x_node, _, logits = self._graph(x)
        loss = self._loss_node(tape, logits, target, loss_kind, ref_logits)
        tape.backward(loss)
        grad = x_node.grad
        if grad is None:
            grad = np.zeros_like(x_node.value)
        return float(loss.value), grad

    def loss_and_grads(self, x, target=None, loss_kind="cross_entropy", ref_logits=None):
        """Loss, input gradient, and per-parameter gradients for one example."""
        tape, x_node, param_nodes, logits = self._graph(x)
        loss = self._loss_node(tape, logits, target, loss_kind, ref_logits)
        tape.backward(loss)
        grads = {
            name: (node.grad if node.grad is not None else np.zeros_like(node.value))
            for name, node in param_nodes.items()
        }
        x_grad = x_node.grad if x_node.grad is not None else np.zeros_like(x_node.value)
        return float(loss.value), x_grad, grads

    def trades_loss_grads(self, x, x_adv, y, beta):
        """CE(clean, y) + beta * KL(clean logits || adversarial logits).

        Both forwards share one tape so parameter gradients flow through both
        terms; x_adv enters as a constant (the inner maximization is detached).
        """
        tape = ad.Tape()
        x_node = tape.leaf(self._check_input(x))
        xa_node = tape.leaf(self._check_input(x_adv))
        param_nodes = {name: tape.leaf(p) for name, p in self.parameters.items()}
        logits_clean = self._forward(tape, x_node, param_nodes)
        logits_adv = self._forward(tape, xa_node, param_nodes)
        ce = ad.softmax_cross_entropy(logits_clean, y)
        kl = ad.kl_divergence(logits_clean, logits_adv)
        total = ad.add(ce, ad.scale(kl, beta))
        tape.backward(total)
        grads = {
            name: (node.grad if node.grad is not None else np.zeros_like(node.value))
            for name, node in param_nodes.items()
        }
        return float(total.value), grads


def save_checkpoint(classifier, path, stats=None, dataset_checksum=None):
    """Write a JSON checkpoint; floats round-trip exactly via repr."""
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": classifier.config.to_dict(),
        "normalization": None
        if stats is None
        else {
            "mean": list(stats.mean),
            "std": list(stats.std),
            "dataset_checksum": dataset_checksum,
        },
        "parameters": {k: v.tolist() for k, v in classifier.parameters.items()},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)
        f.write("\n")


def load_checkpoint(path):
    """Returns (classifier, normalization dict or None)."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint format version {doc.get('format_version')}")
    config = ModelConfig.from_dict(doc["config"])
    params = {k: np.asarray(v, dtype=np.float64) for k, v in doc["parameters"].items()}
    return Classifier(config, params), doc["normalization"]
