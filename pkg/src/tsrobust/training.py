"""Training regimes: conventional, adversarial training, and TRADES.

All regimes share one deterministic minibatch gradient-descent loop; the
robust regimes replace or augment the per-example loss with an inner PGD
maximization bounded by train_epsilon. The shuffle RNG is kept separate
from the inner-attack RNG so the epsilon -> 0 limits reproduce conventional
training batch-for-batch.
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .attacks import pgd_perturb
from .errors import ConfigError

REPORT_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    regime: str = "standard"  # standard | adversarial | trades
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.01
    train_epsilon: float = 0.3
    inner_steps: int = 7
    inner_restarts: int = 1
    trades_beta: float = 1.0
    trades_init_noise: float = 1e-3
    at_label_mode: str = "ground_truth"  # or model_prediction
    seed: int = 0

    def validate(self):
        if self.regime not in ("standard", "adversarial", "trades"):
            raise ConfigError(f"unknown regime {self.regime!r}")
        if self.regime == "trades" and self.trades_beta <= 0:
            raise ConfigError("trades_beta must be > 0")
        if self.regime in ("adversarial", "trades") and self.train_epsilon <= 0:
            raise ConfigError("train_epsilon must be > 0 for robust regimes")
        if self.at_label_mode not in ("ground_truth", "model_prediction"):
            raise ConfigError(f"unknown at_label_mode {self.at_label_mode!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TrainReport:
    regime: str
    epochs: list = field(default_factory=list)  # {epoch, train_loss, train_acc, val_acc}
    final_train_acc: float = 0.0
    final_test_acc: float = 0.0
    converged: bool = True

    def to_dict(self):
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "regime": self.regime,
            "epochs": self.epochs,
            "final_train_acc": self.final_train_acc,
            "final_test_acc": self.final_test_acc,
            "converged": self.converged,
        }


def accuracy(model, examples):
    if not examples:
        return 0.0
    hits = sum(1 for s in examples if model.predict(s.channels).label == s.label)
    return hits / len(examples)


def save_report(report, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write("\n")


def _example_grads(model, seq, config, attack_rng):
    """Per-example loss and parameter gradients for the configured regime."""
    x, y = seq.channels, seq.label
    if config.regime == "standard":
        loss, _, grads = model.loss_and_grads(x, target=y)
        return loss, grads
    if config.regime == "adversarial":
        target = y
        if config.at_label_mode == "model_prediction":
            target = model.predict(x).label
        x_adv = x
        for _ in range(config.inner_restarts):
            x_adv = pgd_perturb(
                model, x, config.train_epsilon, config.inner_steps, attack_rng,
                lambda xa: model.loss_and_input_grad(xa, target=target)[1],
            )
        loss, _, grads = model.loss_and_grads(x_adv, target=y)
        return loss, grads
    # trades
    ref_logits = model.predict(x).logits
    noise = attack_rng.uniform(-config.trades_init_noise, config.trades_init_noise, x.shape)
    eps = config.train_epsilon
    alpha = 2.0 * eps / config.inner_steps
    xa = x + np.clip(noise, -eps, eps)
    for _ in range(config.inner_steps):
        grad = model.loss_and_input_grad(
            xa, loss_kind="kl_vs_reference", ref_logits=ref_logits
        )[1]
        xa = x + np.clip(xa + alpha * np.sign(grad) - x, -eps, eps)
    loss, grads = model.trades_loss_grads(x, xa, y, config.trades_beta)
    return loss, grads


def train(model, bundle, config):
    """Run the configured regime; mutates model parameters in place.

    Divergence (non-finite batch loss) stops training and sets the report's
    converged flag to False; the partial report is still returned.
    """
    config.validate()
    report = TrainReport(regime=config.regime)
    if config.epochs == 0:
        report.final_train_acc = accuracy(model, bundle.train)
        report.final_test_acc = accuracy(model, bundle.test)
        return report

    shuffle_rng = np.random.default_rng(config.seed)
    attack_rng = np.random.default_rng((config.seed, 0x5eed))
    n = len(bundle.train)
    params = model.parameters

    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        diverged = False
        for lo in range(0, n, config.batch_size):
            batch = [bundle.train[i] for i in perm[lo:lo + config.batch_size]]
            acc_grads = {k: np.zeros_like(v) for k, v in params.items()}
            batch_loss = 0.0
            for seq in batch:
                loss, grads = _example_grads(model, seq, config, attack_rng)
                batch_loss += loss
                for k, g in grads.items():
                    acc_grads[k] += g
            if not np.isfinite(batch_loss):
                diverged = True
                break
            scale = config.learning_rate / len(batch)
            for k in params:
                params[k] -= scale * acc_grads[k]
            epoch_loss += batch_loss
        if diverged:
            report.converged = False
            break
        report.epochs.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / n,
                "train_acc": accuracy(model, bundle.train),
                "val_acc": accuracy(model, bundle.val),
            }
        )

    report.final_train_acc = accuracy(model, bundle.train)
    report.final_test_acc = accuracy(model, bundle.test)
    return report


def train_standard(model, bundle, config):
    config.regime = "standard"
    return train(model, bundle, config)


def train_adversarial(model, bundle, config):
    config.regime = "adversarial"
    return train(model, bundle, config)


def train_trades(model, bundle, config):
    config.regime = "trades"
    return train(model, bundle, config)
