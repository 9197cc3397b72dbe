"""Robust-accuracy computation, epsilon sweeps, and perturbation audits.

Every attack result is re-audited here: the three perturbation norms are
recomputed from (x_adv - x) independently of the attack's own bookkeeping.
An over-budget result from the boundary attack is downgraded (the
perturbation is discarded and the example falls back to its clean
prediction); any other attack exceeding the budget is an internal bug.
"""

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .attacks import LINF_SLACK, AttackSpec, default_attack_specs, perturbation_norms, run_attack
from .errors import ConfigError, ConsistencyError

CURVES_CSV_HEADER = ["attack", "epsilon", "robust_accuracy", "mean_queries", "n_examples"]
DEFAULT_EPSILON_GRID = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30]


@dataclass
class EvalProtocol:
    epsilon_grid: list = field(default_factory=lambda: list(DEFAULT_EPSILON_GRID))
    attacks: list = field(default_factory=default_attack_specs)
    carry_forward: bool = True
    seed: int = 0

    def validate(self):
        grid = self.epsilon_grid
        if not grid:
            raise ConfigError("epsilon grid must be non-empty")
        if any(e <= 0 for e in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("epsilon grid must be positive and strictly increasing")


@dataclass
class RobustnessCurve:
    attack: str
    epsilons: list
    accuracies: list
    mean_queries: list
    clean_accuracy: float


@dataclass
class AuditOutcome:
    passed: bool
    downgraded: bool
    linf_norm: float
    l2_norm: float
    l0_norm: int


def derive_seed(base_seed, example_id, salt=""):
    """Stable per-example attack seed, independent of evaluation order."""
    digest = hashlib.sha256(f"{base_seed}:{salt}:{example_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def audit(result, epsilon):
    """Recompute norms and check the budget; see module docstring for the
    boundary-attack discard rule."""
    linf, l2, l0 = perturbation_norms(result.x_adv - result.x_orig)
    if (
        abs(linf - result.linf_norm) > 1e-9
        or abs(l2 - result.l2_norm) > 1e-9
        or l0 != result.l0_norm
    ):
        raise ConsistencyError(
            f"{result.attack}: norm bookkeeping mismatch "
            f"(recomputed linf={linf}, reported {result.linf_norm})"
        )
    over_budget = linf > epsilon + LINF_SLACK
    if over_budget and result.attack != "boundary":
        raise ConsistencyError(
            f"{result.attack}: perturbation exceeds budget (linf={linf} > eps={epsilon})"
        )
    if over_budget and result.success:
        raise ConsistencyError("boundary: over-budget result must not report success")
    return AuditOutcome(
        passed=not over_budget,
        downgraded=over_budget,
        linf_norm=linf,
        l2_norm=l2,
        l0_norm=l0,
    )


def robust_accuracy(model, examples, spec: AttackSpec, epsilon, base_seed=0):
    """Fraction of examples still classified as their ground-truth label after
    attacking with the original label; counted over all examples.

    Returns (accuracy, results, flip_fraction) where flip_fraction is the
    share of clean-misclassified examples whose returned candidate flipped
    back to correct (reported per the metric-exactness property).
    """
    if not examples:
        raise ConfigError("robust_accuracy needs at least one example")
    results = []
    robust_count = 0
    flipped_back = 0
    clean_wrong = 0
    for seq in examples:
        x, y = seq.channels, seq.label
        clean_ok = model.predict(x).label == y
        result = run_attack(
            model, x, y, epsilon, spec, seed=derive_seed(base_seed, seq.id, spec.kind)
        )
        outcome = audit(result, epsilon)
        if outcome.downgraded:
            robust = clean_ok  # perturbation discarded, fall back to x
        else:
            robust = not result.success
        if not clean_ok:
            clean_wrong += 1
            if robust:
                flipped_back += 1
        robust_count += robust
        results.append(result)
    flip_fraction = flipped_back / clean_wrong if clean_wrong else 0.0
    return robust_count / len(examples), results, flip_fraction


def robustness_curve(model, examples, protocol: EvalProtocol):
    """One curve per attack over the ascending epsilon grid.

    With carry_forward, an adversarial example found at a smaller epsilon is
    retained at every larger one (epsilon balls nest), so curves are monotone
    non-increasing by construction; carried examples cost zero queries.
    """
    protocol.validate()
    clean_acc = sum(
        1 for s in examples if model.predict(s.channels).label == s.label
    ) / len(examples)
    curves = []
    for spec in protocol.attacks:
        broken = set()
        accuracies = []
        mean_queries = []
        for eps in protocol.epsilon_grid:
            robust_count = 0
            queries = []
            for seq in examples:
                if protocol.carry_forward and seq.id in broken:
                    queries.append(0)
                    continue
                x, y = seq.channels, seq.label
                result = run_attack(
                    model, x, y, eps, spec,
                    seed=derive_seed(protocol.seed, seq.id, f"{spec.kind}:{eps}"),
                )
                outcome = audit(result, eps)
                if outcome.downgraded:
                    robust = model.predict(x).label == y
                else:
                    robust = not result.success
                queries.append(result.queries)
                if robust:
                    robust_count += 1
                elif protocol.carry_forward:
                    broken.add(seq.id)
            accuracies.append(robust_count / len(examples))
            mean_queries.append(float(np.mean(queries)))
        curves.append(
            RobustnessCurve(
                attack=spec.kind,
                epsilons=list(protocol.epsilon_grid),
                accuracies=accuracies,
                mean_queries=mean_queries,
                clean_accuracy=clean_acc,
            )
        )
    return curves


def write_curves_csv(curves, path, n_examples):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CURVES_CSV_HEADER)
        for curve in curves:
            for eps, acc, mq in zip(curve.epsilons, curve.accuracies, curve.mean_queries):
                writer.writerow([curve.attack, repr(float(eps)), repr(acc), repr(mq), n_examples])


def read_curves_csv(path):
    rows = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CURVES_CSV_HEADER:
            raise ConfigError(f"{path}: unexpected CSV header {reader.fieldnames}")
        for i, row in enumerate(reader, start=2):
            try:
                rows.append(
                    {
                        "attack": row["attack"],
                        "epsilon": float(row["epsilon"]),
                        "robust_accuracy": float(row["robust_accuracy"]),
                        "mean_queries": float(row["mean_queries"]),
                        "n_examples": int(row["n_examples"]),
                    }
                )
            except (TypeError, ValueError) as e:
                raise ConfigError(f"{path}: malformed CSV row {i}: {e}") from e
    return rows
