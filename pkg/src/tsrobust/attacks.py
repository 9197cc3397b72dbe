"""Five attacks under an L-infinity threat model behind one interface.

All attacks target the ground-truth label, never the model's prediction, so
a clean-misclassified example cannot be accidentally "fixed". There are no
box constraints on the input space (z-normalized time series). Candidate
ranking across restarts: success first, then higher cross-entropy loss
against the ground-truth label.

Label-access discipline: boundary_attack consumes only predicted labels,
noise_attack and simba only predicted probabilities, fgsm and pgd may read
input gradients (white-box).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

LINF_SLACK = 1e-9


@dataclass
class ThreatBudget:
    epsilon: float
    norm: str = "linf"

    def __post_init__(self):
        if self.norm != "linf":
            raise ConfigError("only the L-infinity threat model is supported")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")


@dataclass
class AttackResult:
    x_adv: np.ndarray
    success: bool
    queries: int
    linf_norm: float
    l2_norm: float
    l0_norm: int
    x_orig: np.ndarray
    loss: float
    attack: str


@dataclass
class AttackSpec:
    """Declarative attack configuration used by the evaluation harness."""

    kind: str  # noise | fgsm | pgd | boundary | simba
    restarts: int = 1
    steps: int = 1
    iterations: int = 1000
    n: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("noise", "fgsm", "pgd", "boundary", "simba"):
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if self.restarts < 1 or self.steps < 1:
            raise ConfigError("restarts and steps must be >= 1")


def default_attack_specs(seed=0):
    """The standard five-attack panel: NOISE-100, FGSM-100, PGD-10, Boundary, SIMBA."""
    return [
        AttackSpec(kind="noise", n=100, seed=seed),
        AttackSpec(kind="fgsm", restarts=100, seed=seed),
        AttackSpec(kind="pgd", restarts=10, steps=100, seed=seed),
        AttackSpec(kind="boundary", iterations=1000, seed=seed),
        AttackSpec(kind="simba", seed=seed),
    ]


def perturbation_norms(delta):
    delta = np.asarray(delta)
    linf = float(np.abs(delta).max()) if delta.size else 0.0
    l2 = float(np.sqrt((delta ** 2).sum()))
    l0 = int(np.count_nonzero(delta))
    return linf, l2, l0


def _result(attack, x, x_adv, success, queries, loss):
    linf, l2, l0 = perturbation_norms(x_adv - x)
    return AttackResult(
        x_adv=x_adv,
        success=bool(success),
        queries=int(queries),
        linf_norm=linf,
        l2_norm=l2,
        l0_norm=l0,
        x_orig=x,
        loss=float(loss),
        attack=attack,
    )


def _ce_loss(pred, y):
    # cross-entropy from predicted probabilities only (black-box safe)
    return float(-np.log(max(pred.probs[y], 1e-300)))


def _better(candidate, incumbent):
    """(success, loss) ranking; strict improvement keeps results deterministic."""
    if incumbent is None:
        return True
    c_succ, c_loss = candidate
    i_succ, i_loss = incumbent
    if c_succ != i_succ:
        return c_succ
    return c_loss > i_loss


def noise_attack(model, x, y, budget, n=100, seed=0):
    """Best of n uniform random perturbations in the epsilon box."""
    if n < 1:
        raise ConfigError("noise_attack needs n >= 1")
    x = np.asarray(x, dtype=np.float64)
    eps = budget.epsilon
    rng = np.random.default_rng(seed)
    best = None
    best_key = None
    for _ in range(n):
        cand = x + rng.uniform(-eps, eps, size=x.shape)
        pred = model.predict(cand)
        key = (pred.label != y, _ce_loss(pred, y))
        if _better(key, best_key):
            best_key = key
            best = cand
    return _result("noise", x, best, best_key[0], n, best_key[1])


def fgsm(model, x, y, budget, restarts=100, seed=0):
    """Signed-gradient step of size epsilon; restart 0 starts at x exactly,
    later restarts at x + uniform noise; total perturbation clipped to the box."""
    x = np.asarray(x, dtype=np.float64)
    eps = budget.epsilon
    rng = np.random.default_rng(seed)
    best = None
    best_key = None
    queries = 0
    for r in range(restarts):
        start = x if r == 0 else x + rng.uniform(-eps, eps, size=x.shape)
        _, grad = model.loss_and_input_grad(start, target=y)
        queries += 1
        cand = start + eps * np.sign(grad)
        cand = x + np.clip(cand - x, -eps, eps)
        pred = model.predict(cand)
        queries += 1
        key = (pred.label != y, _ce_loss(pred, y))
        if _better(key, best_key):
            best_key = key
            best = cand
    return _result("fgsm", x, best, best_key[0], queries, best_key[1])


def pgd_perturb(model, x, eps, steps, rng, grad_fn):
    """One PGD trajectory: uniform start in the box, signed ascent with
    alpha = 2*eps/steps, per-step clip of the perturbation. grad_fn(x) -> grad."""
    alpha = 2.0 * eps / steps
    xa = x + rng.uniform(-eps, eps, size=x.shape)
    for _ in range(steps):
        grad = grad_fn(xa)
        xa = x + np.clip(xa + alpha * np.sign(grad) - x, -eps, eps)
    return xa


def pgd(model, x, y, budget, restarts=10, steps=100, seed=0):
    """Projected gradient descent; queries counts gradient evaluations."""
    x = np.asarray(x, dtype=np.float64)
    eps = budget.epsilon
    rng = np.random.default_rng(seed)
    best = None
    best_key = None
    for _ in range(restarts):
        cand = pgd_perturb(
            model, x, eps, steps, rng,
            lambda xa: model.loss_and_input_grad(xa, target=y)[1],
        )
        pred = model.predict(cand)
        key = (pred.label != y, _ce_loss(pred, y))
        if _better(key, best_key):
            best_key = key
            best = cand
    return _result("pgd", x, best, best_key[0], restarts * steps, best_key[1])


def boundary_attack(model, x, y, budget, iterations=1000, seed=0, init_cap=1000):
    """Decision-based boundary walk minimizing L2 distance; label access only.

    The returned candidate is the accepted adversarial point with smallest
    L2 distance; success is re-scored under the L-infinity budget, so an
    over-budget result carries success=False (the discard rule).
    """
    x = np.asarray(x, dtype=np.float64)
    eps = budget.epsilon
    rng = np.random.default_rng(seed)
    queries = 0

    def is_adv(point):
        nonlocal queries
        queries += 1
        return model.predict(point).label != y

    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        lo, hi = lo - 1.0, hi + 1.0
    start = None
    best_noise = None
    best_noise_dist = np.inf
    for _ in range(init_cap):
        cand = rng.uniform(lo, hi, size=x.shape)
        dist = float(np.linalg.norm(cand - x))
        if dist < best_noise_dist:
            best_noise_dist = dist
            best_noise = cand
        if is_adv(cand):
            start = cand
            break
    if start is None:
        return _result("boundary", x, best_noise, False, queries, 0.0)

    # binary search to the decision boundary along the segment to x
    adv, clean = start, x
    for _ in range(25):
        mid = 0.5 * (adv + clean)
        if is_adv(mid):
            adv = mid
        else:
            clean = mid
    current = adv
    best = current
    best_dist = float(np.linalg.norm(current - x))

    spherical_step = 0.1
    source_step = 0.1
    orth_accepts = orth_trials = 0
    src_accepts = src_trials = 0
    for _ in range(iterations):
        d = current - x
        r = np.linalg.norm(d)
        if r == 0:
            break
        # orthogonal proposal on the sphere of radius r around x
        pert = rng.standard_normal(x.shape)
        pert -= (np.vdot(pert, d) / (r * r)) * d
        norm_p = np.linalg.norm(pert)
        if norm_p > 0:
            pert *= spherical_step * r / norm_p
        cand = current + pert
        cd = cand - x
        cd_norm = np.linalg.norm(cd)
        if cd_norm > 0:
            cand = x + cd * (r / cd_norm)
        orth_trials += 1
        if is_adv(cand):
            orth_accepts += 1
            current = cand
            # contraction toward the original
            closer = x + (1.0 - source_step) * (current - x)
            src_trials += 1
            if is_adv(closer):
                src_accepts += 1
                current = closer
                dist = float(np.linalg.norm(current - x))
                if dist < best_dist:
                    best_dist = dist
                    best = current
        # success-rate targeting: 25% acceptance, x1.5 updates every 30 trials
        if orth_trials == 30:
            factor = 1.5 if orth_accepts / orth_trials > 0.25 else 1 / 1.5
            spherical_step = min(spherical_step * factor, 1.0)
            orth_accepts = orth_trials = 0
        if src_trials == 30:
            factor = 1.5 if src_accepts / src_trials > 0.25 else 1 / 1.5
            source_step = min(source_step * factor, 0.5)
            src_accepts = src_trials = 0

    linf = float(np.abs(best - x).max())
    success = linf <= eps + LINF_SLACK
    return _result("boundary", x, best, success, queries, 0.0)


def simba(model, x, y, budget, seed=0):
    """Coordinate-wise +-epsilon probes committed when they strictly reduce
    the ground-truth class probability; every coordinate visited once."""
    x = np.asarray(x, dtype=np.float64)
    eps = budget.epsilon
    rng = np.random.default_rng(seed)
    pred = model.predict(x)
    queries = 1
    if pred.label != y:
        return _result("simba", x, x.copy(), True, queries, _ce_loss(pred, y))
    p_cur = pred.probs[y]
    work = x.flatten()
    success = False
    last_loss = _ce_loss(pred, y)
    for idx in rng.permutation(work.size):
        committed = None
        plus = work.copy()
        plus[idx] += eps
        pred_plus = model.predict(plus.reshape(x.shape))
        queries += 1
        minus = work.copy()
        minus[idx] -= eps
        pred_minus = model.predict(minus.reshape(x.shape))
        queries += 1
        dec_plus = p_cur - pred_plus.probs[y]
        dec_minus = p_cur - pred_minus.probs[y]
        if dec_plus >= dec_minus and dec_plus > 0:
            committed = (plus, pred_plus)
        elif dec_minus > 0:
            committed = (minus, pred_minus)
        if committed is not None:
            work, pred = committed
            p_cur = pred.probs[y]
            last_loss = _ce_loss(pred, y)
            if pred.label != y:
                success = True
                break
    return _result("simba", x, work.reshape(x.shape), success, queries, last_loss)


_ATTACK_FNS = {
    "noise": lambda model, x, y, budget, spec, seed: noise_attack(
        model, x, y, budget, n=spec.n, seed=seed
    ),
    "fgsm": lambda model, x, y, budget, spec, seed: fgsm(
        model, x, y, budget, restarts=spec.restarts, seed=seed
    ),
    "pgd": lambda model, x, y, budget, spec, seed: pgd(
        model, x, y, budget, restarts=spec.restarts, steps=spec.steps, seed=seed
    ),
    "boundary": lambda model, x, y, budget, spec, seed: boundary_attack(
        model, x, y, budget, iterations=spec.iterations, seed=seed
    ),
    "simba": lambda model, x, y, budget, spec, seed: simba(
        model, x, y, budget, seed=seed
    ),
}


def run_attack(model, x, y, epsilon, spec, seed=None):
    """Dispatch one AttackSpec; seed overrides spec.seed when given."""
    budget = ThreatBudget(epsilon=epsilon)
    return _ATTACK_FNS[spec.kind](
        model, x, y, budget, spec, spec.seed if seed is None else seed
    )
