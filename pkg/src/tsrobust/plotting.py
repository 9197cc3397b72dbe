"""Deterministic SVG rendering of robustness curves.

Output bytes are a pure function of the input rows and title: the figure
uses a pinned hash salt and strips the creation date, so golden-file tests
can compare byte-for-byte.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import ConfigError

ATTACK_ORDER = ["noise", "fgsm", "pgd", "boundary", "simba"]
ATTACK_LABELS = {
    "noise": "NOISE-100",
    "fgsm": "FGSM-100",
    "pgd": "PGD-10",
    "boundary": "Boundary",
    "simba": "SIMBA",
}


def render_curves_svg(rows, title, out_path):
    """Render one robustness-curve chart (epsilon vs robust accuracy) to SVG."""
    if not rows:
        raise ConfigError("no data rows to plot")
    by_attack = {}
    for row in rows:
        by_attack.setdefault(row["attack"], []).append(row)
    order = [a for a in ATTACK_ORDER if a in by_attack]
    order += sorted(a for a in by_attack if a not in ATTACK_ORDER)

    plt.rcParams["svg.hashsalt"] = "tsrobust"
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for attack in order:
        pts = sorted(by_attack[attack], key=lambda r: r["epsilon"])
        ax.plot(
            [p["epsilon"] for p in pts],
            [p["robust_accuracy"] for p in pts],
            marker="o",
            label=ATTACK_LABELS.get(attack, attack),
        )
    ax.set_xlabel(r"$\epsilon$")
    ax.set_ylabel("robust accuracy")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
