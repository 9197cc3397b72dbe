"""tsrobust: adversarial attacks and defenses for 1-D time-series classifiers."""

__version__ = "0.1.0"
