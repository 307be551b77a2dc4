"""Constraint-aware adversarial robustness engine for tabular classifiers."""

__version__ = "0.1.0"
