"""Independent validity re-check for attack candidates.

A candidate counts as valid only if it stays inside the perturbation
ball, leaves immutable coordinates bit-untouched, respects integer and
one-hot typing, and satisfies the constraint set at the configured
tolerance. Attacks use this to finalize results; the harness re-runs it
on everything reported as a success, so no invalid example can reach a
report.
"""

from __future__ import annotations

import numpy as np

from ..data import DatasetSchema, MinMaxScaler
from ..engine import PenaltyConfig, check
from ..expressions import ConstraintSet
from .budget import AttackBudget
from .projection import distance

DISTANCE_SLACK = 1e-9


def validity_mask(
    schema: DatasetSchema,
    scaler: MinMaxScaler,
    cs: ConstraintSet,
    Z_orig: np.ndarray,
    Z_cand: np.ndarray,
    budget: AttackBudget,
    cfg: PenaltyConfig,
    include_constraints: bool = True,
) -> np.ndarray:
    """Per-row validity of scaled candidates against scaled originals.

    With include_constraints=False only the attacker-capability checks
    run (ball, mutability, typing); that is the unconstrained view used
    to quantify how much constraint validation reverts.
    """
    Z_orig = np.atleast_2d(Z_orig)
    Z_cand = np.atleast_2d(Z_cand)
    ok = distance(Z_cand, Z_orig, budget.norm) <= budget.eps + DISTANCE_SLACK

    immutable = ~schema.mutable_mask()
    if immutable.any():
        ok &= np.all(Z_cand[:, immutable] == Z_orig[:, immutable], axis=1)

    raw = scaler.inverse_transform(Z_cand)
    int_cols = schema.integer_mask()
    if int_cols.any():
        frac = np.abs(raw[:, int_cols] - np.round(raw[:, int_cols]))
        ok &= np.all(frac <= 1e-9, axis=1)
    for cols in schema.onehot_groups().values():
        block = raw[:, cols]
        ok &= np.abs(block.sum(axis=1) - 1.0) <= 1e-9
        ok &= np.all(np.abs(block - np.round(block)) <= 1e-9, axis=1)

    lo, hi = schema.bounds()
    ok &= np.all((raw >= lo - 1e-9) & (raw <= hi + 1e-9), axis=1)

    if include_constraints:
        ok &= check(cs, raw, cfg)
    return ok
