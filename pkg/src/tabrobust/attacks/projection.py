"""Feasibility projection for attack candidates, in scaled [0, 1] space.

Projection runs, in order: restore immutable coordinates, clip to the
[0, 1] box, project onto the eps-ball around the original point, round
integer features to the nearest feasible value, and snap one-hot groups
to their argmax. The ball projection is exact; rounding and snapping
may re-inflate the distance slightly, which downstream validation
re-checks.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..data import DatasetSchema, MinMaxScaler
from .budget import AttackBudget


def distance(a: np.ndarray, b: np.ndarray, norm: str) -> np.ndarray:
    """Row-wise distance between equally shaped matrices (or vectors)."""
    diff = np.atleast_2d(a) - np.atleast_2d(b)
    if norm == "Linf":
        d = np.abs(diff).max(axis=-1)
    elif norm == "L2":
        d = np.sqrt((diff * diff).sum(axis=-1))
    else:
        raise ValueError(f"unsupported norm {norm!r}")
    return d if np.asarray(a).ndim == 2 else d[0]


def _ball_project(
    cand: np.ndarray, orig: np.ndarray, eps: float, norm: str
) -> np.ndarray:
    """Project rows of `cand` onto the eps-ball around `orig`.

    Rows/coordinates already inside the ball are passed through
    untouched (not recomputed), so projecting twice is bit-identical
    to projecting once.
    """
    delta = cand - orig
    if norm == "Linf":
        clipped = np.clip(delta, -eps, eps)
        return np.where(clipped == delta, cand, orig + clipped)
    norms = np.sqrt((delta * delta).sum(axis=1, keepdims=True))
    outside = norms > eps * (1.0 + 1e-12)
    factor = eps / np.maximum(norms, 1e-30)
    return np.where(outside, orig + delta * factor, cand)


def project(
    candidate: np.ndarray,
    original: np.ndarray,
    budget: AttackBudget,
    schema: DatasetSchema,
    scaler: Optional[MinMaxScaler] = None,
) -> np.ndarray:
    """Project candidate rows into the feasible region around originals."""
    cand = np.atleast_2d(np.asarray(candidate, dtype=float)).copy()
    orig = np.atleast_2d(np.asarray(original, dtype=float))
    single = np.asarray(candidate).ndim == 1

    immutable = ~schema.mutable_mask()
    cand[:, immutable] = orig[:, immutable]

    np.clip(cand, 0.0, 1.0, out=cand)
    cand = _ball_project(cand, orig, budget.eps, budget.norm)
    # The rescale can leave the box by an ulp; re-clip (moves points
    # toward the originals, so the ball constraint is preserved).
    np.clip(cand, 0.0, 1.0, out=cand)

    int_cols = np.where(schema.integer_mask())[0]
    if int_cols.size:
        if scaler is None:
            scaler = MinMaxScaler.from_schema(schema)
        lo, hi = schema.bounds()
        raw = scaler.inverse_transform(cand)
        raw[:, int_cols] = np.clip(
            np.round(raw[:, int_cols]), lo[int_cols], hi[int_cols]
        )
        cand[:, int_cols] = scaler.transform(raw)[:, int_cols]

    for cols in schema.onehot_groups().values():
        block = cand[:, cols]
        winners = block.argmax(axis=1)
        block[:] = 0.0
        block[np.arange(block.shape[0]), winners] = 1.0
        cand[:, cols] = block

    # Re-pin immutables: rounding/snapping must never touch them.
    cand[:, immutable] = orig[:, immutable]
    return cand[0] if single else cand
