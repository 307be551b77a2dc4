"""Constraint evaluation: penalties, satisfaction checks, repair, gradients.

Every constraint maps to a nonnegative, continuous penalty that is zero
exactly when the constraint holds (strict inequalities via a small
margin). Conjunction adds penalties, disjunction and implication take
the minimum branch, which keeps the whole thing piecewise-smooth and
subgradient-friendly. Penalties and their reverse-mode gradients are
vectorized over row-major matrices.

Constraints are evaluated in raw (unscaled) feature units; the default
tolerance of 1e-2 absorbs float noise after unscaling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .expressions import (
    And,
    Constraint,
    ConstraintSet,
    Feature,
    Implies,
    NumExpr,
    Or,
    Relation,
    _as_matrix,
    _backward,
    _forward,
    features_of,
)


@dataclass(frozen=True)
class PenaltyConfig:
    """tolerance: satisfaction threshold in raw feature units;
    strict_margin: slack turning open comparisons into closed ones."""

    tolerance: float = 1e-2
    strict_margin: float = 1e-6

    def __post_init__(self):
        if self.tolerance < 0:
            raise ValueError("tolerance must be nonnegative")
        if self.strict_margin <= 0:
            raise ValueError("strict_margin must be positive")


DEFAULT_PENALTY_CONFIG = PenaltyConfig()


def _relation_residual(
    c: Relation, X: np.ndarray, memo: dict, cfg: PenaltyConfig
) -> np.ndarray:
    """Signed residual r with penalty = |r| for == and max(0, r) otherwise."""
    a = _forward(c.left, X, memo)
    b = _forward(c.right, X, memo)
    if c.op == "==":
        return a - b
    if c.op == "<=":
        return a - b
    if c.op == "<":
        return a - b + cfg.strict_margin
    if c.op == ">=":
        return b - a
    return b - a + cfg.strict_margin  # ">"


def _penalty_forward(
    c: Constraint, X: np.ndarray, memo: dict, cfg: PenaltyConfig
) -> np.ndarray:
    if isinstance(c, Relation):
        r = _relation_residual(c, X, memo, cfg)
        return np.abs(r) if c.op == "==" else np.maximum(0.0, r)
    if isinstance(c, And):
        return sum(_penalty_forward(ch, X, memo, cfg) for ch in c.children)
    if isinstance(c, Or):
        stacked = np.stack([_penalty_forward(ch, X, memo, cfg) for ch in c.children])
        return np.min(stacked, axis=0)
    if isinstance(c, Implies):
        return _penalty_forward(Or((c.guard.negated(), c.body)), X, memo, cfg)
    raise TypeError(f"unknown constraint node {type(c).__name__}")


def penalty(
    c: Constraint,
    x: np.ndarray,
    cfg: PenaltyConfig = DEFAULT_PENALTY_CONFIG,
) -> Union[float, np.ndarray]:
    """Violation penalty of one constraint; zero iff satisfied.

    Accepts a feature vector (returns a scalar) or an (n, d) matrix
    (returns a length-n array).
    """
    X, single = _as_matrix(x)
    val = _penalty_forward(c, X, {}, cfg)
    return float(val[0]) if single else val


def _penalty_backward(
    c: Constraint,
    X: np.ndarray,
    memo: dict,
    adj: np.ndarray,
    grad: np.ndarray,
    cfg: PenaltyConfig,
) -> None:
    if isinstance(c, Relation):
        r = _relation_residual(c, X, memo, cfg)
        if c.op == "==":
            d = np.sign(r)
        else:
            # Hinge: flat at the kink (the constant branch wins ties).
            d = (r > 0).astype(float)
        sign = 1.0 if c.op in ("==", "<=", "<") else -1.0
        _backward(c.left, X, memo, adj * d * sign, grad)
        _backward(c.right, X, memo, -adj * d * sign, grad)
        return
    if isinstance(c, And):
        for ch in c.children:
            _penalty_backward(ch, X, memo, adj, grad, cfg)
        return
    if isinstance(c, Or):
        stacked = np.stack([_penalty_forward(ch, X, memo, cfg) for ch in c.children])
        sel = np.argmin(stacked, axis=0)  # first child wins ties
        for i, ch in enumerate(c.children):
            _penalty_backward(ch, X, memo, adj * (sel == i).astype(float), grad, cfg)
        return
    if isinstance(c, Implies):
        _penalty_backward(Or((c.guard.negated(), c.body)), X, memo, adj, grad, cfg)
        return
    raise TypeError(f"unknown constraint node {type(c).__name__}")


def penalty_gradient(
    c: Constraint,
    x: np.ndarray,
    cfg: PenaltyConfig = DEFAULT_PENALTY_CONFIG,
) -> np.ndarray:
    """Reverse-mode d(penalty)/dx; a valid subgradient at kinks."""
    X, single = _as_matrix(x)
    memo: dict = {}
    _penalty_forward(c, X, memo, cfg)
    grad = np.zeros_like(X)
    _penalty_backward(c, X, memo, np.ones(X.shape[0]), grad, cfg)
    return grad[0] if single else grad


def penalty_matrix(
    cs: ConstraintSet,
    X: np.ndarray,
    cfg: PenaltyConfig = DEFAULT_PENALTY_CONFIG,
) -> np.ndarray:
    """Per-row, per-constraint penalties, shape (n_rows, n_constraints)."""
    X, _ = _as_matrix(X)
    if len(cs) == 0:
        return np.zeros((X.shape[0], 0))
    return np.stack([_penalty_forward(c, X, {}, cfg) for c in cs], axis=1)


def check(
    cs: ConstraintSet,
    X: np.ndarray,
    cfg: PenaltyConfig = DEFAULT_PENALTY_CONFIG,
) -> np.ndarray:
    """Row-wise satisfaction: worst per-constraint penalty <= tolerance."""
    Xm, single = _as_matrix(X)
    pen = penalty_matrix(cs, Xm, cfg)
    ok = np.ones(Xm.shape[0], dtype=bool) if pen.shape[1] == 0 else (
        pen.max(axis=1) <= cfg.tolerance
    )
    return bool(ok[0]) if single else ok


def total_penalty(
    cs: ConstraintSet,
    x: np.ndarray,
    cfg: PenaltyConfig = DEFAULT_PENALTY_CONFIG,
) -> Union[float, np.ndarray]:
    """Sum of per-constraint penalties (the attacks' aggregate loss)."""
    X, single = _as_matrix(x)
    total = penalty_matrix(cs, X, cfg).sum(axis=1)
    return float(total[0]) if single else total


def total_penalty_with_gradient(
    cs: ConstraintSet,
    x: np.ndarray,
    cfg: PenaltyConfig = DEFAULT_PENALTY_CONFIG,
) -> tuple[Union[float, np.ndarray], np.ndarray]:
    """(sum of penalties, sum of penalty gradients) over the set."""
    X, single = _as_matrix(x)
    total = np.zeros(X.shape[0])
    grad = np.zeros_like(X)
    for c in cs:
        memo: dict = {}
        total += _penalty_forward(c, X, memo, cfg)
        _penalty_backward(c, X, memo, np.ones(X.shape[0]), grad, cfg)
    if single:
        return float(total[0]), grad[0]
    return total, grad


class FixRuleError(ValueError):
    """Raised when a fix constraint is not in assignment form."""


@dataclass(frozen=True)
class FixRule:
    """Repair rule: when `guard` is violated, assign the fix target.

    `fix` must be Relation(==, Feature(i), expr) with i absent from the
    right-hand side.
    """

    guard: Constraint
    fix: Relation

    def __post_init__(self):
        if not isinstance(self.fix, Relation) or self.fix.op != "==":
            raise FixRuleError("fix constraints must be equalities")
        if not isinstance(self.fix.left, Feature):
            raise FixRuleError("fix constraints must assign a single feature")
        if self.fix.left.index in features_of(self.fix.right):
            raise FixRuleError(
                f"fix target F{self.fix.left.index} appears on the right-hand side"
            )

    @property
    def target(self) -> int:
        return self.fix.left.index

    @property
    def expr(self) -> NumExpr:
        return self.fix.right


def fix(
    rules: list[FixRule],
    X: np.ndarray,
    cfg: PenaltyConfig = DEFAULT_PENALTY_CONFIG,
) -> np.ndarray:
    """Apply repair rules in order; later rules see earlier fixes.

    A row's target feature is reassigned only where the rule's guard is
    violated (penalty > 0, i.e. tolerance 0 for the guard test).
    """
    Xm, single = _as_matrix(X)
    out = Xm.copy()
    for rule in rules:
        violated = _penalty_forward(rule.guard, out, {}, cfg) > 0
        if np.any(violated):
            values = _forward(rule.expr, out, {})
            out[violated, rule.target] = values[violated]
    return out[0] if single else out


def assignment_fix_rules(
    cs: ConstraintSet, mutable_mask: Union[np.ndarray, None] = None
) -> list[FixRule]:
    """Derive guard==fix rules from assignment-form equality constraints.

    Skips targets flagged immutable; other constraint shapes are not
    repairable this way and are left to search.
    """
    rules = []
    for c in cs:
        if not isinstance(c, Relation) or c.op != "==":
            continue
        if not isinstance(c.left, Feature):
            continue
        if c.left.index in features_of(c.right):
            continue
        if mutable_mask is not None and not mutable_mask[c.left.index]:
            continue
        rules.append(FixRule(guard=c, fix=c))
    return rules
