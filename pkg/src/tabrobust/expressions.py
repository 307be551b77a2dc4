"""Expression trees for feature constraints.

Numeric expressions (`NumExpr`) are arithmetic trees over named dataset
features; constraints combine them with relational and boolean nodes.
All nodes are immutable value objects, so trees can be shared freely
across threads. Evaluation is vectorized over row-major feature
matrices, and `eval_with_gradient` runs reverse-mode differentiation
over the same tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

# Guards for operations with restricted domains. Division clamps the
# denominator to +/- DIV_EPS (sign preserved), log clamps its argument
# from below. Both keep penalties and their gradients finite everywhere.
DIV_EPS = 1e-12
LOG_EPS = 1e-12


class NumExpr:
    """Base class for numeric expression nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Constant(NumExpr):
    value: float


@dataclass(frozen=True)
class Feature(NumExpr):
    index: int


@dataclass(frozen=True)
class Add(NumExpr):
    left: NumExpr
    right: NumExpr


@dataclass(frozen=True)
class Sub(NumExpr):
    left: NumExpr
    right: NumExpr


@dataclass(frozen=True)
class Mul(NumExpr):
    left: NumExpr
    right: NumExpr


@dataclass(frozen=True)
class SafeDiv(NumExpr):
    left: NumExpr
    right: NumExpr


@dataclass(frozen=True)
class Pow(NumExpr):
    base: NumExpr
    exponent: NumExpr


@dataclass(frozen=True)
class Log(NumExpr):
    arg: NumExpr


@dataclass(frozen=True)
class Abs(NumExpr):
    arg: NumExpr


@dataclass(frozen=True)
class Min(NumExpr):
    args: tuple[NumExpr, ...]

    def __post_init__(self):
        if len(self.args) < 1:
            raise ValueError("Min needs at least one argument")
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class Max(NumExpr):
    args: tuple[NumExpr, ...]

    def __post_init__(self):
        if len(self.args) < 1:
            raise ValueError("Max needs at least one argument")
        object.__setattr__(self, "args", tuple(self.args))


RELATION_OPS = ("==", "<=", "<", ">=", ">")

# Negation of a relation is the relation with the flipped operator.
# Equality has no complement in the operator set, so it cannot appear
# where a negation is required (implication guards).
FLIPPED_OP = {"<=": ">", "<": ">=", ">=": "<", ">": "<="}


class Constraint:
    """Base class for constraint nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Relation(Constraint):
    op: str
    left: NumExpr
    right: NumExpr

    def __post_init__(self):
        if self.op not in RELATION_OPS:
            raise ValueError(f"unknown relational operator {self.op!r}")

    def negated(self) -> "Relation":
        if self.op == "==":
            raise ValueError("equality relations cannot be negated")
        return Relation(FLIPPED_OP[self.op], self.left, self.right)


@dataclass(frozen=True)
class And(Constraint):
    children: tuple[Constraint, ...]

    def __post_init__(self):
        if len(self.children) < 1:
            raise ValueError("And needs at least one child")
        object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class Or(Constraint):
    children: tuple[Constraint, ...]

    def __post_init__(self):
        if len(self.children) < 1:
            raise ValueError("Or needs at least one child")
        object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class Implies(Constraint):
    guard: Relation
    body: Constraint

    def __post_init__(self):
        if not isinstance(self.guard, Relation):
            raise ValueError("implication guards must be plain relations")
        if self.guard.op == "==":
            raise ValueError("equality guards are not supported in implications")


@dataclass
class ConstraintSet:
    """Ordered, flat collection of constraints.

    `source_text` keeps the original line for each constraint when the
    set was parsed from a file (None for programmatic constraints).
    """

    constraints: list[Constraint] = field(default_factory=list)
    source_text: list[Union[str, None]] = field(default_factory=list)

    def __post_init__(self):
        if not self.source_text:
            self.source_text = [None] * len(self.constraints)
        if len(self.source_text) != len(self.constraints):
            raise ValueError("source_text length must match constraints")

    def __len__(self) -> int:
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def add(self, constraint: Constraint, source: Union[str, None] = None) -> None:
        self.constraints.append(constraint)
        self.source_text.append(source)

    def max_feature_index(self) -> int:
        indices = set()
        for c in self.constraints:
            indices |= features_of(c)
        return max(indices) if indices else -1


def features_of(node: Union[NumExpr, Constraint]) -> set[int]:
    """Set of feature indices referenced anywhere in the tree."""
    out: set[int] = set()
    stack: list[Union[NumExpr, Constraint]] = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Feature):
            out.add(n.index)
        elif isinstance(n, Constant):
            pass
        elif isinstance(n, (Add, Sub, Mul, SafeDiv)):
            stack.append(n.left)
            stack.append(n.right)
        elif isinstance(n, Pow):
            stack.append(n.base)
            stack.append(n.exponent)
        elif isinstance(n, (Log, Abs)):
            stack.append(n.arg)
        elif isinstance(n, (Min, Max)):
            stack.extend(n.args)
        elif isinstance(n, Relation):
            stack.append(n.left)
            stack.append(n.right)
        elif isinstance(n, (And, Or)):
            stack.extend(n.children)
        elif isinstance(n, Implies):
            stack.append(n.guard)
            stack.append(n.body)
        else:
            raise TypeError(f"unknown node type {type(n).__name__}")
    return out


def validate_features(node: Union[NumExpr, Constraint], n_features: int) -> None:
    """Raise if the tree references features outside [0, n_features)."""
    for idx in features_of(node):
        if not 0 <= idx < n_features:
            raise ValueError(
                f"feature index {idx} out of range for {n_features} features"
            )


def _as_matrix(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ValueError(f"expected vector or matrix, got ndim={x.ndim}")


def evaluate_expr(expr: NumExpr, x: np.ndarray) -> Union[float, np.ndarray]:
    """Evaluate an expression on a feature vector or row-major matrix.

    Returns a scalar for a single vector, a length-n array for an
    (n, d) matrix.
    """
    X, single = _as_matrix(x)
    values = _forward(expr, X, {})
    return float(values[0]) if single else values


def _forward(expr: NumExpr, X: np.ndarray, memo: dict) -> np.ndarray:
    """Forward pass; memoizes per-node values (keyed by identity) so a
    subsequent backward pass can reuse them."""
    key = id(expr)
    if key in memo:
        return memo[key]
    if isinstance(expr, Constant):
        val = np.full(X.shape[0], expr.value, dtype=float)
    elif isinstance(expr, Feature):
        val = X[:, expr.index].astype(float, copy=True)
    elif isinstance(expr, Add):
        val = _forward(expr.left, X, memo) + _forward(expr.right, X, memo)
    elif isinstance(expr, Sub):
        val = _forward(expr.left, X, memo) - _forward(expr.right, X, memo)
    elif isinstance(expr, Mul):
        val = _forward(expr.left, X, memo) * _forward(expr.right, X, memo)
    elif isinstance(expr, SafeDiv):
        num = _forward(expr.left, X, memo)
        den = _clamp_denominator(_forward(expr.right, X, memo))
        val = num / den
    elif isinstance(expr, Pow):
        base = _forward(expr.base, X, memo)
        exp = _forward(expr.exponent, X, memo)
        val = np.power(base, exp)
    elif isinstance(expr, Log):
        val = np.log(np.maximum(_forward(expr.arg, X, memo), LOG_EPS))
    elif isinstance(expr, Abs):
        val = np.abs(_forward(expr.arg, X, memo))
    elif isinstance(expr, Min):
        val = np.min(np.stack([_forward(a, X, memo) for a in expr.args]), axis=0)
    elif isinstance(expr, Max):
        val = np.max(np.stack([_forward(a, X, memo) for a in expr.args]), axis=0)
    else:
        raise TypeError(f"unknown expression node {type(expr).__name__}")
    memo[key] = val
    return val


def _clamp_denominator(den: np.ndarray) -> np.ndarray:
    sign = np.where(den < 0, -1.0, 1.0)
    return sign * np.maximum(np.abs(den), DIV_EPS)


def eval_with_gradient(expr: NumExpr, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value and d(value)/dx of an expression, reverse mode.

    Works row-wise on an (n, d) matrix: returns ((n,), (n, d)). At
    non-differentiable points the subgradient convention follows the
    first argument attaining the extremum (min/max) and sign(0) = 0
    for abs.
    """
    X, single = _as_matrix(x)
    memo: dict = {}
    value = _forward(expr, X, memo)
    grad = np.zeros_like(X)
    _backward(expr, X, memo, np.ones(X.shape[0]), grad)
    if single:
        return value[0], grad[0]
    return value, grad


def _backward(
    expr: NumExpr, X: np.ndarray, memo: dict, adj: np.ndarray, grad: np.ndarray
) -> None:
    if isinstance(expr, Constant):
        return
    if isinstance(expr, Feature):
        grad[:, expr.index] += adj
        return
    if isinstance(expr, Add):
        _backward(expr.left, X, memo, adj, grad)
        _backward(expr.right, X, memo, adj, grad)
        return
    if isinstance(expr, Sub):
        _backward(expr.left, X, memo, adj, grad)
        _backward(expr.right, X, memo, -adj, grad)
        return
    if isinstance(expr, Mul):
        lv = memo[id(expr.left)]
        rv = memo[id(expr.right)]
        _backward(expr.left, X, memo, adj * rv, grad)
        _backward(expr.right, X, memo, adj * lv, grad)
        return
    if isinstance(expr, SafeDiv):
        num = memo[id(expr.left)]
        den_raw = memo[id(expr.right)]
        den = _clamp_denominator(den_raw)
        _backward(expr.left, X, memo, adj / den, grad)
        # Inside the clamp the output is constant in the denominator.
        active = (np.abs(den_raw) >= DIV_EPS).astype(float)
        _backward(expr.right, X, memo, -adj * num / (den * den) * active, grad)
        return
    if isinstance(expr, Pow):
        base = memo[id(expr.base)]
        exp = memo[id(expr.exponent)]
        val = memo[id(expr)]
        with np.errstate(divide="ignore", invalid="ignore"):
            dbase = np.where(base != 0.0, exp * val / base, 0.0)
            # d/d_exp needs log(base); undefined for base <= 0.
            dexp = np.where(base > 0.0, val * np.log(np.maximum(base, LOG_EPS)), 0.0)
        _backward(expr.base, X, memo, adj * np.nan_to_num(dbase), grad)
        _backward(expr.exponent, X, memo, adj * dexp, grad)
        return
    if isinstance(expr, Log):
        arg = memo[id(expr.arg)]
        active = (arg >= LOG_EPS).astype(float)
        _backward(expr.arg, X, memo, adj * active / np.maximum(arg, LOG_EPS), grad)
        return
    if isinstance(expr, Abs):
        arg = memo[id(expr.arg)]
        _backward(expr.arg, X, memo, adj * np.sign(arg), grad)
        return
    if isinstance(expr, (Min, Max)):
        stacked = np.stack([memo[id(a)] for a in expr.args])
        # argmin/argmax pick the first index on ties.
        sel = np.argmin(stacked, axis=0) if isinstance(expr, Min) else np.argmax(
            stacked, axis=0
        )
        for i, a in enumerate(expr.args):
            _backward(a, X, memo, adj * (sel == i).astype(float), grad)
        return
    raise TypeError(f"unknown expression node {type(expr).__name__}")
