"""Attack budgets and the gradient attack's checkpoint schedule."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Union

NORMS = ("L2", "Linf")


@dataclass(frozen=True)
class AttackBudget:
    """Perturbation and iteration budget, in scaled [0, 1] space.

    Defaults are the standard ensemble configuration: 10 gradient
    iterations; 100 generations of 100 offspring with 200 survivors.
    `lam` weighs the constraint penalty inside the gradient attack's
    objective (adapted upward when the best candidate stays invalid).
    """

    norm: str = "L2"
    eps: float = 0.5
    n_iter_gradient: int = 10
    n_gen: int = 100
    n_off: int = 100
    n_pop: int = 200
    seed: int = 0
    lam: float = 0.5

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.n_iter_gradient < 1 or self.n_off < 1 or self.n_pop < 1:
            raise ValueError("iteration and population counts must be positive")
        if self.n_gen < 0:
            raise ValueError("n_gen must be nonnegative")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")

    def with_(self, **kwargs) -> "AttackBudget":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        return {
            "norm": self.norm,
            "eps": self.eps,
            "n_iter_gradient": self.n_iter_gradient,
            "n_gen": self.n_gen,
            "n_off": self.n_off,
            "n_pop": self.n_pop,
            "seed": self.seed,
            "lambda": self.lam,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackBudget":
        known = {
            "norm",
            "eps",
            "n_iter_gradient",
            "n_gen",
            "n_off",
            "n_pop",
            "seed",
            "lambda",
            "tolerance",
        }
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown attack config keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in d.items() if k not in ("lambda", "tolerance")}
        if "lambda" in d:
            kwargs["lam"] = d["lambda"]
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "AttackBudget":
        return cls.from_dict(json.loads(Path(path).read_text()))


def checkpoint_schedule(n_iter: int) -> list[int]:
    """Step-halving checkpoints for an n_iter-iteration gradient attack.

    Built from the fraction sequence p_0 = 0, p_1 = 0.22,
    p_{j+1} = p_j + max(p_j - p_{j-1} - 0.03, 0.06), with checkpoints
    ceil(p_j * n_iter) capped at n_iter. Exact rational arithmetic
    avoids float-rounding artifacts in the ceil.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    p_prev, p_cur = Fraction(0), Fraction(22, 100)
    points = {0}
    step_floor = Fraction(6, 100)
    shrink = Fraction(3, 100)
    while True:
        w = math.ceil(p_cur * n_iter)
        if w >= n_iter:
            points.add(n_iter)
            break
        points.add(w)
        p_prev, p_cur = p_cur, p_cur + max(p_cur - p_prev - shrink, step_floor)
    return sorted(points)
