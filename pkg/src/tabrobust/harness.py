"""Benchmark harness: attack-set selection, robust accuracy, and budget
sweeps.

The evaluation protocol: only correctly classified rows of the critical
class are attacked; a sample counts against robust accuracy only if an
attack produced a misclassified candidate that survives independent
re-validation. Unsuccessful or invalid candidates revert to the
original (counted as correctly classified). Every success a report
contains has been re-validated here, outside the attack code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attacks import AttackBudget, caa
from .attacks.caa import AttackResult
from .attacks.validation import validity_mask
from .data import Dataset, DatasetSchema
from .engine import PenaltyConfig
from .expressions import ConstraintSet
from .metrics import classification_metrics
from .mlp import ReferenceModel
from .report import BudgetEntry, EvaluationReport

DEFAULT_ATTACK_CAP = 500

SWEEP_AXES = ("eps", "gradient_iters", "search_iters")

SWEEP_DEFAULTS = {
    "eps": [0.25, 0.5, 1.0, 5.0],
    "gradient_iters": [5, 10, 20, 100],
    "search_iters": [50, 100, 200, 1000],
}


@dataclass
class SweepSpec:
    axis: str
    values: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            self.values = list(SWEEP_DEFAULTS[self.axis])
        if any(v <= 0 for v in self.values):
            raise ValueError("sweep values must be positive")


class EmptyAttackSet(ValueError):
    """No correctly classified critical-class rows to attack."""


def select_attack_set(
    model: ReferenceModel,
    dataset: Dataset,
    schema: DatasetSchema,
    cap: Optional[int] = DEFAULT_ATTACK_CAP,
    seed: int = 0,
) -> np.ndarray:
    """Row indices to attack: critical class and correctly classified.

    Larger sets are subsampled to `cap` rows (seeded, order-preserving)
    to keep desk-scale runs tractable.
    """
    preds = model.predict(dataset.X)
    mask = (dataset.y == schema.critical_class) & (preds == dataset.y)
    indices = np.where(mask)[0]
    if indices.size == 0:
        raise EmptyAttackSet(
            "no correctly classified rows of the critical class to attack"
        )
    if cap is not None and indices.size > cap:
        rng = np.random.default_rng(np.random.SeedSequence([seed, len(indices)]))
        indices = np.sort(rng.choice(indices, size=cap, replace=False))
    return indices


def apply_attack(
    model: ReferenceModel,
    cs: ConstraintSet,
    dataset: Dataset,
    schema: DatasetSchema,
    budget: AttackBudget,
    indices: np.ndarray,
    cfg: Optional[PenaltyConfig] = None,
    workers: Optional[int] = None,
    known_candidates: Optional[dict[int, np.ndarray]] = None,
) -> AttackResult:
    Z = model.scaler.transform(dataset.X[indices])
    return caa(
        model,
        cs,
        Z,
        dataset.y[indices],
        budget,
        schema,
        cfg=cfg,
        row_indices=indices,
        workers=workers,
        known_candidates=known_candidates,
    )


def success_masks(
    result: AttackResult,
    model: ReferenceModel,
    cs: ConstraintSet,
    schema: DatasetSchema,
    budget: AttackBudget,
    cfg: PenaltyConfig,
    y: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """(constrained, unconstrained) success masks from one attack output.

    A sample succeeds under constrained validation when some attempt is
    misclassified and fully valid; under unconstrained validation the
    domain-constraint check is waived (ball, mutability, and typing
    still apply). The constrained mask is recomputed from scratch here:
    the harness never trusts the attack's own success flags.
    """
    n = len(result.samples)
    constrained = np.zeros(n, dtype=bool)
    unconstrained = np.zeros(n, dtype=bool)
    scaler = model.scaler
    for i, sample in enumerate(result.samples):
        z_orig = sample.original[None]
        for cand in sample.attempts.values():
            cand2 = cand[None]
            mis = bool(
                model.predict_proba_scaled(cand2).argmax(axis=1)[0] != y[i]
            )
            if not mis:
                continue
            if validity_mask(schema, scaler, cs, z_orig, cand2, budget, cfg)[0]:
                constrained[i] = True
            if validity_mask(
                schema, scaler, cs, z_orig, cand2, budget, cfg,
                include_constraints=False,
            )[0]:
                unconstrained[i] = True
    return constrained, unconstrained


def robust_accuracy(
    model: ReferenceModel,
    cs: ConstraintSet,
    dataset: Dataset,
    schema: DatasetSchema,
    budget: AttackBudget,
    constrained_validation: bool = True,
    cfg: Optional[PenaltyConfig] = None,
    indices: Optional[np.ndarray] = None,
    workers: Optional[int] = None,
    known_candidates: Optional[dict[int, np.ndarray]] = None,
) -> tuple[float, AttackResult]:
    """1 - (validated successes / attack-set size), plus raw outputs."""
    if cfg is None:
        cfg = PenaltyConfig()
    if indices is None:
        indices = select_attack_set(model, dataset, schema, seed=budget.seed)
    result = apply_attack(
        model, cs, dataset, schema, budget, indices,
        cfg=cfg, workers=workers, known_candidates=known_candidates,
    )
    con, uncon = success_masks(
        result, model, cs, schema, budget, cfg, dataset.y[indices]
    )
    successes = con if constrained_validation else uncon
    return 1.0 - successes.sum() / len(indices), result


def evaluate(
    model: ReferenceModel,
    cs: ConstraintSet,
    dataset: Dataset,
    schema: DatasetSchema,
    budget: AttackBudget,
    model_name: str = "reference-mlp",
    defense: str = "none",
    cfg: Optional[PenaltyConfig] = None,
    cap: Optional[int] = DEFAULT_ATTACK_CAP,
    workers: Optional[int] = None,
) -> EvaluationReport:
    """Clean metrics plus robust accuracy at one budget."""
    if cfg is None:
        cfg = PenaltyConfig()
    clean = classification_metrics(dataset.y, model.predict_proba(dataset.X)[:, 1])
    indices = select_attack_set(model, dataset, schema, cap=cap, seed=budget.seed)
    result = apply_attack(
        model, cs, dataset, schema, budget, indices, cfg=cfg, workers=workers
    )
    con, uncon = success_masks(
        result, model, cs, schema, budget, cfg, dataset.y[indices]
    )
    entry = BudgetEntry(
        axis="eps",
        value=budget.eps,
        budget=budget.to_dict(),
        robust_accuracy_constrained=1.0 - con.sum() / len(indices),
        robust_accuracy_unconstrained=1.0 - uncon.sum() / len(indices),
        n_success_constrained=int(con.sum()),
        n_success_unconstrained=int(uncon.sum()),
        wall_time=result.wall_time,
    )
    return EvaluationReport(
        model=model_name,
        defense=defense,
        seed=budget.seed,
        clean=clean,
        attack_set_size=len(indices),
        budgets=[entry],
        config={"tolerance": cfg.tolerance, "attack": budget.to_dict()},
    )


def _budget_for(base: AttackBudget, axis: str, value: float) -> AttackBudget:
    if axis == "eps":
        return base.with_(eps=float(value))
    if axis == "gradient_iters":
        return base.with_(n_iter_gradient=int(value))
    return base.with_(n_gen=int(value))


def budget_sweep(
    model: ReferenceModel,
    cs: ConstraintSet,
    dataset: Dataset,
    schema: DatasetSchema,
    sweep: SweepSpec,
    base_budget: Optional[AttackBudget] = None,
    cfg: Optional[PenaltyConfig] = None,
    cap: Optional[int] = DEFAULT_ATTACK_CAP,
    workers: Optional[int] = None,
) -> list[BudgetEntry]:
    """Run one robust-accuracy evaluation per sweep value.

    Values are processed in increasing order; each evaluation seeds its
    candidate pool with every valid success found at a smaller budget,
    so robust accuracy is non-increasing along the sweep by
    construction (budgets only grow, and for the eps axis previously
    valid candidates stay inside the larger ball).
    """
    if base_budget is None:
        base_budget = AttackBudget()
    if cfg is None:
        cfg = PenaltyConfig()
    indices = select_attack_set(model, dataset, schema, cap=cap, seed=base_budget.seed)
    y_attack = dataset.y[indices]
    pool: dict[int, np.ndarray] = {}
    entries = []
    for value in sorted(sweep.values):
        budget = _budget_for(base_budget, sweep.axis, value)
        result = apply_attack(
            model, cs, dataset, schema, budget, indices,
            cfg=cfg, workers=workers, known_candidates=pool,
        )
        con, uncon = success_masks(
            result, model, cs, schema, budget, cfg, y_attack
        )
        for i, sample in enumerate(result.samples):
            if con[i] and sample.row_index not in pool:
                pool[sample.row_index] = sample.candidate.copy()
        entries.append(
            BudgetEntry(
                axis=sweep.axis,
                value=float(value),
                budget=budget.to_dict(),
                robust_accuracy_constrained=1.0 - con.sum() / len(indices),
                robust_accuracy_unconstrained=1.0 - uncon.sum() / len(indices),
                n_success_constrained=int(con.sum()),
                n_success_unconstrained=int(uncon.sum()),
                wall_time=result.wall_time,
            )
        )
    return entries
