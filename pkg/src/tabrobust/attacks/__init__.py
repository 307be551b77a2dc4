"""Constraint-aware evasion attacks: gradient (CAPGD), evolutionary
(MOEVA), and their sequential ensemble (CAA)."""

from .budget import AttackBudget, checkpoint_schedule
from .caa import AttackResult, SampleResult, caa
from .capgd import capgd
from .moeva import moeva
from .projection import distance, project
from .validation import validity_mask

__all__ = [
    "AttackBudget",
    "AttackResult",
    "SampleResult",
    "caa",
    "capgd",
    "checkpoint_schedule",
    "distance",
    "moeva",
    "project",
    "validity_mask",
]
