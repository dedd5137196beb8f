"""Bell tests with inefficient detectors in high dimension.

Outcome tables for the bit-string-labelled measurement family, the
same-outcome Bell expression, avoidance sets bounding local models, LP
tests of local simulability, and the translations between local models with
non-clicks and protocols that communicate.
"""

from .bits import BitString, hamming
from .errors import BudgetExhausted, CapExceeded, IterationCapExceeded, SolverError, ValidationError
from .scenario import (
    BctScenario,
    EfficiencyModel,
    ExplicitScenario,
    JointTable,
    build_bct_scenario,
    joint_amplitude,
    joint_prob,
    load_explicit_scenario,
    outcome_table,
)

__all__ = [
    "BitString",
    "hamming",
    "BudgetExhausted",
    "CapExceeded",
    "IterationCapExceeded",
    "SolverError",
    "ValidationError",
    "BctScenario",
    "EfficiencyModel",
    "ExplicitScenario",
    "JointTable",
    "build_bct_scenario",
    "joint_amplitude",
    "joint_prob",
    "load_explicit_scenario",
    "outcome_table",
]
