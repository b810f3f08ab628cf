from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class TerminationStatus(str, Enum):
    LOCALLY_OPTIMAL = "LocallyOptimal"
    GLOBALLY_OPTIMAL = "GloballyOptimal"
    PROVEN_INFEASIBLE = "ProvenInfeasible"
    LOCALLY_INFEASIBLE = "LocallyInfeasible"
    ITERATION_LIMIT = "IterationLimit"
    TIME_LIMIT = "TimeLimit"
    NUMERICAL_ERROR = "NumericalError"

    @property
    def is_optimal(self):
        return self in (TerminationStatus.LOCALLY_OPTIMAL, TerminationStatus.GLOBALLY_OPTIMAL)

    @property
    def is_infeasible(self):
        return self in (TerminationStatus.PROVEN_INFEASIBLE, TerminationStatus.LOCALLY_INFEASIBLE)


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-6
    max_iter: int = 500
    mu_init: float = 0.1
    time_limit: float | None = None
    bnb_gap: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class SolveResult:
    """Outcome of a solve.

    ``duals`` holds one multiplier per constraint and ``bound_duals`` one per
    variable, both for the objective scaled by ``objective_scale``: at a KKT point
    ``scale * grad f + J^T duals + bound_duals = 0`` over the free variables.
    Positive multipliers belong to active upper sides.
    """

    status: TerminationStatus
    objective: float
    primal: np.ndarray
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bound_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    solve_seconds: float = 0.0
    violated_tags: list[tuple[str, float]] = field(default_factory=list)
    objective_scale: float = 1.0
    bound: float | None = None
    nodes: int = 0

    def to_dict(self):
        return {
            "status": self.status.value,
            "objective": self.objective,
            "primal": self.primal.tolist(),
            "duals": self.duals.tolist(),
            "iterations": self.iterations,
            "solve_seconds": self.solve_seconds,
            "violated_tags": [list(t) for t in self.violated_tags],
        }
