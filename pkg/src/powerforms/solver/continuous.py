from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..compiled import CompiledProgram
from ..expr import Product, Constant, Sum, quicksum
from ..program import Constraint, MathProgram
from .ipm import interior_point
from .types import SolveOptions, SolveResult, TerminationStatus

log = logging.getLogger(__name__)

_REASON_STATUS = {
    "max_iter": TerminationStatus.ITERATION_LIMIT,
    "time": TerminationStatus.TIME_LIMIT,
    "stall": TerminationStatus.NUMERICAL_ERROR,
    "numerical": TerminationStatus.NUMERICAL_ERROR,
}


def _deadline(opts, start):
    return None if opts.time_limit is None else start + opts.time_limit


def _compiled(prog, compiled):
    return compiled if compiled is not None else CompiledProgram(prog)


def solve_continuous(prog: MathProgram, opts: SolveOptions | None = None, *, compiled=None,
                     lower=None, upper=None, start=None) -> SolveResult:
    """Solve ``prog`` with binaries treated as continuous on their bounds.

    ``lower``/``upper`` override the variable bounds (branch-and-bound uses this to
    fix binaries without rebuilding). When the iteration fails, an elastic phase-1
    program decides whether the failure is an infeasibility.
    """
    opts = opts or SolveOptions()
    t0 = time.monotonic()
    cp = _compiled(prog, compiled)
    lo, hi = prog.bounds()
    lo = lo if lower is None else np.asarray(lower, dtype=float)
    hi = hi if upper is None else np.asarray(upper, dtype=float)
    if np.any(lo > hi):
        return _infeasible_bounds(prog, lo, hi, t0)
    x0 = prog.start_point() if start is None else np.asarray(start, dtype=float)
    deadline = _deadline(opts, t0)

    out = interior_point(cp, lo, hi, x0, tol=opts.tol, max_iter=opts.max_iter,
                         mu_init=opts.mu_init, deadline=deadline)
    iters = out.iterations
    if out.reason != "converged" and out.reason != "time":
        cert = _phase1(prog, lo, hi, x0, opts, deadline)
        iters += cert.iterations
        if cert.outcome is not Outcome.FEASIBLE_POINT_FOUND and cert.decided:
            status = (TerminationStatus.PROVEN_INFEASIBLE if prog.convex
                      else TerminationStatus.LOCALLY_INFEASIBLE)
            return SolveResult(status, np.nan, cert.point[:prog.n_vars], iterations=iters,
                               solve_seconds=time.monotonic() - t0, violated_tags=cert.violated_tags)
        if cert.outcome is Outcome.FEASIBLE_POINT_FOUND:
            # restart from the feasible point found by phase 1
            left = max(opts.max_iter - iters, 1)
            retry = interior_point(cp, lo, hi, cert.point[:prog.n_vars], tol=opts.tol, max_iter=left,
                                   mu_init=opts.mu_init, deadline=deadline)
            iters += retry.iterations
            if retry.reason == "converged":
                out = retry
    if out.reason == "converged":
        status = TerminationStatus.GLOBALLY_OPTIMAL if prog.convex else TerminationStatus.LOCALLY_OPTIMAL
    else:
        status = _REASON_STATUS[out.reason]
    return SolveResult(
        status=status,
        objective=cp.objective(out.x),
        primal=out.x,
        duals=out.y,
        bound_duals=out.zb,
        iterations=iters,
        solve_seconds=time.monotonic() - t0,
        objective_scale=out.scale,
    )


def _infeasible_bounds(prog, lo, hi, t0):
    tags = [(f"bounds:{prog.variables[i].name}", float(lo[i] - hi[i])) for i in np.flatnonzero(lo > hi)]
    status = TerminationStatus.PROVEN_INFEASIBLE if prog.convex else TerminationStatus.LOCALLY_INFEASIBLE
    return SolveResult(status, np.nan, np.clip(prog.start_point(), lo, np.maximum(lo, hi)),
                       solve_seconds=time.monotonic() - t0, violated_tags=tags)


# -- infeasibility certification --------------------------------------------------------


class Outcome(str, Enum):
    PROVEN_INFEASIBLE = "ProvenInfeasible"
    LOCALLY_INFEASIBLE = "LocallyInfeasible"
    FEASIBLE_POINT_FOUND = "FeasiblePointFound"
    UNDECIDED = "Undecided"


@dataclass
class Certificate:
    outcome: Outcome
    min_violation: float
    point: np.ndarray
    violated_tags: list[tuple[str, float]] = field(default_factory=list)
    phase1_status: TerminationStatus | None = None
    iterations: int = 0
    solve_seconds: float = 0.0

    @property
    def decided(self):
        return self.outcome is not Outcome.UNDECIDED


def elastic_program(prog: MathProgram, lower=None, upper=None, compiled=None):
    """Phase-1 copy of ``prog``: every finite constraint side gets a nonnegative slack.

    Returns ``(program, slacks)`` where ``slacks[k]`` lists the slack variable indices
    attached to constraint ``k``. The objective is the plain sum of slacks.
    """
    lo, hi = prog.bounds()
    lo = lo if lower is None else lower
    hi = hi if upper is None else upper
    ep = prog.copy_with_bounds(lo, hi, name=f"{prog.name}:phase1")
    x0 = np.clip(prog.start_point(), lo, hi)
    c0 = _compiled(prog, compiled).constraints(x0)
    slacks = []
    cons = []
    all_slack = []
    for k, con in enumerate(ep.constraints):
        terms = [con.body]
        mine = []
        if np.isfinite(con.lower):
            p = ep.define_variable(f"elastic_lo[{k}]", 0.0, np.inf, start=max(con.lower - c0[k], 0.0) + 1.0)
            terms.append(p)
            mine.append(p.index)
        if np.isfinite(con.upper):
            q = ep.define_variable(f"elastic_up[{k}]", 0.0, np.inf, start=max(c0[k] - con.upper, 0.0) + 1.0)
            terms.append(Product((Constant(-1.0), q)))
            mine.append(q.index)
        slacks.append(mine)
        all_slack.extend(mine)
        cons.append(Constraint(Sum(terms), con.lower, con.upper, con.tag))
    ep.constraints = cons
    ep.objective = quicksum(ep.variables[i] for i in all_slack)
    return ep, slacks


def _phase1(prog, lo, hi, x0, opts, deadline):
    t0 = time.monotonic()
    ep, slacks = elastic_program(prog, lo, hi)
    elo, ehi = ep.bounds()
    start = ep.start_point()
    start[:prog.n_vars] = np.clip(x0, lo, hi)
    cp = CompiledProgram(ep)
    out = interior_point(cp, elo, ehi, start, tol=opts.tol, max_iter=opts.max_iter,
                         mu_init=opts.mu_init, deadline=deadline, scale=1.0)
    total = cp.objective(out.x)
    per_con = [(prog.constraints[k].tag, float(sum(out.x[i] for i in idx))) for k, idx in enumerate(slacks)]
    violated = sorted(((t, v) for t, v in per_con if v > opts.tol), key=lambda tv: (-tv[1], tv[0]))
    converged = out.reason == "converged"
    status = TerminationStatus.GLOBALLY_OPTIMAL if (converged and prog.convex) else (
        TerminationStatus.LOCALLY_OPTIMAL if converged else _REASON_STATUS[out.reason])
    threshold = 10 * opts.tol
    if converged and total > threshold:
        outcome = Outcome.PROVEN_INFEASIBLE if prog.convex else Outcome.LOCALLY_INFEASIBLE
    elif total <= threshold and out.max_violation <= opts.tol:
        outcome = Outcome.FEASIBLE_POINT_FOUND
    elif not prog.convex and out.reason == "stall" and total > threshold:
        outcome = Outcome.LOCALLY_INFEASIBLE
    else:
        outcome = Outcome.UNDECIDED
    return Certificate(outcome, float(total), out.x, violated, status, out.iterations,
                       time.monotonic() - t0)


def certify_infeasibility(prog: MathProgram, opts: SolveOptions | None = None) -> Certificate:
    """Minimize total constraint violation; a positive global minimum proves infeasibility.

    Requires a convex-flagged program: only then is the phase-1 minimum global and
    the ProvenInfeasible outcome an actual proof.
    """
    if not prog.convex:
        raise ValueError("certify_infeasibility needs a convex program (DCP, SOCWR or QCWR build)")
    opts = opts or SolveOptions()
    lo, hi = prog.bounds()
    cert = _phase1(prog, lo, hi, prog.start_point(), opts, _deadline(opts, time.monotonic()))
    cert.point = cert.point[:prog.n_vars]
    if cert.outcome is not Outcome.PROVEN_INFEASIBLE:
        cert.violated_tags = [] if cert.outcome is Outcome.FEASIBLE_POINT_FOUND else cert.violated_tags
    return cert
