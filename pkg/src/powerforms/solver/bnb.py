"""Best-first branch-and-bound over binary variables."""

from __future__ import annotations

import heapq
import itertools
import logging
import time

import numpy as np

from ..compiled import CompiledProgram
from .continuous import solve_continuous
from .types import SolveOptions, SolveResult, TerminationStatus

log = logging.getLogger(__name__)

INTEGRALITY = 1e-6


def solve_mixed(prog, opts: SolveOptions | None = None, relaxation_solver=None) -> SolveResult:
    """Branch-and-bound with ``relaxation_solver`` (default: :func:`solve_continuous`) at nodes.

    Node bounds are valid only for convex-flagged programs. For nonconvex programs the
    search is a heuristic and the best status reported is LocallyOptimal.
    """
    opts = opts or SolveOptions()
    relax = relaxation_solver or solve_continuous
    t0 = time.monotonic()
    deadline = None if opts.time_limit is None else t0 + opts.time_limit
    cp = CompiledProgram(prog)
    lo0, hi0 = prog.bounds()
    bins = np.array(prog.binaries, dtype=int)
    counter = itertools.count()

    def node_opts():
        if deadline is None:
            return opts
        left = max(deadline - time.monotonic(), 1e-3)
        return SolveOptions(opts.tol, opts.max_iter, opts.mu_init, left, opts.bnb_gap, opts.seed)

    def run(lo, hi, start=None):
        return relax(prog, node_opts(), compiled=cp, lower=lo, upper=hi, start=start)

    incumbent = None
    nodes = 0
    iters = 0
    root = run(lo0, hi0)
    nodes += 1
    iters += root.iterations
    heap = []
    if root.status.is_optimal:
        heapq.heappush(heap, (root.objective, next(counter), lo0, hi0, root))
    elif root.status is TerminationStatus.TIME_LIMIT:
        return _finish(root.status, None, prog, cp, t0, iters, nodes, None)
    elif not root.status.is_infeasible:
        return _finish(root.status, None, prog, cp, t0, iters, nodes, None)

    best_bound = root.objective if root.status.is_optimal else np.inf
    timed_out = False
    while heap:
        bound, _, lo, hi, res = heapq.heappop(heap)
        best_bound = bound
        if incumbent is not None and _closed(bound, incumbent.objective, opts.bnb_gap):
            heap.clear()
            break
        if deadline is not None and time.monotonic() > deadline:
            heapq.heappush(heap, (bound, next(counter), lo, hi, res))
            timed_out = True
            break
        vals = res.primal[bins] if len(bins) else np.zeros(0)
        frac = np.abs(vals - np.round(vals))
        free = lo[bins] < hi[bins]
        frac = np.where(free, frac, 0.0)
        if not len(bins) or frac.max() <= INTEGRALITY:
            if free.any():
                cand = _integer_resolve(run, prog, lo, hi, bins, res)
                nodes += 1
                iters += cand.iterations
            else:
                cand = res
            if cand.status.is_optimal and (incumbent is None or cand.objective < incumbent.objective):
                incumbent = cand
            continue
        k = bins[int(np.argmax(frac))]
        for v in (np.floor(res.primal[k]), np.ceil(res.primal[k])):
            clo, chi = lo.copy(), hi.copy()
            clo[k] = chi[k] = v
            child = run(clo, chi, start=res.primal)
            nodes += 1
            iters += child.iterations
            if child.status.is_optimal:
                if incumbent is None or not _closed(child.objective, incumbent.objective, opts.bnb_gap):
                    heapq.heappush(heap, (child.objective, next(counter), clo, chi, child))
            elif child.status is TerminationStatus.TIME_LIMIT:
                timed_out = True
        if timed_out:
            break

    if timed_out:
        bound = min([h[0] for h in heap] + ([incumbent.objective] if incumbent else []), default=None)
        return _finish(TerminationStatus.TIME_LIMIT, incumbent, prog, cp, t0, iters, nodes, bound)
    if incumbent is None:
        status = TerminationStatus.PROVEN_INFEASIBLE if prog.convex else TerminationStatus.LOCALLY_INFEASIBLE
        out = _finish(status, None, prog, cp, t0, iters, nodes, None)
        if root.violated_tags:
            out.violated_tags = root.violated_tags
        return out
    status = TerminationStatus.GLOBALLY_OPTIMAL if prog.convex else TerminationStatus.LOCALLY_OPTIMAL
    bound = incumbent.objective if not heap else min(best_bound, incumbent.objective)
    return _finish(status, incumbent, prog, cp, t0, iters, nodes, bound)


def _closed(bound, best, gap):
    return bound >= best - gap * max(1.0, abs(best))


def _integer_resolve(run, prog, lo, hi, bins, res):
    # fix binaries at their rounded values and re-solve the continuous remainder
    lo, hi = lo.copy(), hi.copy()
    vals = np.round(res.primal[bins])
    lo[bins] = hi[bins] = vals
    return run(lo, hi, start=res.primal)


def _finish(status, inc, prog, cp, t0, iters, nodes, bound):
    if inc is None:
        return SolveResult(status, np.nan, prog.start_point(), iterations=iters,
                           solve_seconds=time.monotonic() - t0, nodes=nodes, bound=bound)
    return SolveResult(
        status=status,
        objective=inc.objective,
        primal=inc.primal,
        duals=inc.duals,
        bound_duals=inc.bound_duals,
        iterations=iters,
        solve_seconds=time.monotonic() - t0,
        objective_scale=inc.objective_scale,
        bound=bound,
        nodes=nodes,
    )
