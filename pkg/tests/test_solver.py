import itertools
import json

import cvxpy as cp
import numpy as np
import pytest

from conftest import corpus_case
from oracles import dc_opf, soc_opf
from powerforms.compiled import CompiledProgram
from powerforms.expr import linear, quicksum
from powerforms.harness import load_case
from powerforms.problems import build_opf, build_ots
from powerforms.program import MathProgram
from powerforms.solver import (
    Outcome,
    SolutionImportError,
    SolveOptions,
    TerminationStatus,
    certify_infeasibility,
    elastic_program,
    export_solution,
    import_solution,
    solve_continuous,
    solve_mixed,
)

S = TerminationStatus


def test_boundary_optimum():
    prog = MathProgram("sq", convex=True)
    x = prog.define_variable("x", start=3.0)
    prog.post_constraint(x, 1.0, np.inf, "x_ge_1")
    prog.set_objective(x ** 2)
    res = solve_continuous(prog)
    assert res.status is S.GLOBALLY_OPTIMAL
    assert res.primal[0] == pytest.approx(1.0, abs=1e-6)
    assert res.objective == pytest.approx(1.0, abs=1e-6)


def test_empty_feasible_set_proven():
    prog = MathProgram("empty", convex=True)
    x = prog.define_variable("x")
    prog.post_constraint(x, 1.0, np.inf, "x_ge_1")
    prog.post_constraint(x, -np.inf, 0.0, "x_le_0")
    res = solve_continuous(prog)
    assert res.status is S.PROVEN_INFEASIBLE
    assert {t for t, _ in res.violated_tags} <= {"x_ge_1", "x_le_0"}
    assert sum(v for _, v in res.violated_tags) == pytest.approx(1.0, abs=1e-5)


def test_nonconvex_infeasibility_is_local():
    prog = MathProgram("circle")
    x, y = prog.define_variable("x"), prog.define_variable("y")
    prog.post_constraint(x ** 2 + y ** 2, 4.0, 4.0, "circle")
    prog.post_constraint(x, 3.0, np.inf, "x_ge_3")
    prog.set_objective(x)
    assert solve_continuous(prog).status is S.LOCALLY_INFEASIBLE


def test_crossed_node_bounds():
    prog = MathProgram("b", convex=True)
    prog.define_variable("x", 0, 1)
    res = solve_continuous(prog, lower=[2.0], upper=[1.0])
    assert res.status is S.PROVEN_INFEASIBLE


@pytest.mark.parametrize("name, form", [("case9", "acp"), ("case14", "acr"), ("case5", "socwr"), ("case14", "qcwr")])
def test_kkt_residual_recomputed(name, form):
    prog = build_opf(load_case(corpus_case(name)), form)
    opts = SolveOptions(tol=1e-6)
    res = solve_continuous(prog, opts)
    assert res.status.is_optimal
    c = CompiledProgram(prog)
    grad, J = c.gradient_and_jacobian(res.primal)
    lo, hi = prog.bounds()
    free = lo < hi
    station = res.objective_scale * grad + J.T @ res.duals + res.bound_duals
    scale = 1 + max(np.abs(res.duals).max(), np.abs(res.bound_duals).max())
    assert np.abs(station[free]).max() / scale <= 10 * opts.tol
    assert prog.max_violation(res.primal) <= 10 * opts.tol
    vals = c.constraints(res.primal)
    cl = np.array([k.lower for k in prog.constraints])
    cu = np.array([k.upper for k in prog.constraints])
    # multipliers sit only on active sides with the right sign
    slack_u = np.where(np.isfinite(cu), cu - vals, np.inf)
    slack_l = np.where(np.isfinite(cl), vals - cl, np.inf)
    y = res.duals
    assert np.all(y[slack_u > 1e-4] <= 10 * opts.tol * scale)
    assert np.all(y[slack_l > 1e-4] >= -10 * opts.tol * scale)


@pytest.mark.parametrize("name", ["case5", "case9", "case14", "case30", "case57", "case118"])
def test_dc_opf_matches_conic_oracle(name):
    net = load_case(corpus_case(name))
    res = solve_continuous(build_opf(net, "dcp"))
    assert res.status is S.GLOBALLY_OPTIMAL
    assert res.objective == pytest.approx(dc_opf(net), rel=1e-6)


# case24_ieee_rts and case118 have parallel branches
@pytest.mark.parametrize("name", ["case5", "case9", "case14", "case24_ieee_rts", "case30", "case57", "case118"])
def test_soc_opf_matches_conic_oracle(name):
    net = load_case(corpus_case(name))
    res = solve_continuous(build_opf(net, "socwr"))
    assert res.status is S.GLOBALLY_OPTIMAL
    assert res.objective == pytest.approx(soc_opf(net), rel=1e-6)


@pytest.mark.slow
def test_large_soc_relaxation_converges():
    # low-impedance lines make the cone rows hard to centre
    net = load_case(corpus_case("case1354pegase"))
    res = solve_continuous(build_opf(net, "socwr"))
    assert res.status is S.GLOBALLY_OPTIMAL
    assert res.objective == pytest.approx(74012.3846, rel=1e-6)


@pytest.mark.parametrize("seed", range(8))
def test_random_lp_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n, m = 6, 10
    A = rng.normal(size=(m, n))
    b = rng.uniform(0.5, 2.0, size=m)
    c = rng.normal(size=n)
    prog = MathProgram("lp", convex=True)
    xs = [prog.define_variable(f"x{i}", -5, 5) for i in range(n)]
    for k in range(m):
        prog.post_constraint(linear(list(zip(A[k], xs))), -np.inf, b[k], f"row{k}")
    prog.set_objective(linear(list(zip(c, xs))))
    res = solve_continuous(prog)
    x = cp.Variable(n)
    ref = cp.Problem(cp.Minimize(c @ x), [A @ x <= b, x >= -5, x <= 5])
    ref.solve(solver=cp.CLARABEL)
    assert res.status is S.GLOBALLY_OPTIMAL
    assert res.objective == pytest.approx(ref.value, rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_random_convex_quadratic_matches_oracle(seed):
    rng = np.random.default_rng(50 + seed)
    n = 5
    center = rng.normal(size=n)
    c = rng.normal(size=n)
    prog = MathProgram("ball", convex=True)
    xs = [prog.define_variable(f"x{i}") for i in range(n)]
    ball = quicksum([(v - float(ci)) ** 2 for v, ci in zip(xs, center)])
    prog.post_constraint(ball, -np.inf, 1.0, "ball")
    prog.post_constraint(linear([(1.0, v) for v in xs]), -np.inf, float(center.sum()), "half")
    prog.set_objective(linear(list(zip(c, xs))) + quicksum([v ** 2 for v in xs]) * 0.1)
    res = solve_continuous(prog)
    x = cp.Variable(n)
    ref = cp.Problem(cp.Minimize(c @ x + 0.1 * cp.sum_squares(x)),
                     [cp.sum_squares(x - center) <= 1, cp.sum(x) <= center.sum()])
    ref.solve(solver=cp.CLARABEL)
    assert res.status is S.GLOBALLY_OPTIMAL
    assert res.objective == pytest.approx(ref.value, rel=1e-6, abs=1e-6)


def test_deterministic(fixture_net):
    prog = build_opf(load_case(corpus_case("case14")), "acp")
    a, b = solve_continuous(prog), solve_continuous(prog)
    assert np.array_equal(a.primal, b.primal) and a.objective == b.objective


def test_iteration_limit():
    prog = build_opf(load_case(corpus_case("case30")), "acp")
    assert solve_continuous(prog, SolveOptions(max_iter=2)).status is S.ITERATION_LIMIT


def test_time_limit():
    prog = build_opf(load_case(corpus_case("case118")), "acp")
    res = solve_continuous(prog, SolveOptions(time_limit=1e-6))
    assert res.status is S.TIME_LIMIT


# -- branch and bound ----------------------------------------------------------------------


def test_rounding_forced():
    prog = MathProgram("z", convex=True)
    z = prog.define_variable("z", 0, 1, kind="binary")
    prog.post_constraint(z, 0.3, np.inf, "z_ge")
    prog.set_objective(linear([(1.0, z)]))
    res = solve_mixed(prog)
    assert res.status is S.GLOBALLY_OPTIMAL
    assert res.primal[0] == 1.0 and res.objective == pytest.approx(1.0)


def test_prefixed_binaries_equal_continuous(fixture_net):
    prog = build_ots(fixture_net, "dcp", switching={1: 1, 2: 0, 3: 1})
    mixed, cont = solve_mixed(prog), solve_continuous(prog)
    assert mixed.objective == pytest.approx(cont.objective, rel=1e-9)
    assert mixed.nodes == 1


def knapsack(values, weights, cap):
    prog = MathProgram("knap", convex=True)
    zs = [prog.define_variable(f"z{i}", 0, 1, kind="binary") for i in range(len(values))]
    prog.post_constraint(linear(list(zip(weights, zs))), -np.inf, cap, "cap")
    prog.set_objective(linear([(-v, z) for v, z in zip(values, zs)]))
    return prog


@pytest.mark.parametrize("seed", range(5))
def test_knapsack_against_enumeration(seed):
    rng = np.random.default_rng(seed)
    values, weights = rng.uniform(1, 10, 8), rng.uniform(1, 5, 8)
    cap = weights.sum() / 2
    best = min(-values @ np.array(p) for p in itertools.product((0, 1), repeat=8)
               if weights @ np.array(p) <= cap)
    res = solve_mixed(knapsack(values, weights, cap))
    assert res.status is S.GLOBALLY_OPTIMAL
    assert res.objective == pytest.approx(best, rel=1e-6)
    assert np.all(np.isin(res.primal, (0.0, 1.0)))


def test_mixed_infeasible():
    prog = knapsack([1.0], [2.0], 1.0)
    prog.post_constraint(linear([(1.0, prog.variables[0])]), 1.0, 1.0, "take")
    assert solve_mixed(prog).status is S.PROVEN_INFEASIBLE


# -- certification ----------------------------------------------------------------------


def test_elastic_program_shape(fixture_net):
    prog = build_opf(fixture_net, "dcp")
    ep, slacks = elastic_program(prog)
    finite_sides = sum((np.isfinite(c.lower) or c.lower == c.upper) + (np.isfinite(c.upper) and c.lower != c.upper)
                       for c in prog.constraints)
    assert ep.n_vars == prog.n_vars + sum(len(s) for s in slacks)
    assert sum(len(s) for s in slacks) >= finite_sides - sum(c.lower == c.upper for c in prog.constraints)
    assert ep.convex == prog.convex


def test_certify_overload(overload_net):
    cert = certify_infeasibility(build_opf(overload_net, "dcp"))
    assert cert.outcome is Outcome.PROVEN_INFEASIBLE
    # the 30 degree angle limit caps the flow below the 0.5 rating: (pi/6)/1.5
    assert cert.min_violation == pytest.approx(1 - (np.pi / 6) / 1.5, abs=1e-5)
    assert cert.violated_tags[0][0] == "kcl_p:bus=2"


def test_certify_feasible(fixture_net):
    cert = certify_infeasibility(build_opf(fixture_net, "socwr"))
    assert cert.outcome is Outcome.FEASIBLE_POINT_FOUND
    assert cert.violated_tags == []


def test_certify_refuses_nonconvex(fixture_net):
    with pytest.raises(ValueError):
        certify_infeasibility(build_opf(fixture_net, "acp"))


# -- solution exchange ------------------------------------------------------------------------


def test_export_import_round_trip(fixture_net):
    prog = build_opf(fixture_net, "dcp")
    res = solve_continuous(prog)
    back = import_solution(prog, json.dumps(export_solution(prog, res)))
    assert back.status is S.GLOBALLY_OPTIMAL
    assert back.objective == pytest.approx(res.objective, rel=1e-12)
    assert np.array_equal(back.primal, res.primal)


def test_import_rejects_false_optimum(fixture_net):
    prog = build_opf(fixture_net, "dcp")
    doc = export_solution(prog, solve_continuous(prog))
    doc["variables"]["pg[3]"] += 0.1
    with pytest.raises(SolutionImportError, match="kcl_p:bus="):
        import_solution(prog, doc)
    doc["status"] = "IterationLimit"
    res = import_solution(prog, doc)
    assert res.violated_tags and np.isnan(res.objective)


@pytest.mark.parametrize("edit", ["unknown", "missing", "bounds", "status"])
def test_import_rejects_malformed(fixture_net, edit):
    prog = build_opf(fixture_net, "dcp")
    doc = export_solution(prog, solve_continuous(prog))
    if edit == "unknown":
        doc["variables"]["ghost"] = 0.0
    elif edit == "missing":
        del doc["variables"]["va[2]"]
    elif edit == "bounds":
        doc["variables"]["pg[1]"] = -1.0
    else:
        doc["status"] = "Solved"
    with pytest.raises(SolutionImportError):
        import_solution(prog, doc)


def test_import_downgrades_global_claim(fixture_net):
    prog = build_opf(fixture_net, "acp")
    res = solve_continuous(prog)
    doc = export_solution(prog, res)
    doc["status"] = "GloballyOptimal"
    assert import_solution(prog, doc).status is S.LOCALLY_OPTIMAL
