import math

import numpy as np
import pytest

from exprgen import central_gradient, central_jacobian, random_expression
from powerforms.compiled import CompiledProgram
from powerforms.errors import NonAffineArgument
from powerforms.expr import Constant, cos, differentiate, evaluate, from_tree, sin, tan, to_tree
from powerforms.program import MathProgram


def two_vars():
    prog = MathProgram("t")
    return prog, prog.define_variable("x"), prog.define_variable("y")


def dense_grad(expr, x):
    g, _ = differentiate(expr, x)
    out = np.zeros(len(x))
    for i, v in g.items():
        out[i] = v
    return out


def test_evaluate_examples():
    _, x, y = two_vars()
    assert evaluate(x ** 2, [3.0, 0.0]) == 9.0
    assert evaluate(sin(x) * cos(y), [0.0, 0.0]) == 0.0


def test_polar_product_value_and_angle_derivative():
    prog = MathProgram("polar")
    vm_i, vm_j = prog.define_variable("vm_i"), prog.define_variable("vm_j")
    va_i, va_j = prog.define_variable("va_i"), prog.define_variable("va_j")
    re = vm_i * vm_j * cos(va_i - va_j)
    point = np.array([1.0, 1.0, 0.1, 0.0])
    assert evaluate(re, point) == pytest.approx(0.9950042, abs=1e-7)
    g, _ = differentiate(re, point)
    assert g[2] == pytest.approx(-0.0998334, abs=1e-7)
    fd = central_gradient(lambda p: evaluate(re, p), point)
    assert g[2] == pytest.approx(fd[2], abs=1e-9)


def test_sin_derivatives_at_zero():
    prog = MathProgram("s")
    x = prog.define_variable("x")
    g, h = differentiate(sin(x), [0.0])
    assert g[0] == 1.0
    assert h[0, 0] == 0.0


def test_bilinear_derivatives():
    _, x, y = two_vars()
    g, h = differentiate(x * y, [2.0, 3.0])
    assert (g[0], g[1]) == (3.0, 2.0)
    assert h[0, 1] == 1.0 and h[1, 0] == 1.0
    assert h[0, 0] == 0.0


def test_tan_at_pole_overflows_without_error():
    prog = MathProgram("t")
    x = prog.define_variable("x")
    v = evaluate(tan(x), [math.pi / 2])
    assert abs(v) > 1e15


def test_constant_gradient_is_empty():
    g, h = differentiate(Constant(4.0), [1.0, 2.0])
    assert g == {}
    assert h.nnz == 0


def test_sparsity_independent_of_point():
    _, x, y = two_vars()
    e = x * x * y + sin(y)
    _, h1 = differentiate(e, [0.0, 0.0])
    _, h2 = differentiate(e, [1.3, -0.4])
    g1, _ = differentiate(e, [0.0, 0.0])
    g2, _ = differentiate(e, [1.3, -0.4])
    assert set(g1) == set(g2)
    h1.sort_indices()
    h2.sort_indices()
    assert np.array_equal(h1.indices, h2.indices) and np.array_equal(h1.indptr, h2.indptr)


def test_tree_round_trip():
    prog, x, y = two_vars()
    e = sin(x - 2 * y) * (x ** 3 + tan(y)) - 4
    back = from_tree(to_tree(e), prog.variables)
    for p in ([0.1, 0.2], [-0.7, 0.3]):
        assert evaluate(back, p) == evaluate(e, p)


@pytest.mark.parametrize("seed", range(4))
def test_random_derivatives_against_finite_differences(seed):
    rng = np.random.default_rng(seed)
    prog = MathProgram("r")
    xs = [prog.define_variable(f"x{i}") for i in range(4)]
    for _ in range(50):
        e = random_expression(rng, xs)
        p = rng.uniform(-1, 1, size=4)
        g = dense_grad(e, p)
        fd = central_gradient(lambda q: evaluate(e, q), p)
        assert np.all(np.abs(g - fd) <= 1e-6 * (1 + np.abs(g)))
        _, h = differentiate(e, p)
        H = h.toarray()
        assert np.array_equal(H, H.T)
        fdh = central_jacobian(lambda q: dense_grad(e, q), p)
        assert np.all(np.abs(H - fdh) <= 1e-6 * (1 + np.abs(H)))


def random_program(rng, n=5, m=6):
    prog = MathProgram("compiled")
    xs = [prog.define_variable(f"x{i}", -1, 1) for i in range(n)]
    for k in range(m):
        prog.post_constraint(random_expression(rng, xs, depth=3, affine_trig=True), -1, 1, f"c{k}")
    prog.set_objective(random_expression(rng, xs, depth=3, affine_trig=True))
    return prog


@pytest.mark.parametrize("seed", range(10))
def test_compiled_program_matches_graph(seed):
    rng = np.random.default_rng(100 + seed)
    prog = random_program(rng)
    cp = CompiledProgram(prog)
    x = rng.uniform(-1, 1, size=prog.n_vars)
    lam = rng.normal(size=len(prog.constraints))
    bodies = [c.body for c in prog.constraints]
    assert cp.objective(x) == pytest.approx(evaluate(prog.objective, x), rel=1e-12, abs=1e-12)
    assert cp.constraints(x) == pytest.approx([evaluate(b, x) for b in bodies], rel=1e-12, abs=1e-12)
    grad, J = cp.gradient_and_jacobian(x)
    assert grad == pytest.approx(dense_grad(prog.objective, x), rel=1e-10, abs=1e-12)
    for k, b in enumerate(bodies):
        assert J[k].toarray().ravel() == pytest.approx(dense_grad(b, x), rel=1e-10, abs=1e-12)
    H = cp.hessian(x, 0.7, lam).toarray()
    ref = 0.7 * differentiate(prog.objective, x)[1].toarray()
    for w, b in zip(lam, bodies):
        ref += w * differentiate(b, x)[1].toarray()
    assert H == pytest.approx(ref, rel=1e-10, abs=1e-10)
    assert np.array_equal(H, H.T)


def test_compiler_rejects_nonaffine_trig_argument():
    prog, x, y = two_vars()
    prog.post_constraint(sin(x * y), 0, 0, "bad")
    with pytest.raises(NonAffineArgument):
        CompiledProgram(prog)
