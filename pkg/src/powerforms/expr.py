"""Expression graph over program variables.

Nodes are immutable and may be shared between expressions, so an expression is a
DAG rather than a tree. The node set is deliberately small: constants, variables,
sums, products, integer powers and sin/cos/tan. Everything the power flow
formulations need is a polynomial in variables and trigonometric functions of
angle differences.
"""

from __future__ import annotations

import math
from enum import Enum
from numbers import Real

import numpy as np
import scipy.sparse as sp


class Expression:
    __slots__ = ()

    def __add__(self, other):
        return Sum((self, as_expr(other)))

    def __radd__(self, other):
        return Sum((as_expr(other), self))

    def __sub__(self, other):
        return Sum((self, -as_expr(other)))

    def __rsub__(self, other):
        return Sum((as_expr(other), -self))

    def __neg__(self):
        return Product((Constant(-1.0), self))

    def __mul__(self, other):
        return Product((self, as_expr(other)))

    def __rmul__(self, other):
        return Product((as_expr(other), self))

    def __truediv__(self, other):
        if isinstance(other, Real):
            return Product((Constant(1.0 / other), self))
        return NotImplemented

    def __pow__(self, n):
        return Power(self, n)


class Constant(Expression):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = float(value)

    def __repr__(self):
        return f"Constant({self.value!r})"


class VarKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class VarRef(Expression):
    """A decision variable. Created only through ``MathProgram.define_variable``."""

    __slots__ = ("index", "name", "lower", "upper", "kind", "start", "_owner")

    def __init__(self, index, name, lower, upper, kind, start, owner=None):
        self.index = index
        self.name = name
        self.lower = lower
        self.upper = upper
        self.kind = VarKind(kind)
        self.start = start
        self._owner = owner

    def __repr__(self):
        return f"VarRef({self.index}, {self.name!r})"


class Sum(Expression):
    __slots__ = ("args",)

    def __init__(self, args):
        self.args = tuple(args)


class Product(Expression):
    __slots__ = ("args",)

    def __init__(self, args):
        self.args = tuple(args)


class Power(Expression):
    __slots__ = ("base", "exponent")

    def __init__(self, base, exponent):
        if int(exponent) != exponent or exponent < 0:
            raise ValueError(f"only non-negative integer exponents are supported, got {exponent}")
        self.base = as_expr(base)
        self.exponent = int(exponent)


class _Unary(Expression):
    __slots__ = ("arg",)
    op = ""

    def __init__(self, arg):
        self.arg = as_expr(arg)


class Sin(_Unary):
    __slots__ = ()
    op = "sin"


class Cos(_Unary):
    __slots__ = ()
    op = "cos"


class Tan(_Unary):
    __slots__ = ()
    op = "tan"


def as_expr(x):
    if isinstance(x, Expression):
        return x
    if isinstance(x, Real):
        return Constant(x)
    raise TypeError(f"cannot use {type(x).__name__} in an expression")


def sin(x):
    return Sin(x)


def cos(x):
    return Cos(x)


def tan(x):
    return Tan(x)


def quicksum(items):
    items = [as_expr(i) for i in items]
    if not items:
        return Constant(0.0)
    return items[0] if len(items) == 1 else Sum(items)


def linear(coeffs, const=0.0):
    """Build ``const + sum(c * v)`` from (coefficient, variable) pairs without deep nesting."""
    terms = [v if c == 1 else Product((Constant(c), v)) for c, v in coeffs if c != 0]
    if const:
        terms.append(Constant(const))
    return quicksum(terms)


# trig values and first/second derivatives
_UNARY = {
    "sin": (math.sin, math.cos, lambda u: -math.sin(u)),
    "cos": (math.cos, lambda u: -math.sin(u), lambda u: -math.cos(u)),
    "tan": (
        math.tan,
        lambda u: 1.0 + math.tan(u) ** 2,
        lambda u: 2.0 * math.tan(u) * (1.0 + math.tan(u) ** 2),
    ),
}


def children(node):
    if isinstance(node, (Sum, Product)):
        return node.args
    if isinstance(node, Power):
        return (node.base,)
    if isinstance(node, _Unary):
        return (node.arg,)
    return ()


def iter_variables(expr):
    """Yield each distinct variable node reachable from ``expr``."""
    seen = set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, VarRef):
            yield node
        else:
            stack.extend(children(node))


def evaluate(expr, point):
    """Value of ``expr`` at ``point`` (indexed by variable index)."""
    memo = {}

    def ev(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Constant):
            v = node.value
        elif isinstance(node, VarRef):
            v = float(point[node.index])
        elif isinstance(node, Sum):
            v = math.fsum(ev(a) for a in node.args)
        elif isinstance(node, Product):
            v = 1.0
            for a in node.args:
                v *= ev(a)
        elif isinstance(node, Power):
            v = ev(node.base) ** node.exponent
        else:
            u = ev(node.arg)
            if node.op == "tan" and abs(math.cos(u)) < 1e-300:
                v = math.copysign(math.inf, math.sin(u))
            else:
                v = _UNARY[node.op][0](u)
        memo[key] = v
        return v

    return ev(expr)


def _outer_add(h, ga, gb, w):
    """h += w * (ga gb^T + gb ga^T)/2 restricted to the upper triangle (i <= j)."""
    for i, a in ga.items():
        for j, b in gb.items():
            key = (i, j) if i <= j else (j, i)
            val = w * a * b
            if i == j:
                h[key] = h.get(key, 0.0) + val
            else:
                h[key] = h.get(key, 0.0) + 0.5 * val
    return h


def _sym_outer(ga, gb, w):
    # w * (ga gb^T + gb ga^T), upper triangle
    h = {}
    _outer_add(h, ga, gb, w)
    _outer_add(h, gb, ga, w)
    return h


def _axpy(dst, src, w):
    for k, v in src.items():
        dst[k] = dst.get(k, 0.0) + w * v
    return dst


def _second_order(expr, point):
    """Value, gradient dict and upper-triangle Hessian dict of ``expr``."""
    memo = {}

    def d(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Constant):
            out = (node.value, {}, {})
        elif isinstance(node, VarRef):
            out = (float(point[node.index]), {node.index: 1.0}, {})
        elif isinstance(node, Sum):
            v, g, h = 0.0, {}, {}
            for a in node.args:
                va, ga, ha = d(a)
                v += va
                _axpy(g, ga, 1.0)
                _axpy(h, ha, 1.0)
            out = (v, g, h)
        elif isinstance(node, Product):
            v, g, h = 1.0, {}, {}
            for a in node.args:
                va, ga, ha = d(a)
                # (f*a)'' = f a'' + a f'' + f' a'^T + a' f'^T
                nh = {}
                _axpy(nh, ha, v)
                _axpy(nh, h, va)
                _axpy(nh, _sym_outer(g, ga, 1.0), 1.0)
                ng = {}
                _axpy(ng, ga, v)
                _axpy(ng, g, va)
                v, g, h = v * va, ng, nh
            out = (v, g, h)
        elif isinstance(node, Power):
            n = node.exponent
            vb, gb, hb = d(node.base)
            if n == 0:
                out = (1.0, {}, {})
            else:
                d1 = n * vb ** (n - 1)
                d2 = n * (n - 1) * vb ** (n - 2) if n >= 2 else 0.0
                g = _axpy({}, gb, d1)
                h = _axpy({}, hb, d1)
                _axpy(h, _sym_outer(gb, gb, 0.5 * d2), 1.0)
                out = (vb ** n, g, h)
        else:
            u, gu, hu = d(node.arg)
            f, f1, f2 = _UNARY[node.op]
            d1, d2 = f1(u), f2(u)
            g = _axpy({}, gu, d1)
            h = _axpy({}, hu, d1)
            _axpy(h, _sym_outer(gu, gu, 0.5 * d2), 1.0)
            out = (f(u), g, h)
        memo[key] = out
        return out

    return d(expr)


def differentiate(expr, point):
    """Exact gradient and Hessian of ``expr`` at ``point``.

    Returns ``(gradient, hessian)`` where ``gradient`` maps variable index to the
    partial derivative and ``hessian`` is a symmetric ``n x n`` CSR matrix. Both
    sparsity patterns depend only on the structure of ``expr``.
    """
    n = len(point)
    _, g, h = _second_order(expr, point)
    rows, cols, vals = [], [], []
    for (i, j), v in h.items():
        rows.append(i)
        cols.append(j)
        vals.append(v)
        if i != j:
            rows.append(j)
            cols.append(i)
            vals.append(v)
    hess = sp.csr_matrix((np.array(vals, dtype=float), (rows, cols)), shape=(n, n))
    return dict(sorted(g.items())), hess


# -- nested-array encoding -----------------------------------------------------------


def to_tree(expr):
    if isinstance(expr, Constant):
        return ["const", expr.value]
    if isinstance(expr, VarRef):
        return ["var", expr.index]
    if isinstance(expr, Sum):
        return ["sum", [to_tree(a) for a in expr.args]]
    if isinstance(expr, Product):
        return ["prod", [to_tree(a) for a in expr.args]]
    if isinstance(expr, Power):
        return ["pow", to_tree(expr.base), expr.exponent]
    return [expr.op, to_tree(expr.arg)]


def from_tree(tree, variables):
    op = tree[0]
    if op == "const":
        return Constant(tree[1])
    if op == "var":
        return variables[tree[1]]
    if op == "sum":
        return Sum(from_tree(t, variables) for t in tree[1])
    if op == "prod":
        return Product(from_tree(t, variables) for t in tree[1])
    if op == "pow":
        return Power(from_tree(tree[1], variables), tree[2])
    if op in _UNARY:
        return {"sin": Sin, "cos": Cos, "tan": Tan}[op](from_tree(tree[1], variables))
    raise ValueError(f"unknown expression node {op!r}")
