"""Solver-agnostic mathematical program: variables, constraints and a minimized objective."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsCrossed, ForeignVariable
from .expr import (
    Constant,
    Expression,
    Power,
    Product,
    Sum,
    VarKind,
    VarRef,
    as_expr,
    evaluate,
    from_tree,
    iter_variables,
    to_tree,
    _Unary,
)

INF = math.inf


@dataclass
class Constraint:
    body: Expression
    lower: float
    upper: float
    tag: str

    @property
    def is_equality(self):
        return self.lower == self.upper


@dataclass
class MathProgram:
    """Minimization program. Single writer while building; treat as read-only afterwards.

    ``convex`` is set by problem builders whose formulation yields a convex program;
    the solver uses it to decide whether a local optimum is global and whether an
    infeasibility certificate is a proof.
    """

    name: str = ""
    variables: list[VarRef] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: Expression = field(default_factory=lambda: Constant(0.0))
    convex: bool = False

    sense = "minimize"

    def __post_init__(self):
        self._by_name = {v.name: v for v in self.variables}

    def define_variable(self, name, lower=-INF, upper=INF, kind=VarKind.CONTINUOUS, start=0.0):
        kind = VarKind(kind)
        if kind is VarKind.BINARY:
            lower, upper = max(lower, 0.0), min(upper, 1.0)
        if lower > upper:
            raise BoundsCrossed(name, lower, upper)
        start = min(max(float(start), lower), upper)
        v = VarRef(len(self.variables), name, float(lower), float(upper), kind, start, owner=self)
        self.variables.append(v)
        self._by_name[name] = v
        return v

    def var(self, name):
        return self._by_name[name]

    def _check_owned(self, expr):
        for v in iter_variables(expr):
            if v.index >= len(self.variables) or self.variables[v.index] is not v:
                raise ForeignVariable(v.index, v.name)

    def post_constraint(self, body, lower, upper, tag):
        body = as_expr(body)
        if lower > upper:
            raise ValueError(f"constraint {tag!r}: lower bound {lower} exceeds upper bound {upper}")
        self._check_owned(body)
        self.constraints.append(Constraint(body, float(lower), float(upper), tag))
        return len(self.constraints) - 1

    def set_objective(self, expr):
        expr = as_expr(expr)
        self._check_owned(expr)
        self.objective = expr

    @property
    def n_vars(self):
        return len(self.variables)

    @property
    def binaries(self):
        return [v.index for v in self.variables if v.kind is VarKind.BINARY]

    def start_point(self):
        return np.array([v.start for v in self.variables], dtype=float)

    def bounds(self):
        lo = np.array([v.lower for v in self.variables], dtype=float)
        hi = np.array([v.upper for v in self.variables], dtype=float)
        return lo, hi

    def evaluate_objective(self, point):
        return evaluate(self.objective, point)

    def violations(self, point):
        """Per-constraint violation (0 when satisfied), in program order."""
        out = np.empty(len(self.constraints))
        for k, c in enumerate(self.constraints):
            v = evaluate(c.body, point)
            out[k] = max(c.lower - v, v - c.upper, 0.0)
        return out

    def max_violation(self, point):
        viol = self.violations(point)
        return float(viol.max()) if viol.size else 0.0

    def copy_with_bounds(self, lower, upper, name=None):
        """Same constraints and objective over fresh variables with new bounds."""
        out = MathProgram(name or self.name, convex=self.convex)
        for v, lo, hi in zip(self.variables, lower, upper):
            out.define_variable(v.name, lo, hi, v.kind, v.start)
        remap = {id(v): w for v, w in zip(self.variables, out.variables)}
        out.constraints = [Constraint(_rebind(c.body, remap), c.lower, c.upper, c.tag) for c in self.constraints]
        out.objective = _rebind(self.objective, remap)
        return out


def _rebind(expr, remap):
    # variable nodes are swapped for their counterparts; shared sub-DAGs stay shared
    memo = {}

    def go(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, VarRef):
            out = remap[key]
        elif isinstance(node, Sum):
            out = Sum(go(a) for a in node.args)
        elif isinstance(node, Product):
            out = Product(go(a) for a in node.args)
        elif isinstance(node, Power):
            out = Power(go(node.base), node.exponent)
        elif isinstance(node, _Unary):
            out = type(node)(go(node.arg))
        else:
            out = node
        memo[key] = out
        return out

    return go(expr)


# -- module-level operations ---------------------------------------------------


def define_variable(prog, name, lower=-INF, upper=INF, kind=VarKind.CONTINUOUS, start=0.0):
    return prog.define_variable(name, lower, upper, kind, start)


def post_constraint(prog, body, lower, upper, tag):
    return prog.post_constraint(body, lower, upper, tag)


def set_objective(prog, expr):
    prog.set_objective(expr)


# -- neutral JSON encoding ---------------------------------------------------------


def _bound(v):
    return None if math.isinf(v) else v


def _unbound(v, default):
    return default if v is None else float(v)


def serialize_program(prog: MathProgram) -> dict:
    return {
        "format": "powerforms-program",
        "version": 1,
        "name": prog.name,
        "sense": "minimize",
        "convex": prog.convex,
        "variables": [
            {
                "name": v.name,
                "lower": _bound(v.lower),
                "upper": _bound(v.upper),
                "kind": v.kind.value,
                "start": v.start,
            }
            for v in prog.variables
        ],
        "constraints": [
            {"body": to_tree(c.body), "lower": _bound(c.lower), "upper": _bound(c.upper), "tag": c.tag}
            for c in prog.constraints
        ],
        "objective": to_tree(prog.objective),
    }


def deserialize_program(doc: dict) -> MathProgram:
    prog = MathProgram(doc.get("name", ""), convex=bool(doc.get("convex", False)))
    for v in doc["variables"]:
        prog.define_variable(
            v["name"], _unbound(v["lower"], -INF), _unbound(v["upper"], INF), v["kind"], v["start"]
        )
    for c in doc["constraints"]:
        prog.constraints.append(
            Constraint(
                from_tree(c["body"], prog.variables),
                _unbound(c["lower"], -INF),
                _unbound(c["upper"], INF),
                c["tag"],
            )
        )
    prog.objective = from_tree(doc["objective"], prog.variables)
    return prog


def dumps_program(prog: MathProgram) -> str:
    return json.dumps(serialize_program(prog), separators=(",", ":"))
