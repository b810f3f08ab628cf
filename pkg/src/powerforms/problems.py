"""Problem specifications: OPF, OTS and PF as sequences of formulation building blocks."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import UnsupportedOnOffForm, UnsupportedProblem
from .expr import Constant, Product, linear, quicksum
from .formulations import (
    BranchFlowVars,
    FormulationId,
    GenVars,
    VoltageVars,
    constraint_dcline,
    constraint_kcl_shunt,
    constraint_ohms_yt_from,
    constraint_ohms_yt_to,
    constraint_theta_ref,
    constraint_thermal_limit_from,
    constraint_thermal_limit_to,
    constraint_voltage,
    constraint_voltage_angle_difference,
    on_off_variants,
    tag,
    variable_branch_flow,
    variable_branch_indicator,
    variable_dcline_flow,
    variable_generation,
    variable_voltage,
)
from .network import Network
from .program import MathProgram


class ProblemId(str, Enum):
    OPF = "opf"
    OTS = "ots"
    PF = "pf"


@dataclass
class BuiltProblem:
    """A program plus the handles needed to read a solution back onto the network."""

    problem: ProblemId
    form: FormulationId
    network: Network
    program: MathProgram
    voltage: VoltageVars
    gen: GenVars
    flow: BranchFlowVars
    z: dict = field(default_factory=dict)


def objective_min_fuel_cost(prog, net: Network, gvars: GenVars):
    """Sum of generator cost polynomials over per-unit pg, in $/h."""
    lin, terms, const = [], [], 0.0
    for gid in sorted(net.gens):
        pg = gvars.pg[gid]
        for k, c in net.gens[gid].cost.by_power():
            if c == 0:
                continue
            if k == 0:
                const += c
            elif k == 1:
                lin.append((c, pg))
            else:
                terms.append(Product((Constant(c), pg ** k)))
    prog.set_objective(quicksum([linear(lin, const)] + terms))


def build_opf(net: Network, form) -> MathProgram:
    return build_opf_model(net, form).program


def build_opf_model(net: Network, form) -> BuiltProblem:
    form = FormulationId(form)
    prog = MathProgram(f"{net.name}:opf:{form.value}", convex=form.convex)
    vv = variable_voltage(prog, net, form)
    gv = variable_generation(prog, net, form)
    fv = variable_branch_flow(prog, net, form)
    variable_dcline_flow(prog, net, form, fv)
    objective_min_fuel_cost(prog, net, gv)
    constraint_voltage(prog, net, form, vv)
    _ref_and_kcl(prog, net, form, vv, gv, fv)
    for e in sorted(net.branches):
        br = net.branches[e]
        constraint_ohms_yt_from(prog, form, br, vv, fv)
        constraint_ohms_yt_to(prog, form, br, vv, fv)
        constraint_voltage_angle_difference(prog, net, form, br, vv)
        constraint_thermal_limit_from(prog, form, br, fv)
        constraint_thermal_limit_to(prog, form, br, fv)
    for k in sorted(net.dclines):
        constraint_dcline(prog, net.dclines[k], fv)
    return BuiltProblem(ProblemId.OPF, form, net, prog, vv, gv, fv)


def _ref_and_kcl(prog, net, form, vv, gv, fv):
    for i in net.ref_buses:
        constraint_theta_ref(prog, form, i, vv)
    arcs = net.incidence()
    for i in sorted(net.buses):
        constraint_kcl_shunt(prog, net, form, net.buses[i], vv, gv, fv, arcs[i])


def build_ots(net: Network, form, switching=None) -> MathProgram:
    return build_ots_model(net, form, switching).program


def build_ots_model(net: Network, form, switching=None) -> BuiltProblem:
    """OTS: one binary per branch with every branch constraint in its on/off variant.

    Exact forms (ACP, ACR, ACT) are accepted only with a complete ``switching``
    pattern; the indicators are then constants and the program is continuous.
    """
    form = FormulationId(form)
    if form.exact and (switching is None or set(switching) != set(net.branches)):
        raise UnsupportedOnOffForm(form.value)
    prog = MathProgram(f"{net.name}:ots:{form.value}", convex=form.convex)
    z = variable_branch_indicator(prog, net, switching)
    vv = variable_voltage(prog, net, form, on_off=True)
    gv = variable_generation(prog, net, form)
    fv = variable_branch_flow(prog, net, form)
    variable_dcline_flow(prog, net, form, fv)
    objective_min_fuel_cost(prog, net, gv)
    constraint_voltage(prog, net, form, vv, on_off_z=z if form.relaxation else None)
    _ref_and_kcl(prog, net, form, vv, gv, fv)
    for e in sorted(net.branches):
        on_off_variants(prog, net, form, net.branches[e], z[e], vv, fv)
    for k in sorted(net.dclines):
        constraint_dcline(prog, net.dclines[k], fv)
    return BuiltProblem(ProblemId.OTS, form, net, prog, vv, gv, fv, z)


def build_pf(net: Network, form) -> MathProgram:
    return build_pf_model(net, form).program


def build_pf_model(net: Network, form, pg_setpoints=None, vm_setpoints=None) -> BuiltProblem:
    """Power flow feasibility for fixed set-points.

    Non-reference generators are pinned at their dispatch, generator buses at their
    voltage set-point (AC forms). Reference-bus generation and all reactive
    generation are free. Thermal and angle-difference limits are left out.
    """
    form = FormulationId(form)
    prog = MathProgram(f"{net.name}:pf:{form.value}", convex=form.convex)
    refs = set(net.ref_buses)
    pg_setpoints = pg_setpoints or {g.id: g.pg0 for g in net.gens.values()}
    if vm_setpoints is None:
        vm_setpoints = {}
        for gid in sorted(net.gens, reverse=True):
            g = net.gens[gid]
            vm_setpoints[g.bus] = g.vg
    pinned_pg = {gid: v for gid, v in pg_setpoints.items() if net.gens[gid].bus not in refs}
    free_pg = [gid for gid, g in net.gens.items() if g.bus in refs]
    vm_pin = vm_setpoints if form.reactive else {}
    vv = variable_voltage(prog, net, form, vm_fixed=vm_pin)
    gv = variable_generation(prog, net, form, pg_fixed=pinned_pg, free_pg=free_pg, free_qg=True)
    fv = variable_branch_flow(prog, net, form, rate_bounds=False)
    variable_dcline_flow(prog, net, form, fv)
    prog.set_objective(Constant(0.0))
    constraint_voltage(prog, net, form, vv)
    if form is FormulationId.ACR:
        for i in sorted(vm_pin):
            v = vm_pin[i]
            prog.post_constraint(vv.vr[i] ** 2 + vv.vi[i] ** 2, v * v, v * v, tag("vm_setpoint", "bus", i))
    _ref_and_kcl(prog, net, form, vv, gv, fv)
    for e in sorted(net.branches):
        br = net.branches[e]
        constraint_ohms_yt_from(prog, form, br, vv, fv)
        constraint_ohms_yt_to(prog, form, br, vv, fv)
    for k in sorted(net.dclines):
        constraint_dcline(prog, net.dclines[k], fv)
    return BuiltProblem(ProblemId.PF, form, net, prog, vv, gv, fv)


BUILDERS = {
    ProblemId.OPF: build_opf_model,
    ProblemId.OTS: build_ots_model,
    ProblemId.PF: build_pf_model,
}


def register_problem(name, builder):
    """Add a problem builder ``builder(network, form) -> BuiltProblem`` under ``name``."""
    BUILDERS[name] = builder


def build(net: Network, problem, form, **kw) -> BuiltProblem:
    key = ProblemId(problem) if problem in {p.value for p in ProblemId} or isinstance(problem, ProblemId) else problem
    if key not in BUILDERS:
        raise UnsupportedProblem(f"unknown problem {problem!r}")
    return BUILDERS[key](net, form, **kw)
