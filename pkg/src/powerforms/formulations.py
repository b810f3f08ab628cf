"""Power flow formulations.

Each formulation fixes how the voltage product ``V_i conj(V_j)`` is represented and
supplies the variable and constraint building blocks the problem builders call:

=======  ==========================================================  ===========
form     voltage product                                             class
=======  ==========================================================  ===========
acp      ``vm_i vm_j (cos, sin)(va_i - va_j)``                       exact
acr      ``(vr_i vr_j + vi_i vi_j, vi_i vr_j - vr_i vi_j)``          exact
act      ``(wr_ij, wi_ij)`` linked exactly to ``w`` and ``va``       exact
dcp      ``(0, va_i - va_j)``                                        linear
socwr    ``(wr_ij, wi_ij)`` inside a rotated second-order cone       convex
qcwr     SOC plus trigonometric and McCormick envelopes              convex
=======  ==========================================================  ===========

Constraint tags name the network component, e.g. ``kcl_p:bus=5`` or
``ohm_q_to:branch=12``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidImpedance, UnsupportedOnOffForm
from .expr import Constant, Product, cos, linear, quicksum, sin, tan
from .network import Branch, Bus, DcLine, Network, branch_admittance

INF = math.inf
ANGLE_CAP = math.pi / 2 - 1e-4
THETA_M_OFF = math.pi


class FormulationId(str, Enum):
    ACP = "acp"
    ACR = "acr"
    ACT = "act"
    DCP = "dcp"
    SOCWR = "socwr"
    QCWR = "qcwr"

    @property
    def exact(self):
        return self in (FormulationId.ACP, FormulationId.ACR, FormulationId.ACT)

    @property
    def convex(self):
        return self in (FormulationId.DCP, FormulationId.SOCWR, FormulationId.QCWR)

    @property
    def relaxation(self):
        return self in (FormulationId.SOCWR, FormulationId.QCWR)

    @property
    def w_space(self):
        return self in (FormulationId.ACT, FormulationId.SOCWR, FormulationId.QCWR)

    @property
    def has_angles(self):
        return self is not FormulationId.SOCWR and self is not FormulationId.ACR

    @property
    def reactive(self):
        return self is not FormulationId.DCP

    @property
    def label(self):
        return {"acp": "AC-P", "acr": "AC-R", "act": "AC-T", "dcp": "DC-P",
                "socwr": "SOC", "qcwr": "QC"}[self.value]


def tag(kind, component, cid):
    return f"{kind}:{component}={cid}"


def cap_angle(a):
    return min(max(a, -ANGLE_CAP), ANGLE_CAP)


@dataclass
class VoltageVars:
    form: FormulationId
    vm: dict = field(default_factory=dict)
    va: dict = field(default_factory=dict)
    vr: dict = field(default_factory=dict)
    vi: dict = field(default_factory=dict)
    w: dict = field(default_factory=dict)
    wr: dict = field(default_factory=dict)
    wi: dict = field(default_factory=dict)
    td: dict = field(default_factory=dict)
    cs: dict = field(default_factory=dict)
    sn: dict = field(default_factory=dict)
    vv: dict = field(default_factory=dict)
    # on/off copies of w at each branch end (switching problems only)
    w_fr: dict = field(default_factory=dict)
    w_to: dict = field(default_factory=dict)
    pairs: dict = field(default_factory=dict)


@dataclass
class GenVars:
    pg: dict = field(default_factory=dict)
    qg: dict = field(default_factory=dict)


@dataclass
class BranchFlowVars:
    p_f: dict = field(default_factory=dict)
    q_f: dict = field(default_factory=dict)
    p_t: dict = field(default_factory=dict)
    q_t: dict = field(default_factory=dict)
    dc_p_f: dict = field(default_factory=dict)
    dc_p_t: dict = field(default_factory=dict)
    dc_q_f: dict = field(default_factory=dict)
    dc_q_t: dict = field(default_factory=dict)

    def p_to(self, e):
        """To-side active flow; DCP has none as a variable and uses ``-p_f``."""
        return self.p_t[e] if e in self.p_t else -self.p_f[e]


# -- bounds --------------------------------------------------------------------------


def voltage_product_bounds(net: Network, br: Branch):
    """Box ``(wr_lo, wr_hi, wi_lo, wi_hi)`` for ``vm_f vm_t (cos, sin)(va_f - va_t)``."""
    f, t = net.buses[br.f_bus], net.buses[br.t_bus]
    lo, hi = br.ang_min, br.ang_max
    vl, vu = f.vm_min * t.vm_min, f.vm_max * t.vm_max
    if lo >= 0:
        return vl * math.cos(hi), vu * math.cos(lo), vl * math.sin(lo), vu * math.sin(hi)
    if hi <= 0:
        return vl * math.cos(lo), vu * math.cos(hi), vu * math.sin(lo), vl * math.sin(hi)
    return vl * min(math.cos(lo), math.cos(hi)), vu, vu * math.sin(lo), vu * math.sin(hi)


def _flow_bounds(br):
    return (-br.rate_a, br.rate_a) if br.rate_a is not None else (-INF, INF)


def dcp_big_m(br: Branch):
    """Big-M for the switched DC Ohm's law: the largest shifted angle difference over x*tau."""
    if br.x == 0:
        raise InvalidImpedance(br.id, "x = 0 under the DC approximation")
    return (abs(br.ang_min) + br.ang_max + abs(br.theta_shift)) / abs(br.x * br.tau)


# -- variables -------------------------------------------------------------------------


def variable_voltage(prog, net: Network, form, on_off=False, vm_fixed=None):
    """Create the voltage variables of ``form``.

    ``on_off`` widens the voltage-product boxes to contain 0 (switched-off branches).
    ``vm_fixed`` maps bus id to a pinned magnitude; the pin is applied through bounds
    where the formulation has a matching variable.
    """
    form = FormulationId(form)
    vm_fixed = vm_fixed or {}
    vv = VoltageVars(form)
    buses = [net.buses[i] for i in sorted(net.buses)]
    branches = [net.branches[e] for e in sorted(net.branches)]
    for br in branches:
        vv.pairs.setdefault((br.f_bus, br.t_bus), br.id)

    def vm_box(b):
        if b.id in vm_fixed:
            return vm_fixed[b.id], vm_fixed[b.id]
        return b.vm_min, b.vm_max

    if form in (FormulationId.ACP, FormulationId.DCP, FormulationId.ACT, FormulationId.QCWR):
        for b in buses:
            vv.va[b.id] = prog.define_variable(f"va[{b.id}]", start=0.0)
    if form in (FormulationId.ACP, FormulationId.QCWR):
        for b in buses:
            lo, hi = vm_box(b)
            vv.vm[b.id] = prog.define_variable(f"vm[{b.id}]", lo, hi, start=1.0)
    if form is FormulationId.ACR:
        for b in buses:
            vv.vr[b.id] = prog.define_variable(f"vr[{b.id}]", -b.vm_max, b.vm_max, start=1.0)
        for b in buses:
            vv.vi[b.id] = prog.define_variable(f"vi[{b.id}]", -b.vm_max, b.vm_max, start=0.0)
    if form.w_space:
        for b in buses:
            lo, hi = vm_box(b)
            vv.w[b.id] = prog.define_variable(f"w[{b.id}]", lo ** 2, hi ** 2, start=1.0)
        for br in branches:
            wr_lo, wr_hi, _, _ = voltage_product_bounds(net, br)
            if on_off:
                wr_lo = min(wr_lo, 0.0)
            vv.wr[br.id] = prog.define_variable(f"wr[{br.id}]", wr_lo, wr_hi, start=1.0)
        for br in branches:
            _, _, wi_lo, wi_hi = voltage_product_bounds(net, br)
            vv.wi[br.id] = prog.define_variable(f"wi[{br.id}]", min(wi_lo, 0.0), max(wi_hi, 0.0), start=0.0)
    if form is FormulationId.QCWR:
        for br in branches:
            vv.td[br.id] = prog.define_variable(f"td[{br.id}]", br.ang_min, br.ang_max, start=0.0)
        for br in branches:
            lo, hi = cap_angle(br.ang_min), cap_angle(br.ang_max)
            vv.cs[br.id] = prog.define_variable(f"cs[{br.id}]", min(math.cos(lo), math.cos(hi)), 1.0, start=1.0)
        for br in branches:
            lo, hi = cap_angle(br.ang_min), cap_angle(br.ang_max)
            vv.sn[br.id] = prog.define_variable(f"sn[{br.id}]", math.sin(lo), math.sin(hi), start=0.0)
        for br in branches:
            f, t = net.buses[br.f_bus], net.buses[br.t_bus]
            (fl, fu), (tl, tu) = vm_box(f), vm_box(t)
            vv.vv[br.id] = prog.define_variable(f"vv[{br.id}]", fl * tl, fu * tu, start=1.0)
    if on_off and form.relaxation:
        for br in branches:
            _, hi = vm_box(net.buses[br.f_bus])
            vv.w_fr[br.id] = prog.define_variable(f"w_fr[{br.id}]", 0.0, hi ** 2, start=1.0)
        for br in branches:
            _, hi = vm_box(net.buses[br.t_bus])
            vv.w_to[br.id] = prog.define_variable(f"w_to[{br.id}]", 0.0, hi ** 2, start=1.0)
    return vv


def variable_branch_indicator(prog, net: Network, switching=None):
    """One binary per branch. ``switching`` (branch id -> 0/1) pins the indicators."""
    z = {}
    for e in sorted(net.branches):
        if switching is not None and e in switching:
            v = float(switching[e])
            z[e] = prog.define_variable(f"z[{e}]", v, v, kind="binary", start=v)
        else:
            z[e] = prog.define_variable(f"z[{e}]", 0.0, 1.0, kind="binary", start=1.0)
    return z


def variable_generation(prog, net: Network, form, pg_fixed=None, free_pg=(), free_qg=False):
    form = FormulationId(form)
    pg_fixed = pg_fixed or {}
    gv = GenVars()
    gens = [net.gens[k] for k in sorted(net.gens)]
    for g in gens:
        if g.id in pg_fixed:
            lo = hi = pg_fixed[g.id]
        elif g.id in free_pg:
            lo, hi = -INF, INF
        else:
            lo, hi = g.pmin, g.pmax
        start = _midpoint(lo, hi, g.pg0)
        gv.pg[g.id] = prog.define_variable(f"pg[{g.id}]", lo, hi, start=start)
    if form.reactive:
        for g in gens:
            lo, hi = (-INF, INF) if free_qg else (g.qmin, g.qmax)
            start = _midpoint(lo, hi, g.qg0)
            gv.qg[g.id] = prog.define_variable(f"qg[{g.id}]", lo, hi, start=start)
    return gv


def _midpoint(lo, hi, fallback):
    if math.isfinite(lo) and math.isfinite(hi):
        return 0.5 * (lo + hi)
    return min(max(fallback, lo), hi)


def variable_branch_flow(prog, net: Network, form, rate_bounds=True):
    form = FormulationId(form)
    fv = BranchFlowVars()
    branches = [net.branches[e] for e in sorted(net.branches)]
    _rate_bounds = _flow_bounds if rate_bounds else (lambda br: (-INF, INF))
    for br in branches:
        lo, hi = _rate_bounds(br)
        fv.p_f[br.id] = prog.define_variable(f"p_fr[{br.id}]", lo, hi, start=0.0)
    if form is FormulationId.DCP:
        return fv
    for br in branches:
        lo, hi = _rate_bounds(br)
        fv.p_t[br.id] = prog.define_variable(f"p_to[{br.id}]", lo, hi, start=0.0)
    for br in branches:
        lo, hi = _rate_bounds(br)
        fv.q_f[br.id] = prog.define_variable(f"q_fr[{br.id}]", lo, hi, start=0.0)
    for br in branches:
        lo, hi = _rate_bounds(br)
        fv.q_t[br.id] = prog.define_variable(f"q_to[{br.id}]", lo, hi, start=0.0)
    return fv


def variable_dcline_flow(prog, net: Network, form, fv: BranchFlowVars):
    form = FormulationId(form)
    for k in sorted(net.dclines):
        dc = net.dclines[k]
        fv.dc_p_f[k] = prog.define_variable(f"p_dc_fr[{k}]", dc.pmin_f, dc.pmax_f, start=_mid(dc.pmin_f, dc.pmax_f))
        fv.dc_p_t[k] = prog.define_variable(f"p_dc_to[{k}]", dc.pmin_t, dc.pmax_t, start=_mid(dc.pmin_t, dc.pmax_t))
        if form.reactive:
            fv.dc_q_f[k] = prog.define_variable(f"q_dc_fr[{k}]", dc.qmin_f, dc.qmax_f, start=_mid(dc.qmin_f, dc.qmax_f))
            fv.dc_q_t[k] = prog.define_variable(f"q_dc_to[{k}]", dc.qmin_t, dc.qmax_t, start=_mid(dc.qmin_t, dc.qmax_t))
    return fv


def _mid(lo, hi):
    return 0.5 * (lo + hi)


# -- voltage products ----------------------------------------------------------------------


def voltage_product(form, i, j, vars: VoltageVars, branch_id=None):
    """``(re, im)`` of ``V_i conj(V_j)`` as expressions."""
    form = FormulationId(form)
    if form is FormulationId.ACP:
        d = vars.va[i] - vars.va[j]
        m = vars.vm[i] * vars.vm[j]
        return m * cos(d), m * sin(d)
    if form is FormulationId.ACR:
        vr_i, vi_i, vr_j, vi_j = vars.vr[i], vars.vi[i], vars.vr[j], vars.vi[j]
        return vr_i * vr_j + vi_i * vi_j, vi_i * vr_j - vr_i * vi_j
    if form is FormulationId.DCP:
        return Constant(0.0), vars.va[i] - vars.va[j]
    if branch_id is None:
        if (i, j) in vars.pairs:
            branch_id = vars.pairs[(i, j)]
        else:
            e = vars.pairs[(j, i)]
            return vars.wr[e], -vars.wi[e]
    return vars.wr[branch_id], vars.wi[branch_id]


def bus_w(form, vars: VoltageVars, i):
    """Squared voltage magnitude of bus ``i``."""
    form = FormulationId(form)
    if form is FormulationId.ACP:
        return vars.vm[i] ** 2
    if form is FormulationId.ACR:
        return vars.vr[i] ** 2 + vars.vi[i] ** 2
    if form is FormulationId.DCP:
        return Constant(1.0)
    return vars.w[i]


def branch_flow_expressions(form, br: Branch, vars: VoltageVars, on_off=False):
    """Expressions for ``(p_f, q_f, p_t, q_t)`` implied by Ohm's law on ``br``.

    DCP returns ``(p_f, None, -p_f, None)``.
    """
    form = FormulationId(form)
    tau, s = br.tau, br.theta_shift
    f, t = br.f_bus, br.t_bus
    if form is FormulationId.DCP:
        if br.x == 0:
            raise InvalidImpedance(br.id, "x = 0 under the DC approximation")
        bdc = 1.0 / (br.x * tau)
        p = linear([(bdc, vars.va[f]), (-bdc, vars.va[t])], -bdc * s)
        return p, None, -p, None
    g, b = branch_admittance(br)
    bsh = b + br.b_c / 2
    if form is FormulationId.ACP:
        m = vars.vm[f] * vars.vm[t]
        d = linear([(1.0, vars.va[f]), (-1.0, vars.va[t])], -s)
        C, S = m * cos(d), m * sin(d)
        w_f, w_t = vars.vm[f] ** 2, vars.vm[t] ** 2
    else:
        re, im = voltage_product(form, f, t, vars, br.id)
        cs_, sn_ = math.cos(s), math.sin(s)
        # rotate (re, im) by -shift
        C = linear([(cs_, re), (sn_, im)]) if s else re
        S = linear([(cs_, im), (-sn_, re)]) if s else im
        if on_off and form.relaxation:
            w_f, w_t = vars.w_fr[br.id], vars.w_to[br.id]
        else:
            w_f, w_t = bus_w(form, vars, f), bus_w(form, vars, t)
    k = 1.0 / tau
    p_f = linear([(g * k * k, w_f), (-g * k, C), (-b * k, S)])
    q_f = linear([(-bsh * k * k, w_f), (-g * k, S), (b * k, C)])
    p_t = linear([(g, w_t), (-g * k, C), (b * k, S)])
    q_t = linear([(-bsh, w_t), (g * k, S), (b * k, C)])
    return p_f, q_f, p_t, q_t


# -- constraints -------------------------------------------------------------------------------


def _box_max(coeffs, const, prog):
    """Supremum of ``const + sum(a * v)`` over the variable box."""
    total = const
    for a, v in coeffs:
        total += max(a * v.lower, a * v.upper)
    return total


def _post_row(prog, coeffs, const, upper, tname, z=None, big_m=None):
    """Post ``const + sum(a v) <= upper``; with ``z`` the row is relaxed by ``M (1 - z)``."""
    if z is None:
        return prog.post_constraint(linear(coeffs, const), -INF, upper, tname)
    m = big_m if big_m is not None else max(_box_max(coeffs, const, prog) - upper, 0.0)
    return prog.post_constraint(linear(coeffs + [(m, z)], const), -INF, upper + m, tname)


def _mccormick(prog, w, x, y, name, cid, z=None):
    """Four McCormick rows for ``w = x * y`` over the bounds of x and y."""
    xl, xu, yl, yu = x.lower, x.upper, y.lower, y.upper
    rows = [
        ([(xl, y), (yl, x), (-1.0, w)], xl * yl),   # w >= xl y + yl x - xl yl
        ([(xu, y), (yu, x), (-1.0, w)], xu * yu),   # w >= xu y + yu x - xu yu
        ([(1.0, w), (-xl, y), (-yu, x)], -xl * yu),  # w <= xl y + yu x - xl yu
        ([(1.0, w), (-xu, y), (-yl, x)], -xu * yl),  # w <= xu y + yl x - xu yl
    ]
    for k, (coeffs, rhs) in enumerate(rows):
        _post_row(prog, coeffs, 0.0, rhs, tag(f"{name}_{k + 1}", "branch", cid), z)


def constraint_voltage(prog, net: Network, form, vars: VoltageVars, on_off_z=None):
    """Formulation-level links between voltage variables."""
    form = FormulationId(form)
    if form is FormulationId.ACR:
        for i in sorted(net.buses):
            b = net.buses[i]
            prog.post_constraint(vars.vr[i] ** 2 + vars.vi[i] ** 2, b.vm_min ** 2, b.vm_max ** 2,
                                 tag("vm_bounds", "bus", i))
        return
    if not form.w_space:
        return
    for e in sorted(net.branches):
        br = net.branches[e]
        wr, wi = vars.wr[e], vars.wi[e]
        z = None if on_off_z is None else on_off_z[e]
        w_f = vars.w_fr[e] if z is not None else vars.w[br.f_bus]
        w_t = vars.w_to[e] if z is not None else vars.w[br.t_bus]
        if form is FormulationId.ACT:
            prog.post_constraint(wr ** 2 + wi ** 2 - w_f * w_t, 0.0, 0.0, tag("w_link", "branch", e))
            d = vars.va[br.f_bus] - vars.va[br.t_bus]
            prog.post_constraint(wi - wr * tan(d), 0.0, 0.0, tag("tan_link", "branch", e))
        else:
            prog.post_constraint(wr ** 2 + wi ** 2 - w_f * w_t, -INF, 0.0, tag("soc", "branch", e))
        if z is not None:
            _constraint_voltage_on_off_branch(prog, net, br, vars, z)
    if form.relaxation and on_off_z is None:
        _link_parallel(prog, net, vars)
    if form is FormulationId.QCWR:
        for e in sorted(net.branches):
            z = None if on_off_z is None else on_off_z[e]
            _qc_envelopes(prog, net, net.branches[e], vars, z)
        for i in sorted(net.buses):
            b = net.buses[i]
            vm, w = vars.vm[i], vars.w[i]
            lo, hi = vm.lower, vm.upper
            prog.post_constraint(vm ** 2 - w, -INF, 0.0, tag("qc_w_sq_lb", "bus", i))
            _post_row(prog, [(1.0, w), (-(lo + hi), vm)], 0.0, -lo * hi, tag("qc_w_sq_ub", "bus", i))


def parallel_branches(net: Network):
    """(branch, first branch on the same bus pair, orientation sign) for every later parallel branch."""
    first, out = {}, []
    for e in sorted(net.branches):
        br = net.branches[e]
        key = frozenset((br.f_bus, br.t_bus))
        if key in first:
            head = net.branches[first[key]]
            out.append((e, head.id, 1.0 if head.f_bus == br.f_bus else -1.0))
        else:
            first[key] = e
    return out


def _link_parallel(prog, net, vars):
    # Parallel branches see the same bus voltages. Without these rows a relaxation can
    # circulate flow between them through independent (wr, wi) pairs.
    for e, head, sign in parallel_branches(net):
        prog.post_constraint(linear([(1.0, vars.wr[e]), (-1.0, vars.wr[head])]), 0.0, 0.0, tag("wr_parallel", "branch", e))
        prog.post_constraint(linear([(1.0, vars.wi[e]), (-sign, vars.wi[head])]), 0.0, 0.0, tag("wi_parallel", "branch", e))


def _constraint_voltage_on_off_branch(prog, net, br, vars, z):
    # w copies follow the bus values when on and collapse to 0 when off
    e = br.id
    for side, bus_id, copy in (("fr", br.f_bus, vars.w_fr[e]), ("to", br.t_bus, vars.w_to[e])):
        bus = net.buses[bus_id]
        w = vars.w[bus_id]
        lo, hi = w.lower, w.upper
        prog.post_constraint(copy - hi * z, -INF, 0.0, tag(f"w_{side}_on_ub", "branch", e))
        prog.post_constraint(copy - lo * z, 0.0, INF, tag(f"w_{side}_on_lb", "branch", e))
        prog.post_constraint(w - copy + hi * z, -INF, hi, tag(f"w_{side}_off_ub", "branch", e))
        prog.post_constraint(w - copy + lo * z, lo, INF, tag(f"w_{side}_off_lb", "branch", e))
    wr_lo, wr_hi, wi_lo, wi_hi = voltage_product_bounds(net, br)
    wr, wi = vars.wr[e], vars.wi[e]
    prog.post_constraint(wr - wr_hi * z, -INF, 0.0, tag("wr_on_ub", "branch", e))
    prog.post_constraint(wr - wr_lo * z, 0.0, INF, tag("wr_on_lb", "branch", e))
    prog.post_constraint(wi - wi_hi * z, -INF, 0.0, tag("wi_on_ub", "branch", e))
    prog.post_constraint(wi - wi_lo * z, 0.0, INF, tag("wi_on_lb", "branch", e))


def _qc_envelopes(prog, net, br, vars, z=None):
    e, f, t = br.id, br.f_bus, br.t_bus
    td, cs, sn, vv = vars.td[e], vars.cs[e], vars.sn[e], vars.vv[e]
    lo, hi = cap_angle(br.ang_min), cap_angle(br.ang_max)
    tm = max(abs(lo), abs(hi))
    # td follows the bus angle difference (relaxed by pi when switchable)
    d = [(1.0, td), (-1.0, vars.va[f]), (1.0, vars.va[t])]
    if z is None:
        prog.post_constraint(linear(d), 0.0, 0.0, tag("qc_td", "branch", e))
    else:
        _post_row(prog, d, 0.0, 0.0, tag("qc_td_ub", "branch", e), z, THETA_M_OFF)
        _post_row(prog, [(-a, v) for a, v in d], 0.0, 0.0, tag("qc_td_lb", "branch", e), z, THETA_M_OFF)
    # cosine: concave quadratic cap and secant below
    k = (1 - math.cos(tm)) / tm ** 2
    prog.post_constraint(cs + k * td ** 2, -INF, 1.0, tag("qc_cos_ub", "branch", e))
    slope = (math.cos(hi) - math.cos(lo)) / (hi - lo)
    prog.post_constraint(linear([(1.0, cs), (-slope, td)]), math.cos(lo) - slope * lo, INF,
                         tag("qc_cos_lb", "branch", e))
    # sine: tangent lines at +/- tm/2
    c2, s2 = math.cos(tm / 2), math.sin(tm / 2)
    prog.post_constraint(linear([(1.0, sn), (-c2, td)]), -INF, s2 - c2 * tm / 2, tag("qc_sin_ub", "branch", e))
    prog.post_constraint(linear([(1.0, sn), (-c2, td)]), c2 * tm / 2 - s2, INF, tag("qc_sin_lb", "branch", e))
    _mccormick(prog, vv, vars.vm[f], vars.vm[t], "qc_vv", e)
    _mccormick(prog, vars.wr[e], vv, cs, "qc_wr", e, z)
    _mccormick(prog, vars.wi[e], vv, sn, "qc_wi", e, z)


def constraint_theta_ref(prog, form, bus_id, vars: VoltageVars):
    form = FormulationId(form)
    if form is FormulationId.SOCWR:
        return
    if form is FormulationId.ACR:
        prog.post_constraint(vars.vi[bus_id], 0.0, 0.0, tag("theta_ref", "bus", bus_id))
        prog.post_constraint(vars.vr[bus_id], 0.0, INF, tag("theta_ref_vr", "bus", bus_id))
        return
    prog.post_constraint(vars.va[bus_id], 0.0, 0.0, tag("theta_ref", "bus", bus_id))


def constraint_kcl_shunt(prog, net: Network, form, bus: Bus, vars, gvars: GenVars, fv: BranchFlowVars, arcs):
    """Active (and for AC forms reactive) power balance at ``bus``."""
    form = FormulationId(form)
    out_f, out_t, dcs = arcs
    gens = [g.id for g in net.gens_at(bus.id)]
    w = bus_w(form, vars, bus.id)
    p_terms = [fv.p_f[e] for e in out_f] + [fv.p_to(e) for e in out_t]
    p_terms += [fv.dc_p_f[k] if side == "f" else fv.dc_p_t[k] for k, side in dcs]
    p_terms += [Product((Constant(-1.0), gvars.pg[g])) for g in gens]
    rhs = -bus.pd
    if form is FormulationId.DCP:
        rhs -= bus.gs
    elif bus.gs:
        p_terms.append(Product((Constant(bus.gs), w)))
    prog.post_constraint(quicksum(p_terms), rhs, rhs, tag("kcl_p", "bus", bus.id))
    if not form.reactive:
        return
    q_terms = [fv.q_f[e] for e in out_f] + [fv.q_t[e] for e in out_t]
    q_terms += [fv.dc_q_f[k] if side == "f" else fv.dc_q_t[k] for k, side in dcs]
    q_terms += [Product((Constant(-1.0), gvars.qg[g])) for g in gens]
    if bus.bs:
        q_terms.append(Product((Constant(-bus.bs), w)))
    prog.post_constraint(quicksum(q_terms), -bus.qd, -bus.qd, tag("kcl_q", "bus", bus.id))


def constraint_ohms_yt_from(prog, form, br: Branch, vars, fv: BranchFlowVars, z=None):
    form = FormulationId(form)
    p_f, q_f, _, _ = branch_flow_expressions(form, br, vars, on_off=z is not None)
    if form is FormulationId.DCP:
        if z is None:
            prog.post_constraint(fv.p_f[br.id] - p_f, 0.0, 0.0, tag("ohm_p_fr", "branch", br.id))
        else:
            m = dcp_big_m(br)
            prog.post_constraint(fv.p_f[br.id] - p_f + m * z, -INF, m, tag("ohm_p_fr_ub", "branch", br.id))
            prog.post_constraint(fv.p_f[br.id] - p_f - m * z, -m, INF, tag("ohm_p_fr_lb", "branch", br.id))
        return
    _post_ohm(prog, form, fv.p_f[br.id], p_f, "ohm_p_fr", br.id, z)
    _post_ohm(prog, form, fv.q_f[br.id], q_f, "ohm_q_fr", br.id, z)


def constraint_ohms_yt_to(prog, form, br: Branch, vars, fv: BranchFlowVars, z=None):
    form = FormulationId(form)
    if form is FormulationId.DCP:
        return  # p_t = -p_f identically
    _, _, p_t, q_t = branch_flow_expressions(form, br, vars, on_off=z is not None)
    _post_ohm(prog, form, fv.p_t[br.id], p_t, "ohm_p_to", br.id, z)
    _post_ohm(prog, form, fv.q_t[br.id], q_t, "ohm_q_to", br.id, z)


def _post_ohm(prog, form, flow, expr, name, e, z):
    if z is not None and form.exact:
        # exact forms switch only under a fixed pattern, so z is a constant here
        expr = z * expr
    prog.post_constraint(flow - expr, 0.0, 0.0, tag(name, "branch", e))


def constraint_thermal_limit_from(prog, form, br: Branch, fv: BranchFlowVars, z=None):
    _thermal(prog, form, br, fv.p_f[br.id], fv.q_f.get(br.id), "thermal_fr", z)


def constraint_thermal_limit_to(prog, form, br: Branch, fv: BranchFlowVars, z=None):
    form = FormulationId(form)
    if form is FormulationId.DCP:
        return  # identical to the from side
    _thermal(prog, form, br, fv.p_t[br.id], fv.q_t[br.id], "thermal_to", z)


def _thermal(prog, form, br, p, q, name, z):
    form = FormulationId(form)
    rate = br.rate_a
    if form is FormulationId.DCP:
        if z is None:
            if rate is not None:
                prog.post_constraint(p, -rate, rate, tag(name, "branch", br.id))
            return
        m = rate if rate is not None else dcp_big_m(br)
        prog.post_constraint(p - m * z, -INF, 0.0, tag(name + "_ub", "branch", br.id))
        prog.post_constraint(p + m * z, 0.0, INF, tag(name + "_lb", "branch", br.id))
        return
    if rate is None:
        return
    if z is None:
        prog.post_constraint(p ** 2 + q ** 2, -INF, rate ** 2, tag(name, "branch", br.id))
    else:
        prog.post_constraint(p ** 2 + q ** 2 - rate ** 2 * z, -INF, 0.0, tag(name, "branch", br.id))


def constraint_voltage_angle_difference(prog, net, form, br: Branch, vars, z=None):
    form = FormulationId(form)
    lo, hi = br.ang_min, br.ang_max
    e, f, t = br.id, br.f_bus, br.t_bus
    if form.w_space and form is not FormulationId.ACT:
        wr, wi = vars.wr[e], vars.wi[e]
        prog.post_constraint(wi - math.tan(cap_angle(hi)) * wr, -INF, 0.0, tag("angle_diff_ub", "branch", e))
        prog.post_constraint(wi - math.tan(cap_angle(lo)) * wr, 0.0, INF, tag("angle_diff_lb", "branch", e))
        if form is FormulationId.SOCWR:
            return
    if form is FormulationId.ACR:
        re, im = voltage_product(form, f, t, vars)
        a, b = math.tan(cap_angle(hi)), math.tan(cap_angle(lo))
        if z is None:
            prog.post_constraint(im - a * re, -INF, 0.0, tag("angle_diff_ub", "branch", e))
            prog.post_constraint(im - b * re, 0.0, INF, tag("angle_diff_lb", "branch", e))
        else:
            prog.post_constraint(z * (im - a * re), -INF, 0.0, tag("angle_diff_ub", "branch", e))
            prog.post_constraint(z * (im - b * re), 0.0, INF, tag("angle_diff_lb", "branch", e))
        return
    d = [(1.0, vars.va[f]), (-1.0, vars.va[t])]
    if z is None:
        prog.post_constraint(linear(d), lo, hi, tag("angle_diff", "branch", e))
    else:
        m = THETA_M_OFF
        prog.post_constraint(linear(d + [(m, z)]), -INF, hi + m, tag("angle_diff_ub", "branch", e))
        prog.post_constraint(linear(d + [(-m, z)]), lo - m, INF, tag("angle_diff_lb", "branch", e))


def constraint_dcline(prog, dc: DcLine, fv: BranchFlowVars):
    prog.post_constraint(
        linear([(1.0 - dc.loss1, fv.dc_p_f[dc.id]), (1.0, fv.dc_p_t[dc.id])]),
        dc.loss0, dc.loss0, tag("dcline", "dcline", dc.id),
    )


def on_off_variants(prog, net, form, br: Branch, z, vars, fv):
    """Switched versions of every per-branch constraint of ``br``."""
    form = FormulationId(form)
    if form.exact and not (z.lower == z.upper):
        raise UnsupportedOnOffForm(form.value)
    constraint_ohms_yt_from(prog, form, br, vars, fv, z)
    constraint_ohms_yt_to(prog, form, br, vars, fv, z)
    constraint_voltage_angle_difference(prog, net, form, br, vars, z)
    constraint_thermal_limit_from(prog, form, br, fv, z)
    constraint_thermal_limit_to(prog, form, br, fv, z)
