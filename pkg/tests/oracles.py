"""Independent reference models built directly from network data with cvxpy.

They share nothing with the package's formulation code beyond the Network
object: admittances come from complex arithmetic on the pi model, and the
conic solver is Clarabel.
"""

import math

import cvxpy as cp
import numpy as np

from powerforms.formulations import cap_angle, voltage_product_bounds


def _cost(net, pg, idx):
    terms = []
    for g in net.gens.values():
        for k, c in g.cost.by_power():
            if c == 0:
                continue
            p = pg[idx[g.id]]
            terms.append(c if k == 0 else c * p if k == 1 else c * cp.square(p) if k == 2 else c * cp.power(p, k))
    return cp.sum(cp.hstack(terms)) if terms else cp.Constant(0.0)


def dc_opf(net):
    """B-theta DC OPF; returns the optimal cost."""
    buses = sorted(net.buses)
    bi = {b: k for k, b in enumerate(buses)}
    gi = {g: k for k, g in enumerate(sorted(net.gens))}
    va = cp.Variable(len(buses))
    pg = cp.Variable(len(gi))
    flows, cons = {}, []
    for br in net.branches.values():
        p = (va[bi[br.f_bus]] - va[bi[br.t_bus]] - br.theta_shift) / (br.x * br.tau)
        flows[br.id] = p
        if br.rate_a is not None:
            cons += [cp.abs(p) <= br.rate_a]
        d = va[bi[br.f_bus]] - va[bi[br.t_bus]]
        cons += [d >= br.ang_min, d <= br.ang_max]
    for b in buses:
        bus = net.buses[b]
        out = [flows[e] for e, br in net.branches.items() if br.f_bus == b]
        out += [-flows[e] for e, br in net.branches.items() if br.t_bus == b]
        gen = [pg[gi[g.id]] for g in net.gens.values() if g.bus == b]
        cons.append(sum(gen, cp.Constant(0)) == bus.pd + bus.gs + sum(out, 0))
    cons += [va[bi[r]] == 0 for r in net.ref_buses]
    for g in net.gens.values():
        cons += [pg[gi[g.id]] >= g.pmin, pg[gi[g.id]] <= g.pmax]
    prob = cp.Problem(cp.Minimize(_cost(net, pg, gi)), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def soc_opf(net):
    """W-space second-order cone relaxation of AC OPF; returns the optimal cost."""
    buses = sorted(net.buses)
    bi = {b: k for k, b in enumerate(buses)}
    gi = {g: k for k, g in enumerate(sorted(net.gens))}
    lines = sorted(net.branches)
    li = {e: k for k, e in enumerate(lines)}
    w = cp.Variable(len(buses))
    wr = cp.Variable(len(lines))
    wi = cp.Variable(len(lines))
    pg, qg = cp.Variable(len(gi)), cp.Variable(len(gi))
    cons = []
    p_inj = [0] * len(buses)
    q_inj = [0] * len(buses)
    for e in lines:
        br = net.branches[e]
        k, f, t = li[e], bi[br.f_bus], bi[br.t_bus]
        ys = 1 / complex(br.r, br.x)
        tap = br.tau * complex(math.cos(br.theta_shift), math.sin(br.theta_shift))
        yff = (ys + 0.5j * br.b_c) / br.tau ** 2
        yft = -ys / tap.conjugate()
        ytf = -ys / tap
        ytt = ys + 0.5j * br.b_c
        # S_f = conj(yff) w_f + conj(yft) W,  S_t = conj(ytt) w_t + conj(ytf) conj(W),  W = wr + j wi
        a, c = yft.conjugate(), ytf.conjugate()
        pf = yff.real * w[f] + a.real * wr[k] - a.imag * wi[k]
        qf = -yff.imag * w[f] + a.imag * wr[k] + a.real * wi[k]
        pt = ytt.real * w[t] + c.real * wr[k] + c.imag * wi[k]
        qt = -ytt.imag * w[t] + c.imag * wr[k] - c.real * wi[k]
        p_inj[f] += pf
        q_inj[f] += qf
        p_inj[t] += pt
        q_inj[t] += qt
        cons.append(cp.SOC(w[f] + w[t], cp.hstack([2 * wr[k], 2 * wi[k], w[f] - w[t]])))
        if br.rate_a is not None:
            cons += [cp.SOC(br.rate_a, cp.hstack([pf, qf])), cp.SOC(br.rate_a, cp.hstack([pt, qt]))]
        lo, hi = cap_angle(br.ang_min), cap_angle(br.ang_max)
        cons += [wi[k] <= math.tan(hi) * wr[k], wi[k] >= math.tan(lo) * wr[k]]
        wr_lo, wr_hi, wi_lo, wi_hi = voltage_product_bounds(net, br)
        cons += [wr[k] >= wr_lo, wr[k] <= wr_hi, wi[k] >= min(wi_lo, 0), wi[k] <= max(wi_hi, 0)]
    # parallel branches share one voltage product
    first = {}
    for e in lines:
        br = net.branches[e]
        key = frozenset((br.f_bus, br.t_bus))
        if key not in first:
            first[key] = e
            continue
        head = net.branches[first[key]]
        sign = 1 if head.f_bus == br.f_bus else -1
        cons += [wr[li[e]] == wr[li[head.id]], wi[li[e]] == sign * wi[li[head.id]]]
    for b in buses:
        bus, k = net.buses[b], bi[b]
        gen_p = sum((pg[gi[g.id]] for g in net.gens.values() if g.bus == b), 0)
        gen_q = sum((qg[gi[g.id]] for g in net.gens.values() if g.bus == b), 0)
        cons.append(gen_p == bus.pd + bus.gs * w[k] + p_inj[k])
        cons.append(gen_q == bus.qd - bus.bs * w[k] + q_inj[k])
        cons += [w[k] >= bus.vm_min ** 2, w[k] <= bus.vm_max ** 2]
    for g in net.gens.values():
        k = gi[g.id]
        cons += [pg[k] >= g.pmin, pg[k] <= g.pmax, qg[k] >= g.qmin, qg[k] <= g.qmax]
    prob = cp.Problem(cp.Minimize(_cost(net, pg, gi)), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def lp_corner_points(c, A, b):
    """Minimum of ``c x`` over ``A x <= b`` by enumerating every basis of tight rows."""
    from itertools import combinations

    A, b, c = np.asarray(A, float), np.asarray(b, float), np.asarray(c, float)
    n = A.shape[1]
    best, arg = math.inf, None
    for rows in combinations(range(len(A)), n):
        sub = A[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, b[list(rows)])
        if np.all(A @ x <= b + 1e-9) and c @ x < best - 1e-12:
            best, arg = float(c @ x), x
    return best, arg
