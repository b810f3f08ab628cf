"""Per-unit network data model built from a :class:`~powerforms.parser.RawCase`."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import IntEnum

import numpy as np

from .errors import (
    DanglingEndpoint,
    InvalidImpedance,
    NoReferenceBus,
    UnsupportedCostModel,
)
from .parser import RawCase

DEFAULT_ANGLE_BOUND = math.pi / 3
MAX_ANGLE_BOUND = math.pi / 2

# Matpower column indices (0-based)
BUS_I, BUS_TYPE, PD, QD, GS, BS, BUS_AREA, VM, VA, BASE_KV, ZONE, VMAX, VMIN = range(13)
GEN_BUS, PG, QG, QMAX, QMIN, VG, MBASE, GEN_STATUS, PMAX, PMIN = range(10)
F_BUS, T_BUS, BR_R, BR_X, BR_B, RATE_A, RATE_B, RATE_C, TAP, SHIFT, BR_STATUS, ANGMIN, ANGMAX = range(13)
(DC_F_BUS, DC_T_BUS, DC_STATUS, DC_PF, DC_PT, DC_QF, DC_QT, DC_VF, DC_VT, DC_PMIN, DC_PMAX,
 DC_QMINF, DC_QMAXF, DC_QMINT, DC_QMAXT, DC_LOSS0, DC_LOSS1) = range(17)


class BusType(IntEnum):
    PQ = 1
    PV = 2
    REF = 3
    ISOLATED = 4


@dataclass(frozen=True)
class CostPolynomial:
    """Cost in $/h as a polynomial of per-unit active power.

    ``coefficients`` runs from the highest degree down to the constant term.
    """

    coefficients: tuple[float, ...]

    def __post_init__(self):
        if not self.coefficients:
            raise ValueError("cost polynomial needs at least one coefficient")

    @property
    def degree(self):
        return len(self.coefficients) - 1

    def __call__(self, p):
        return float(np.polyval(self.coefficients, p))

    def by_power(self):
        """(exponent, coefficient) pairs, lowest exponent first."""
        n = self.degree
        return [(n - i, c) for i, c in enumerate(self.coefficients)][::-1]


@dataclass(frozen=True)
class Bus:
    id: int
    bus_type: BusType
    vm_min: float
    vm_max: float
    pd: float = 0.0
    qd: float = 0.0
    gs: float = 0.0
    bs: float = 0.0
    vm0: float = 1.0
    va0: float = 0.0


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    pmin: float
    pmax: float
    qmin: float
    qmax: float
    cost: CostPolynomial
    pg0: float = 0.0
    qg0: float = 0.0
    vg: float = 1.0


@dataclass(frozen=True)
class Branch:
    id: int
    f_bus: int
    t_bus: int
    r: float
    x: float
    b_c: float = 0.0
    tau: float = 1.0
    theta_shift: float = 0.0
    rate_a: float | None = None
    ang_min: float = -DEFAULT_ANGLE_BOUND
    ang_max: float = DEFAULT_ANGLE_BOUND


@dataclass(frozen=True)
class DcLine:
    id: int
    f_bus: int
    t_bus: int
    pmin_f: float
    pmax_f: float
    pmin_t: float
    pmax_t: float
    qmin_f: float
    qmax_f: float
    qmin_t: float
    qmax_t: float
    loss0: float = 0.0
    loss1: float = 0.0


@dataclass(frozen=True)
class Network:
    name: str
    base_mva: float
    buses: dict[int, Bus]
    gens: dict[int, Generator]
    branches: dict[int, Branch]
    dclines: dict[int, DcLine] = field(default_factory=dict)

    @property
    def ref_buses(self):
        return sorted(i for i, b in self.buses.items() if b.bus_type == BusType.REF)

    def gens_at(self, bus_id):
        return [g for g in self.gens.values() if g.bus == bus_id]

    def incidence(self):
        """Per bus: (from-side branch ids, to-side branch ids, dcline arcs as (id, side))."""
        arcs = {i: ([], [], []) for i in self.buses}
        for br in self.branches.values():
            arcs[br.f_bus][0].append(br.id)
            arcs[br.t_bus][1].append(br.id)
        for dc in self.dclines.values():
            arcs[dc.f_bus][2].append((dc.id, "f"))
            arcs[dc.t_bus][2].append((dc.id, "t"))
        return arcs

    def total_load(self):
        return sum(b.pd for b in self.buses.values())


def branch_admittance(branch: Branch) -> tuple[float, float]:
    """Series admittance (g, b) of the branch pi-model."""
    z2 = branch.r ** 2 + branch.x ** 2
    if z2 == 0:
        raise InvalidImpedance(branch.id)
    return branch.r / z2, -branch.x / z2


def _angle_bounds(lo_deg, hi_deg):
    lo, hi = math.radians(lo_deg), math.radians(hi_deg)
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi - lo <= 0:
        lo, hi = -DEFAULT_ANGLE_BOUND, DEFAULT_ANGLE_BOUND
    lo = max(min(lo, 0.0), -MAX_ANGLE_BOUND)
    hi = min(max(hi, 0.0), MAX_ANGLE_BOUND)
    return lo, hi


def _cost_polynomial(gen_id, row, base_mva):
    model = int(row[0])
    if model != 2:
        raise UnsupportedCostModel(gen_id, f"model {model}; only polynomial (2) is supported")
    n = int(row[3])
    coeffs = [float(c) for c in row[4:4 + n]]
    if len(coeffs) < n:
        raise UnsupportedCostModel(gen_id, f"gencost row declares {n} coefficients but has {len(coeffs)}")
    if n == 0:
        return CostPolynomial((0.0,))
    if n - 1 > 3:
        raise UnsupportedCostModel(gen_id, f"degree {n - 1} polynomial; at most 3 is supported")
    # c_k * (base*p)^k, highest degree first
    return CostPolynomial(tuple(c * base_mva ** (n - 1 - i) for i, c in enumerate(coeffs)))


def build_network(raw: RawCase) -> Network:
    """Convert a RawCase into a validated per-unit Network.

    Out-of-service components are dropped, a tap ratio of 0 becomes 1, angle-difference
    bounds default to +/-pi/3 when unset and are clamped to +/-pi/2, and polynomial costs are
    re-expressed over per-unit power.
    """
    base = raw.base_mva
    buses = {}
    for row in raw.bus:
        btype = int(row[BUS_TYPE])
        if btype == BusType.ISOLATED:
            continue
        bid = int(row[BUS_I])
        vmin, vmax = float(row[VMIN]), float(row[VMAX])
        if not 0 < vmin <= vmax:
            raise ValueError(f"bus {bid}: voltage bounds [{vmin}, {vmax}] are not 0 < vm_min <= vm_max")
        buses[bid] = Bus(
            id=bid,
            bus_type=BusType(btype),
            vm_min=vmin,
            vm_max=vmax,
            pd=row[PD] / base,
            qd=row[QD] / base,
            gs=row[GS] / base,
            bs=row[BS] / base,
            vm0=float(row[VM]),
            va0=math.radians(row[VA]),
        )
    if not any(b.bus_type == BusType.REF for b in buses.values()):
        raise NoReferenceBus()

    gencost = raw.gencost
    gens = {}
    for k, row in enumerate(raw.gen):
        gid = k + 1
        if row[GEN_STATUS] <= 0:
            continue
        bus = int(row[GEN_BUS])
        if bus not in buses:
            raise DanglingEndpoint("generator", gid, bus)
        if gencost is None or gencost.shape[0] == 0:
            cost = CostPolynomial((0.0,))
        else:
            cost = _cost_polynomial(gid, gencost[k], base)
        pmin, pmax = row[PMIN] / base, row[PMAX] / base
        qmin, qmax = row[QMIN] / base, row[QMAX] / base
        if pmin > pmax or qmin > qmax:
            raise ValueError(f"generator {gid}: crossed bounds")
        gens[gid] = Generator(
            id=gid, bus=bus, pmin=pmin, pmax=pmax, qmin=qmin, qmax=qmax, cost=cost,
            pg0=row[PG] / base, qg0=row[QG] / base, vg=float(row[VG]),
        )

    branches = {}
    for k, row in enumerate(raw.branch):
        bid = k + 1
        if row[BR_STATUS] <= 0:
            continue
        f, t = int(row[F_BUS]), int(row[T_BUS])
        for end in (f, t):
            if end not in buses:
                raise DanglingEndpoint("branch", bid, end)
        r, x = float(row[BR_R]), float(row[BR_X])
        if r == 0 and x == 0:
            raise InvalidImpedance(bid)
        rate = row[RATE_A]
        lo, hi = _angle_bounds(row[ANGMIN], row[ANGMAX]) if raw.branch.shape[1] > ANGMAX else (
            -DEFAULT_ANGLE_BOUND, DEFAULT_ANGLE_BOUND)
        branches[bid] = Branch(
            id=bid, f_bus=f, t_bus=t, r=r, x=x,
            b_c=float(row[BR_B]),
            tau=float(row[TAP]) if row[TAP] != 0 else 1.0,
            theta_shift=math.radians(row[SHIFT]),
            rate_a=None if rate == 0 or not math.isfinite(rate) else rate / base,
            ang_min=lo, ang_max=hi,
        )

    dclines = {}
    if raw.dcline is not None:
        for k, row in enumerate(raw.dcline):
            did = k + 1
            if row[DC_STATUS] <= 0:
                continue
            f, t = int(row[DC_F_BUS]), int(row[DC_T_BUS])
            for end in (f, t):
                if end not in buses:
                    raise DanglingEndpoint("dcline", did, end)
            loss0, loss1 = row[DC_LOSS0] / base, float(row[DC_LOSS1])
            pmin, pmax = row[DC_PMIN] / base, row[DC_PMAX] / base
            # to-side injection follows from the loss model p_f + p_t = loss0 + loss1 * p_f
            pt_a = loss0 - (1 - loss1) * pmax
            pt_b = loss0 - (1 - loss1) * pmin
            dclines[did] = DcLine(
                id=did, f_bus=f, t_bus=t,
                pmin_f=pmin, pmax_f=pmax, pmin_t=min(pt_a, pt_b), pmax_t=max(pt_a, pt_b),
                qmin_f=row[DC_QMINF] / base, qmax_f=row[DC_QMAXF] / base,
                qmin_t=row[DC_QMINT] / base, qmax_t=row[DC_QMAXT] / base,
                loss0=loss0, loss1=loss1,
            )

    return Network(raw.name, base, buses, gens, branches, dclines)


# -- dictionary round trip -----------------------------------------------------------


def network_to_dict(net: Network) -> dict:
    """Component-keyed document (string ids, per-unit values) for the network."""
    def table(items):
        out = {}
        for cid, comp in sorted(items.items()):
            d = asdict(comp)
            out[str(cid)] = d
        return out

    doc = {
        "name": net.name,
        "baseMVA": net.base_mva,
        "bus": table(net.buses),
        "gen": table(net.gens),
        "branch": table(net.branches),
        "dcline": table(net.dclines),
    }
    for b in doc["bus"].values():
        b["bus_type"] = int(b["bus_type"])
    for g in doc["gen"].values():
        g["cost"] = list(g["cost"]["coefficients"])
    return doc


def network_from_dict(doc: dict) -> Network:
    buses = {int(k): Bus(**{**v, "bus_type": BusType(v["bus_type"])}) for k, v in doc["bus"].items()}
    gens = {
        int(k): Generator(**{**v, "cost": CostPolynomial(tuple(v["cost"]))})
        for k, v in doc["gen"].items()
    }
    branches = {int(k): Branch(**v) for k, v in doc["branch"].items()}
    dclines = {int(k): DcLine(**v) for k, v in doc.get("dcline", {}).items()}
    return Network(doc["name"], float(doc["baseMVA"]), buses, gens, branches, dclines)
