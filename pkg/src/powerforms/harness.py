"""End-to-end pipeline: load a case, build a problem, solve, report.

Everything here is plumbing around the lower layers. Results are keyed by
component id and expressed in per-unit and radians; objectives are in $/h.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import PowerFormsError
from .formulations import FormulationId
from .network import Network, build_network
from .parser import parse_file
from .problems import BuiltProblem, ProblemId, build, build_ots_model
from .solver import (
    Outcome,
    SolveOptions,
    SolveResult,
    TerminationStatus,
    certify_infeasibility,
    solve_continuous,
    solve_mixed,
)

F = FormulationId
BASE = F.ACP
# Report order: exact forms, then relaxations from strongest, then the approximation.
FORM_ORDER = [F.ACP, F.ACR, F.ACT, F.QCWR, F.SOCWR, F.DCP]
NOT_SOLVED = "n.s."
INFEASIBLE = "inf."


def load_case(path) -> Network:
    """Parse and validate a case file. Errors keep their type and gain a ``path`` attribute."""
    try:
        return build_network(parse_file(path))
    except PowerFormsError as e:
        e.path = str(path)
        raise


# -- single runs -----------------------------------------------------------------


@dataclass
class ResultDocument:
    case_name: str
    problem: ProblemId
    formulation: FormulationId
    status: TerminationStatus
    objective: float
    solve_seconds: float
    solution: dict
    result: SolveResult | None = field(default=None, repr=False, compare=False)
    built: BuiltProblem | None = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {
            "case": self.case_name,
            "problem": self.problem.value,
            "formulation": self.formulation.value,
            "status": self.status.value,
            "objective": _finite_or_none(self.objective),
            "solve_seconds": self.solve_seconds,
            "solution": self.solution,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)


def run(case_path, problem=ProblemId.OPF, form=F.ACP, opts: SolveOptions | None = None) -> ResultDocument:
    return run_network(load_case(case_path), problem, form, opts)


def run_network(net: Network, problem=ProblemId.OPF, form=F.ACP, opts: SolveOptions | None = None,
                **build_kw) -> ResultDocument:
    """Build and solve ``problem`` under ``form`` on an already loaded network.

    OTS under an exact form has no direct big-M model. It is solved in two
    stages: the SOCWR switching problem picks the branch pattern, then the exact
    form is solved with that pattern fixed. The reported time covers both solves.
    """
    problem, form = ProblemId(problem), F(form)
    opts = opts or SolveOptions()
    seconds = 0.0
    if problem is ProblemId.OTS and form.exact and "switching" not in build_kw:
        stage = build_ots_model(net, F.SOCWR)
        pick = solve_mixed(stage.program, opts)
        seconds += pick.solve_seconds
        if not pick.status.is_optimal:
            return ResultDocument(net.name, problem, form, pick.status, math.nan, seconds, {}, pick, stage)
        build_kw["switching"] = {e: int(round(pick.primal[z.index])) for e, z in stage.z.items()}
    bp = build(net, problem, form, **build_kw)
    res = solve(bp.program, opts)
    seconds += res.solve_seconds
    solution = extract_solution(bp, res.primal) if res.status.is_optimal else {}
    return ResultDocument(net.name, problem, form, res.status, res.objective, seconds, solution, res, bp)


def solve(prog, opts: SolveOptions | None = None) -> SolveResult:
    """Branch-and-bound when the program has free binaries, a single solve otherwise."""
    lo, hi = prog.bounds()
    if any(lo[i] < hi[i] for i in prog.binaries):
        return solve_mixed(prog, opts)
    return solve_continuous(prog, opts)


def extract_solution(bp: BuiltProblem, x) -> dict:
    """Component-keyed solution from a primal vector.

    Quantities a formulation does not model are left out: no ``qg`` under DCP,
    no ``va`` under SOCWR, no ``vm`` under DCP (magnitudes are fixed at 1 there).
    """
    net, form, vv, gv, fv = bp.network, bp.form, bp.voltage, bp.gen, bp.flow

    def val(v):
        return float(x[v.index])

    buses = {}
    for i in sorted(net.buses):
        d = {}
        if i in vv.vm:
            d["vm"] = val(vv.vm[i])
        elif i in vv.vr:
            d["vm"] = math.hypot(val(vv.vr[i]), val(vv.vi[i]))
        elif i in vv.w:
            d["vm"] = math.sqrt(max(val(vv.w[i]), 0.0))
        if i in vv.va:
            d["va"] = val(vv.va[i])
        elif i in vv.vr:
            d["va"] = math.atan2(val(vv.vi[i]), val(vv.vr[i]))
        buses[str(i)] = d
    gens = {}
    for g in sorted(net.gens):
        d = {"pg": val(gv.pg[g])}
        if g in gv.qg:
            d["qg"] = val(gv.qg[g])
        gens[str(g)] = d
    branches = {}
    for e in sorted(net.branches):
        pf = val(fv.p_f[e])
        d = {"pf": pf, "pt": val(fv.p_t[e]) if e in fv.p_t else -pf}
        if e in fv.q_f:
            d["qf"] = val(fv.q_f[e])
            d["qt"] = val(fv.q_t[e])
        if e in bp.z:
            d["z"] = val(bp.z[e])
        branches[str(e)] = d
    dclines = {}
    for k in sorted(net.dclines):
        d = {"pf": val(fv.dc_p_f[k]), "pt": val(fv.dc_p_t[k])}
        if k in fv.dc_q_f:
            d["qf"] = val(fv.dc_q_f[k])
            d["qt"] = val(fv.dc_q_t[k])
        dclines[str(k)] = d
    return {"bus": buses, "gen": gens, "branch": branches, "dcline": dclines}


def solution_point(bp: BuiltProblem, solution: dict) -> np.ndarray:
    """Primal vector of ``bp.program`` rebuilt from a reported solution.

    Only formulations whose variables are all determined by the reported
    quantities can be rebuilt: ACP, ACR, ACT and DCP. The relaxations carry
    lifted variables that a (vm, va) report does not pin down.
    """
    form, vv, gv, fv = bp.form, bp.voltage, bp.gen, bp.flow
    if form.relaxation:
        raise ValueError(f"{form.value} solutions cannot be rebuilt from reported quantities")
    x = bp.program.start_point()
    bus, gen, branch, dcl = (solution[k] for k in ("bus", "gen", "branch", "dcline"))

    def put(v, value):
        x[v.index] = value

    vm = {int(i): d.get("vm", 1.0) for i, d in bus.items()}
    va = {int(i): d["va"] for i, d in bus.items()}
    for i in vm:
        if i in vv.vm:
            put(vv.vm[i], vm[i])
        if i in vv.va:
            put(vv.va[i], va[i])
        if i in vv.vr:
            put(vv.vr[i], vm[i] * math.cos(va[i]))
            put(vv.vi[i], vm[i] * math.sin(va[i]))
        if i in vv.w:
            put(vv.w[i], vm[i] ** 2)
    for e, br in bp.network.branches.items():
        f, t = br.f_bus, br.t_bus
        if e in vv.wr:
            put(vv.wr[e], vm[f] * vm[t] * math.cos(va[f] - va[t]))
            put(vv.wi[e], vm[f] * vm[t] * math.sin(va[f] - va[t]))
        d = branch[str(e)]
        put(fv.p_f[e], d["pf"])
        if e in fv.p_t:
            put(fv.p_t[e], d["pt"])
        if e in fv.q_f:
            put(fv.q_f[e], d["qf"])
            put(fv.q_t[e], d["qt"])
        if e in bp.z:
            put(bp.z[e], d["z"])
    for g, d in gen.items():
        put(gv.pg[int(g)], d["pg"])
        if int(g) in gv.qg:
            put(gv.qg[int(g)], d["qg"])
    for k, d in dcl.items():
        k = int(k)
        put(fv.dc_p_f[k], d["pf"])
        put(fv.dc_p_t[k], d["pt"])
        if k in fv.dc_q_f:
            put(fv.dc_q_f[k], d["qf"])
            put(fv.dc_q_t[k], d["qt"])
    return x


# -- formulation comparison ------------------------------------------------------------


@dataclass
class ComparisonRow:
    formulation: FormulationId
    status: TerminationStatus
    objective: float | None
    solve_seconds: float | None
    delta_vs_base: float | None = None
    gap_percent: float | None = None
    error: str | None = None

    def to_dict(self):
        return {
            "formulation": self.formulation.value,
            "status": self.status.value,
            "objective": self.objective,
            "delta_vs_base": self.delta_vs_base,
            "gap_percent": self.gap_percent,
            "solve_seconds": self.solve_seconds,
            "error": self.error,
        }


@dataclass
class ComparisonReport:
    case_name: str
    rows: list[ComparisonRow]
    base: FormulationId = BASE

    def row(self, form) -> ComparisonRow:
        form = F(form)
        for r in self.rows:
            if r.formulation is form:
                return r
        raise KeyError(form.value)

    def to_dict(self):
        return {"case": self.case_name, "base": self.base.value, "rows": [r.to_dict() for r in self.rows]}

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    def to_table(self):
        """Plain-text table with objectives to five significant digits."""
        lines = [f"{self.case_name}",
                 f"{'form':<6} {'status':<18} {'$/h':>12} {'delta $/h':>12} {'gap %':>8} {'time s':>8}"]
        for r in self.rows:
            lines.append(
                f"{r.formulation.label:<6} {r.status.value:<18} {_sig5(r.objective):>12} "
                f"{_sig5(r.delta_vs_base):>12} {_fixed(r.gap_percent, 2):>8} {_fixed(r.solve_seconds, 2):>8}"
            )
        return "\n".join(lines)


def ordered_forms(forms):
    forms = {F(f) for f in forms}
    return [f for f in FORM_ORDER if f in forms]


def compare(case_path, forms=None, opts: SolveOptions | None = None, problem=ProblemId.OPF) -> ComparisonReport:
    """Solve each formulation and report it against ACP, which is always included."""
    net = load_case(case_path)
    return compare_network(net, forms, opts, problem)


def compare_network(net, forms=None, opts=None, problem=ProblemId.OPF) -> ComparisonReport:
    forms = ordered_forms(set(forms or FORM_ORDER[:5]) | {BASE})
    rows = []
    for form in forms:
        try:
            doc = run_network(net, problem, form, opts)
        except (PowerFormsError, ArithmeticError, np.linalg.LinAlgError) as e:
            rows.append(ComparisonRow(form, TerminationStatus.NUMERICAL_ERROR, None, None, error=str(e)))
            continue
        obj = float(doc.objective) if doc.status.is_optimal else None
        rows.append(ComparisonRow(form, doc.status, obj, doc.solve_seconds))
    base = rows[0].objective
    if base is not None:
        for r in rows:
            if r.objective is None:
                continue
            if r.formulation.exact and r.formulation is not BASE:
                r.delta_vs_base = r.objective - base
            elif r.formulation.relaxation:
                r.gap_percent = optimality_gap(base, r.objective)
    return ComparisonReport(net.name, rows)


def optimality_gap(exact, relaxed):
    """Percent by which a relaxation undercuts the exact objective."""
    return 100.0 * (exact - relaxed) / exact


# -- infeasibility screening -------------------------------------------------------------


@dataclass
class ScreenReport:
    case_name: str
    formulation: FormulationId
    outcome: Outcome
    min_violation: float
    violated_tags: list[tuple[str, float]]
    solve_seconds: float

    @property
    def ac_infeasible(self):
        """A relaxation that is infeasible proves the exact AC problem infeasible as well."""
        return self.outcome is Outcome.PROVEN_INFEASIBLE and self.formulation.relaxation

    def to_dict(self):
        return {
            "case": self.case_name,
            "formulation": self.formulation.value,
            "outcome": self.outcome.value,
            "ac_infeasible": self.ac_infeasible,
            "min_violation": self.min_violation,
            "violated": [{"tag": t, "violation": v} for t, v in self.violated_tags],
            "solve_seconds": self.solve_seconds,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)


def screen_infeasible(case_path, form=F.SOCWR, opts: SolveOptions | None = None, top=10) -> ScreenReport:
    return screen_network(load_case(case_path), form, opts, top)


def screen_network(net, form=F.SOCWR, opts=None, top=10) -> ScreenReport:
    """Look for a proof that the OPF of ``net`` has no solution under a convex form.

    On a proof, the ``top`` constraints carrying the most elastic slack are
    reported by tag; they point at the data that makes the case infeasible.
    """
    form = F(form)
    if not form.convex:
        raise ValueError(f"screening needs a convex formulation (dcp, socwr, qcwr), got {form.value}")
    bp = build(net, ProblemId.OPF, form)
    cert = certify_infeasibility(bp.program, opts)
    return ScreenReport(net.name, form, cert.outcome, cert.min_violation, cert.violated_tags[:top],
                        cert.solve_seconds)


# -- batch runs ----------------------------------------------------------------------


def batch_columns(forms):
    forms = ordered_forms(forms)
    cols = ["case", "buses", "branches"]
    for f in forms:
        cols += [f"{f.value}_objective", f"{f.value}_status", f"{f.value}_seconds"]
    if BASE in forms:
        cols += [f"{f.value}_delta" for f in forms if f.exact and f is not BASE]
        cols += [f"{f.value}_gap" for f in forms if f.relaxation]
    return cols + ["error"]


def batch(dir_path, problem=ProblemId.OPF, forms=(F.ACP,), out_path=None, opts: SolveOptions | None = None,
          jobs=1):
    """Run every ``*.m`` case in ``dir_path`` and tabulate one CSV row per case.

    Objective cells read ``n.s.`` when no solution was found and ``inf.`` when
    the case was proven infeasible. A case that fails to load or build gets
    its error message in the ``error`` column; the batch always completes.
    Returns the rows as dicts (column name to cell text).
    """
    forms = ordered_forms(forms)
    problem = ProblemId(problem)
    paths = sorted(Path(dir_path).glob("*.m"))
    work = [(str(p), problem, forms, opts) for p in paths]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_batch_row, work))
    else:
        rows = [_batch_row(w) for w in work]
    if out_path is not None:
        write_batch_csv(rows, forms, out_path)
    return rows


def write_batch_csv(rows, forms, out_path):
    cols = batch_columns(forms)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _batch_row(item):
    path, problem, forms, opts = item
    cols = batch_columns(forms)
    row = dict.fromkeys(cols, "")
    row["case"] = Path(path).stem
    try:
        net = load_case(path)
    except (PowerFormsError, OSError, UnicodeDecodeError) as e:
        row["error"] = str(e)
        return row
    row["buses"] = str(len(net.buses))
    row["branches"] = str(len(net.branches))
    objectives = {}
    errors = []
    for f in forms:
        try:
            doc = run_network(net, problem, f, opts)
        except (PowerFormsError, ArithmeticError, np.linalg.LinAlgError) as e:
            errors.append(f"{f.value}: {e}")
            row[f"{f.value}_objective"] = NOT_SOLVED
            continue
        row[f"{f.value}_status"] = doc.status.value
        row[f"{f.value}_seconds"] = f"{doc.solve_seconds:.4f}"
        row[f"{f.value}_objective"] = objective_cell(doc.status, doc.objective)
        if doc.status.is_optimal:
            objectives[f] = float(doc.objective)
    base = objectives.get(BASE)
    if base is not None:
        for f, obj in objectives.items():
            if f.exact and f is not BASE:
                row[f"{f.value}_delta"] = repr(obj - base)
            elif f.relaxation:
                row[f"{f.value}_gap"] = repr(optimality_gap(base, obj))
    row["error"] = "; ".join(errors)
    return row


def objective_cell(status, objective):
    if status is TerminationStatus.PROVEN_INFEASIBLE:
        return INFEASIBLE
    if not status.is_optimal:
        return NOT_SOLVED
    return repr(float(objective))


# -- formatting helpers ---------------------------------------------------------------


def _finite_or_none(v):
    return float(v) if v is not None and math.isfinite(v) else None


def _sig5(v):
    return "" if v is None else f"{v:.4e}"


def _fixed(v, digits):
    return "" if v is None else f"{v:.{digits}f}"

