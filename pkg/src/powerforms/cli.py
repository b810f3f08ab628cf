"""Command-line entry point: ``powerforms {run,compare,screen,batch,validate}``.

Exit status is 0 whenever the requested work completed, whatever the solver
concluded about the case. Unreadable or malformed inputs exit with 1; bad
command-line usage exits with 2.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

from . import __version__
from .errors import PowerFormsError
from .formulations import FormulationId
from .harness import (
    FORM_ORDER,
    batch,
    batch_columns,
    compare,
    load_case,
    ordered_forms,
    run,
    screen_infeasible,
)
from .problems import ProblemId
from .solver import SolveOptions

EXIT_OK = 0
EXIT_INPUT = 1

FORMS = [f.value for f in FormulationId]
CONVEX_FORMS = [f.value for f in FormulationId if f.convex]


def _options(args):
    return SolveOptions(tol=args.tol, max_iter=args.max_iter, time_limit=args.time_limit, seed=args.seed)


def _solver_flags(p):
    p.add_argument("--tol", type=float, default=1e-6, help="KKT tolerance (default 1e-6)")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--time-limit", type=float, default=None, help="seconds per solve")
    p.add_argument("--seed", type=int, default=0)


def _output_flags(p, formats=("json", "csv"), default="json"):
    p.add_argument("--out", help="write here instead of stdout")
    p.add_argument("--format", choices=formats, default=default)


def build_parser():
    parser = argparse.ArgumentParser(prog="powerforms", description="Power network optimization over several formulations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for solver iterations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="solve one problem under one formulation")
    p.add_argument("--case", required=True)
    p.add_argument("--problem", choices=[q.value for q in ProblemId], default="opf")
    p.add_argument("--form", choices=FORMS, default="acp")
    _solver_flags(p)
    _output_flags(p)

    p = sub.add_parser("compare", help="compare formulations against AC-polar")
    p.add_argument("--case", required=True)
    p.add_argument("--problem", choices=[q.value for q in ProblemId], default="opf")
    p.add_argument("--form", choices=FORMS, action="append", help="repeatable; ACP is always included")
    _solver_flags(p)
    _output_flags(p, ("json", "csv", "table"), "table")

    p = sub.add_parser("screen", help="try to prove the OPF infeasible with a convex formulation")
    p.add_argument("--case", required=True)
    p.add_argument("--form", choices=CONVEX_FORMS, default="socwr")
    p.add_argument("--top", type=int, default=10, help="number of violated constraints to list")
    _solver_flags(p)
    _output_flags(p)

    p = sub.add_parser("batch", help="run every case file in a directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--problem", choices=[q.value for q in ProblemId], default="opf")
    p.add_argument("--form", choices=FORMS, action="append")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    _solver_flags(p)
    _output_flags(p, ("csv", "json"), "csv")

    p = sub.add_parser("validate", help="parse a case and report component counts")
    p.add_argument("--case", required=True)
    _output_flags(p)
    return parser


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _cmd_run(args):
    doc = run(args.case, args.problem, args.form, _options(args))
    if args.format == "json":
        return doc.to_json() + "\n"
    rows = [["result", "", k, v] for k, v in doc.to_dict().items() if k != "solution"]
    for comp, items in doc.solution.items():
        for cid, fields in items.items():
            rows += [[comp, cid, k, repr(v)] for k, v in fields.items()]
    return _csv_text(["component", "id", "quantity", "value"], rows)


def _cmd_compare(args):
    rep = compare(args.case, args.form or [f.value for f in FORM_ORDER[:5]], _options(args), args.problem)
    if args.format == "json":
        return rep.to_json() + "\n"
    if args.format == "table":
        return rep.to_table() + "\n"
    keys = ["formulation", "status", "objective", "delta_vs_base", "gap_percent", "solve_seconds"]
    rows = [[("" if d[k] is None else d[k]) for k in keys] for d in (r.to_dict() for r in rep.rows)]
    return _csv_text(keys, rows)


def _cmd_screen(args):
    rep = screen_infeasible(args.case, args.form, _options(args), args.top)
    if args.format == "json":
        return rep.to_json() + "\n"
    return _csv_text(["tag", "violation"], rep.violated_tags)


def _cmd_batch(args):
    forms = ordered_forms(args.form or ["acp"])
    rows = batch(args.dir, args.problem, forms, None, _options(args), jobs=args.jobs)
    if args.format == "json":
        return json.dumps(rows, indent=2) + "\n"
    cols = batch_columns(forms)
    return _csv_text(cols, [[r[c] for c in cols] for r in rows])


def _cmd_validate(args):
    net = load_case(args.case)
    info = {
        "case": net.name,
        "base_mva": net.base_mva,
        "buses": len(net.buses),
        "branches": len(net.branches),
        "generators": len(net.gens),
        "dclines": len(net.dclines),
        "reference_buses": net.ref_buses,
    }
    if args.format == "json":
        return json.dumps(info, indent=2) + "\n"
    return _csv_text(list(info), [[info[k] for k in info]])


COMMANDS = {
    "run": _cmd_run,
    "compare": _cmd_compare,
    "screen": _cmd_screen,
    "batch": _cmd_batch,
    "validate": _cmd_validate,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        _emit(COMMANDS[args.command](args), args.out)
    except (PowerFormsError, OSError, ValueError) as e:
        # UnicodeDecodeError is a ValueError
        where = getattr(e, "path", None)
        print(f"error: {where + ': ' if where else ''}{e}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
