"""Solution documents for programs solved outside this package.

A program exported with :func:`powerforms.program.serialize_program` can be
solved by any external tool; the answer comes back as::

    {"program": "<name>", "status": "LocallyOptimal",
     "variables": {"<variable name>": value, ...}}

``status`` is a :class:`TerminationStatus` value. The objective is always
recomputed here, never trusted from the document.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import PowerFormsError
from .types import SolveResult, TerminationStatus


class SolutionImportError(PowerFormsError):
    pass


def export_solution(prog, result: SolveResult) -> dict:
    return {
        "program": prog.name,
        "status": result.status.value,
        "variables": {v.name: float(result.primal[v.index]) for v in prog.variables},
    }


def import_solution(prog, doc, tol=1e-6) -> SolveResult:
    """Check an external solution against ``prog`` and wrap it as a :class:`SolveResult`.

    Raises SolutionImportError when a variable is missing or unknown, when a value
    leaves its bounds, or when an optimal status is claimed for a point that
    violates a constraint by more than ``tol``. A GloballyOptimal claim on a
    nonconvex program is downgraded to LocallyOptimal.
    """
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    try:
        status = TerminationStatus(doc["status"])
        values = doc["variables"]
    except (KeyError, ValueError, TypeError) as e:
        raise SolutionImportError(f"malformed solution document: {e}") from e
    names = {v.name for v in prog.variables}
    unknown = sorted(set(values) - names)
    if unknown:
        raise SolutionImportError(f"unknown variables: {', '.join(unknown[:5])}")
    missing = [v.name for v in prog.variables if v.name not in values]
    if missing:
        raise SolutionImportError(f"missing variables: {', '.join(missing[:5])}")
    x = np.array([float(values[v.name]) for v in prog.variables])
    lo, hi = prog.bounds()
    out = np.maximum(lo - x, x - hi)
    if out.size and out.max() > 1e-8:
        k = int(np.argmax(out))
        raise SolutionImportError(f"variable {prog.variables[k].name} out of bounds by {out[k]:.3g}")
    viol = prog.violations(x)
    tags = sorted(((prog.constraints[k].tag, float(v)) for k, v in enumerate(viol) if v > tol),
                  key=lambda tv: (-tv[1], tv[0]))
    if status.is_optimal and tags:
        raise SolutionImportError(f"status {status.value} claimed but {tags[0][0]} is violated by {tags[0][1]:.3g}")
    if status is TerminationStatus.GLOBALLY_OPTIMAL and not prog.convex:
        status = TerminationStatus.LOCALLY_OPTIMAL
    objective = prog.evaluate_objective(x) if status.is_optimal else np.nan
    return SolveResult(status, float(objective), x, violated_tags=tags)
