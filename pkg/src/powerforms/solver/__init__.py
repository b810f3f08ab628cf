from .continuous import Certificate, Outcome, certify_infeasibility, elastic_program, solve_continuous
from .bnb import solve_mixed
from .exchange import SolutionImportError, export_solution, import_solution
from .types import SolveOptions, SolveResult, TerminationStatus

__all__ = [
    "Certificate",
    "Outcome",
    "SolveOptions",
    "SolutionImportError",
    "SolveResult",
    "TerminationStatus",
    "certify_infeasibility",
    "elastic_program",
    "export_solution",
    "import_solution",
    "solve_continuous",
    "solve_mixed",
]
