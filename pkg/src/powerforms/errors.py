"""Exception hierarchy shared by every layer of the toolkit."""


class PowerFormsError(Exception):
    """Base class for all errors raised by powerforms."""


# -- case parsing --------------------------------------------------------------


class CaseParseError(PowerFormsError):
    pass


class MissingSection(CaseParseError):
    def __init__(self, section):
        super().__init__(f"case file has no `mpc.{section}` assignment")
        self.section = section


class RaggedMatrix(CaseParseError):
    def __init__(self, field, line, expected, got):
        super().__init__(
            f"mpc.{field}: row on line {line} has {got} columns, expected {expected}"
        )
        self.field = field
        self.line = line


class TokenError(CaseParseError):
    def __init__(self, token, line, column, context=""):
        where = f" in {context}" if context else ""
        super().__init__(f"unexpected token {token!r} at line {line}, column {column}{where}")
        self.token = token
        self.line = line
        self.column = column


# -- network construction ------------------------------------------------------


class NetworkError(PowerFormsError):
    pass


class NoReferenceBus(NetworkError):
    def __init__(self):
        super().__init__("network has no in-service reference (type 3) bus")


class DanglingEndpoint(NetworkError):
    def __init__(self, component, cid, bus):
        super().__init__(f"{component} {cid} references missing or out-of-service bus {bus}")
        self.component = component
        self.cid = cid
        self.bus = bus


class UnsupportedCostModel(NetworkError):
    def __init__(self, gen_id, detail):
        super().__init__(f"generator {gen_id}: unsupported cost model ({detail})")
        self.gen_id = gen_id


class InvalidImpedance(NetworkError):
    def __init__(self, branch_id, detail="r = x = 0"):
        super().__init__(f"branch {branch_id}: invalid series impedance ({detail})")
        self.branch_id = branch_id


# -- program construction ------------------------------------------------------


class ProgramError(PowerFormsError):
    pass


class BoundsCrossed(ProgramError):
    def __init__(self, name, lower, upper):
        super().__init__(f"variable {name!r}: lower bound {lower} exceeds upper bound {upper}")


class ForeignVariable(ProgramError):
    def __init__(self, index, name=None):
        label = f"{name!r} " if name else ""
        super().__init__(f"expression references variable {label}(index {index}) not owned by this program")
        self.index = index


class NonAffineArgument(ProgramError):
    """A trigonometric node whose argument is not affine cannot be compiled."""


class UnsupportedOnOffForm(ProgramError):
    def __init__(self, form):
        super().__init__(
            f"on/off branch constraints are not available for {form} without fixed switching "
            "(use DCP, SOCWR or QCWR, or pass a fixed branch status)"
        )
        self.form = form


class UnsupportedProblem(ProgramError):
    pass
