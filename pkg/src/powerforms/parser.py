"""Reader and writer for the Matpower ``.m`` case-file subset used by benchmark libraries.

Only two statement shapes are understood::

    mpc.<name> = <scalar or 'string'>;
    mpc.<name> = [ ...rows... ];

plus the ``function mpc = <name>`` header. Nothing is interpreted here; the
matrices come back exactly as written and the network module gives them
meaning.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CaseParseError, MissingSection, RaggedMatrix, TokenError

log = logging.getLogger(__name__)

MATRIX_FIELDS = ("bus", "gen", "branch", "gencost", "dcline")
REQUIRED = ("baseMVA", "bus", "gen", "branch")

_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")
_INF = {"inf": math.inf, "+inf": math.inf, "-inf": -math.inf}
_HEADER = re.compile(r"function\s+(\w+)\s*=\s*(\w+)\s*$")
_ASSIGN = re.compile(r"(\w+)\.(\w+)\s*=\s*")


@dataclass
class RawCase:
    name: str
    base_mva: float
    bus: np.ndarray
    gen: np.ndarray
    branch: np.ndarray
    gencost: np.ndarray | None = None
    dcline: np.ndarray | None = None
    version: str | None = None
    aux: dict[str, np.ndarray] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, RawCase):
            return NotImplemented
        if (self.name, self.base_mva, self.version) != (other.name, other.base_mva, other.version):
            return False
        for f in MATRIX_FIELDS:
            if not _same_matrix(getattr(self, f), getattr(other, f)):
                return False
        if self.aux.keys() != other.aux.keys():
            return False
        return all(_same_matrix(self.aux[k], other.aux[k]) for k in self.aux)


def _same_matrix(a, b):
    if a is None or b is None:
        return a is None and b is None
    if a.size == 0 and b.size == 0:
        # `[]` carries no column count
        return True
    return a.shape == b.shape and np.array_equal(a, b)


def _strip_comment(line):
    quoted = False
    for i, ch in enumerate(line):
        if ch == "'":
            quoted = not quoted
        elif ch == "%" and not quoted:
            return line[:i]
    return line


def _number(token, lineno, col, context):
    low = token.lower()
    if low in _INF:
        return _INF[low]
    if _NUMBER.match(token):
        return float(token)
    raise TokenError(token, lineno, col, context)


class _Reader:
    def __init__(self, text):
        self.lines = [_strip_comment(l) for l in text.splitlines()]
        self.row = 0
        self.col = 0

    def done(self):
        return self.row >= len(self.lines)

    def rest(self):
        return self.lines[self.row][self.col:]

    def advance_line(self):
        self.row += 1
        self.col = 0


def parse_case(text: str, name: str | None = None) -> RawCase:
    """Parse case-file text into a :class:`RawCase`."""
    rd = _Reader(text)
    scalars: dict[str, object] = {}
    matrices: dict[str, np.ndarray] = {}
    case_name = None

    while not rd.done():
        line = rd.rest()
        stripped = line.strip()
        if not stripped:
            rd.advance_line()
            continue
        lineno = rd.row + 1
        m = _HEADER.match(stripped)
        if m:
            if case_name is not None:
                raise TokenError("function", lineno, 1, "second function header")
            case_name = m.group(2)
            rd.advance_line()
            continue
        m = _ASSIGN.match(stripped)
        if not m or m.group(1) != "mpc":
            tok = stripped.split()[0]
            raise TokenError(tok, lineno, line.find(tok) + 1, "statement")
        key = m.group(2)
        offset = line.find(stripped) + m.end()
        body = stripped[m.end():].lstrip()
        rd.col = offset + (len(stripped[m.end():]) - len(body))
        if body.startswith("["):
            rd.col += 1
            matrices[key] = _read_matrix(rd, key)
        elif body.startswith("{"):
            # cell arrays hold labels (bus names, fuel types); not numeric data
            log.warning("ignoring cell-array field mpc.%s on line %d", key, lineno)
            _skip_cell(rd)
        else:
            scalars[key] = _read_scalar(body, lineno, rd.col + 1, key)
            rd.advance_line()

    for req in REQUIRED:
        if req not in scalars and req not in matrices:
            raise MissingSection(req)
    base_mva = scalars["baseMVA"]
    if not isinstance(base_mva, float) or not base_mva > 0:
        raise CaseParseError(f"mpc.baseMVA must be a positive number, got {base_mva!r}")

    core = {f: matrices.pop(f, None) for f in MATRIX_FIELDS}
    if core["bus"].shape[0] == 0:
        raise CaseParseError("mpc.bus is empty")
    gen, gencost = core["gen"], core["gencost"]
    if gencost is not None and gencost.shape[0] not in (gen.shape[0], 2 * gen.shape[0]):
        raise CaseParseError(
            f"mpc.gencost has {gencost.shape[0]} rows for {gen.shape[0]} generators"
        )
    version = scalars.pop("version", None)
    for k, v in scalars.items():
        if k != "baseMVA" and isinstance(v, float):
            matrices[k] = np.array([[v]])
    return RawCase(
        name=case_name or name or "case",
        base_mva=base_mva,
        bus=core["bus"],
        gen=gen,
        branch=core["branch"],
        gencost=gencost,
        dcline=core["dcline"],
        version=None if version is None else str(version),
        aux=matrices,
    )


def _read_scalar(body, lineno, col, key):
    body = body.strip()
    if not body.endswith(";"):
        raise TokenError(body, lineno, col, f"mpc.{key} (missing ';')")
    value = body[:-1].strip()
    if len(value) >= 2 and value[0] == value[-1] == "'":
        return value[1:-1]
    return _number(value, lineno, col, f"mpc.{key}")


def _read_matrix(rd, key):
    rows: list[list[float]] = []
    row_lines: list[int] = []
    current: list[float] = []

    def close_row():
        nonlocal current
        if current:
            rows.append(current)
            row_lines.append(rd.row + 1)
        current = []

    while not rd.done():
        text = rd.rest()
        pos = 0
        n = len(text)
        while pos < n:
            ch = text[pos]
            if ch in " \t,\r":
                pos += 1
            elif ch == ";":
                close_row()
                pos += 1
            elif ch == "]":
                close_row()
                tail = text[pos + 1:].strip()
                if tail not in ("", ";"):
                    raise TokenError(tail, rd.row + 1, rd.col + pos + 2, f"mpc.{key}")
                rd.advance_line()
                return _to_array(rows, row_lines, key)
            else:
                end = pos
                while end < n and text[end] not in " \t,;]\r":
                    end += 1
                current.append(_number(text[pos:end], rd.row + 1, rd.col + pos + 1, f"mpc.{key}"))
                pos = end
        close_row()
        rd.advance_line()
    raise CaseParseError(f"mpc.{key}: unterminated matrix")


def _skip_cell(rd):
    while not rd.done():
        if "}" in rd.rest():
            rd.advance_line()
            return
        rd.advance_line()
    raise CaseParseError("unterminated cell array")


def _to_array(rows, row_lines, key):
    if not rows:
        return np.zeros((0, 0))
    width = len(rows[0])
    for r, ln in zip(rows, row_lines):
        if len(r) != width:
            raise RaggedMatrix(key, ln, width, len(r))
    return np.array(rows, dtype=float)


def parse_file(path) -> RawCase:
    path = Path(path)
    return parse_case(path.read_text(encoding="utf-8"), name=path.stem)


# -- writers -------------------------------------------------------------------


def _fmt(v):
    if math.isinf(v):
        return "Inf" if v > 0 else "-Inf"
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _matrix_text(key, mat):
    if mat.size == 0:
        return f"mpc.{key} = [\n];\n"
    body = "\n".join("\t" + "\t".join(_fmt(v) for v in row) + ";" for row in mat)
    return f"mpc.{key} = [\n{body}\n];\n"


def serialize_case(raw: RawCase) -> str:
    """Write a RawCase back out as case-file text that parses to an equal RawCase."""
    out = [f"function mpc = {raw.name}\n"]
    if raw.version is not None:
        out.append(f"mpc.version = '{raw.version}';\n")
    out.append(f"mpc.baseMVA = {_fmt(raw.base_mva)};\n")
    for f in MATRIX_FIELDS:
        mat = getattr(raw, f)
        if mat is not None:
            out.append(_matrix_text(f, mat))
    for k, mat in raw.aux.items():
        out.append(_matrix_text(k, mat))
    return "".join(out)


def _jsonable(mat):
    if mat is None:
        return None
    return [[v if math.isfinite(v) else ("Inf" if v > 0 else "-Inf") for v in row] for row in mat.tolist()]


def _from_jsonable(rows):
    if rows is None:
        return None
    if not rows:
        return np.zeros((0, 0))
    return np.array([[math.inf if v == "Inf" else -math.inf if v == "-Inf" else v for v in r] for r in rows], dtype=float)


def raw_to_json(raw: RawCase) -> dict:
    """Neutral JSON document; infinite entries are written as the strings "Inf"/"-Inf"."""
    doc = {"name": raw.name, "baseMVA": raw.base_mva}
    for f in MATRIX_FIELDS:
        doc[f] = _jsonable(getattr(raw, f))
    return doc


def raw_from_json(doc: dict) -> RawCase:
    return RawCase(
        name=doc.get("name", "case"),
        base_mva=float(doc["baseMVA"]),
        **{f: _from_jsonable(doc.get(f)) for f in MATRIX_FIELDS},
    )


def dump_json(raw: RawCase, fp=None, **kw):
    text = json.dumps(raw_to_json(raw), **kw)
    if fp is not None:
        fp.write(text)
    return text
