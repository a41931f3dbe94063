"""Line-oriented problem files (see ``docs/problem_format.md``).

Example::

    [problem]
    kind = hamiltonian
    n = 1
    k = 2

    [hamiltonian]
    H = 0.5*(p1_1^2/4 - p2_1^2/1)

    [section]
    gamma1_1 = 2*q1
    gamma2_1 = q1

    [grid]
    t_min = 0, 0
    t_max = 1, 1
    steps = 100, 100
    q0 = 1
"""

import re
from dataclasses import dataclass, field, fields

from . import exprlang
from .errors import KsymError, ParseError
from .geometry import Dims, KVectorFieldQ, SectionGamma
from .hamiltonian import HamiltonianProblem
from .integrate import GridSpec
from .lagrangian import LagrangianProblem

__all__ = ["ProblemFileError", "Tolerances", "ProblemFile", "parse_problem", "load_problem", "format_problem"]

KINDS = ("hamiltonian", "lagrangian")
SECTIONS = ("problem", "hamiltonian", "lagrangian", "section", "grid", "tolerances")


class ProblemFileError(KsymError, ValueError):
    def __init__(self, message, filename="<string>", line=None):
        where = f"{filename}:{line}" if line is not None else filename
        super().__init__(f"{where}: {message}")
        self.filename = filename
        self.line = line


@dataclass
class Tolerances:
    hj: float = 1e-9
    closedness: float = 1e-9
    commutator: float = 1e-9
    path: float = 1e-7
    grid_c: float = 10.0
    sample_min: float = -1.0
    sample_max: float = 1.0
    sample_points: int = 101
    sample_cap: int = 100_000


@dataclass
class ProblemFile:
    kind: str
    n: int
    k: int
    expression: str
    section: dict = field(default_factory=dict)
    grid: GridSpec = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    filename: str = "<string>"
    lines: dict = field(default_factory=dict)

    @property
    def dims(self):
        return Dims(self.n, self.k)

    def section_keys(self):
        if self.kind == "hamiltonian":
            return [f"gamma{a + 1}_{i + 1}" for a in range(self.k) for i in range(self.n)]
        return [f"X{i + 1}_{a + 1}" for i in range(self.n) for a in range(self.k)]

    def _parse(self, text, env, key):
        try:
            return exprlang.parse(text, env)
        except ParseError as exc:
            raise ProblemFileError(f"{key}: {exc}", self.filename, self.lines.get(key)) from None

    def build(self):
        """The :class:`HamiltonianProblem` or :class:`LagrangianProblem` described by the file."""
        dims = self.dims
        base_env = dims.env(exprlang.BASE)
        entries = {key: self._parse(self.section[key], base_env, key) for key in self.section}
        if self.kind == "hamiltonian":
            h = self._parse(self.expression, dims.env(), "H")
            gamma = None
            if entries:
                rows = [[entries[f"gamma{a + 1}_{i + 1}"] for i in range(self.n)] for a in range(self.k)]
                gamma = SectionGamma.from_asts(dims, rows)
            return HamiltonianProblem(dims, h, gamma)
        lag = self._parse(self.expression, dims.env(exprlang.LAGRANGIAN), "L")
        field_x = None
        if entries:
            rows = [[entries[f"X{i + 1}_{a + 1}"] for a in range(self.k)] for i in range(self.n)]
            field_x = KVectorFieldQ.from_asts(dims, rows)
        return LagrangianProblem(dims, lag, field_x)


_SECTION_RE = re.compile(r"^\[([A-Za-z_]+)\]$")
_GAMMA_RE = re.compile(r"^gamma(\d+)_(\d+)$")
_X_RE = re.compile(r"^X(\d+)_(\d+)$")


def _numbers(text, conv, key, filename, line):
    try:
        return [conv(x.strip()) for x in text.split(",")]
    except ValueError:
        raise ProblemFileError(f"{key}: expected a comma-separated list of numbers", filename, line) from None


def parse_problem(text, filename="<string>"):
    """Parse problem-file text; every error carries ``filename:line``."""
    raw = {name: {} for name in SECTIONS}
    where = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        m = _SECTION_RE.match(stripped)
        if m:
            current = m.group(1)
            if current not in SECTIONS:
                raise ProblemFileError(f"unknown section [{current}]", filename, lineno)
            if (current, None) in where:
                raise ProblemFileError(f"duplicate section [{current}]", filename, lineno)
            where[(current, None)] = lineno
            continue
        if current is None:
            raise ProblemFileError("entry outside of any section", filename, lineno)
        if "=" not in stripped:
            raise ProblemFileError("expected 'key = value'", filename, lineno)
        key, value = (s.strip() for s in stripped.split("=", 1))
        if not key or not value:
            raise ProblemFileError("expected 'key = value'", filename, lineno)
        if key in raw[current]:
            raise ProblemFileError(f"duplicate key {key!r} in [{current}]", filename, lineno)
        raw[current][key] = value
        where[(current, key)] = lineno

    def line_of(section, key=None):
        return where.get((section, key), where.get((section, None)))

    def reject_unknown(section, allowed):
        for key in raw[section]:
            if key not in allowed:
                raise ProblemFileError(f"unknown key {key!r} in [{section}]", filename, line_of(section, key))

    if ("problem", None) not in where:
        raise ProblemFileError("missing [problem] section", filename)
    reject_unknown("problem", ("kind", "n", "k"))
    prob = raw["problem"]
    for key in ("kind", "n", "k"):
        if key not in prob:
            raise ProblemFileError(f"[problem] is missing {key!r}", filename, line_of("problem"))
    kind = prob["kind"]
    if kind not in KINDS:
        raise ProblemFileError(f"kind must be one of {KINDS}, got {kind!r}", filename, line_of("problem", "kind"))
    try:
        n, k = int(prob["n"]), int(prob["k"])
    except ValueError:
        raise ProblemFileError("n and k must be integers", filename, line_of("problem", "n")) from None
    if n < 1 or k < 1:
        raise ProblemFileError("n and k must be positive", filename, line_of("problem", "n"))

    other = "lagrangian" if kind == "hamiltonian" else "hamiltonian"
    if (other, None) in where:
        raise ProblemFileError(f"[{other}] section given for a {kind} problem", filename, line_of(other))
    if (kind, None) not in where:
        raise ProblemFileError(f"missing [{kind}] section", filename)
    symbol = "H" if kind == "hamiltonian" else "L"
    reject_unknown(kind, (symbol,))
    if symbol not in raw[kind]:
        raise ProblemFileError(f"[{kind}] is missing {symbol!r}", filename, line_of(kind))

    lines = {symbol: line_of(kind, symbol)}
    pf = ProblemFile(kind, n, k, raw[kind][symbol], filename=filename, lines=lines)

    expected = pf.section_keys()
    pattern = _GAMMA_RE if kind == "hamiltonian" else _X_RE
    for key in raw["section"]:
        if not pattern.match(key):
            raise ProblemFileError(f"unknown key {key!r} in [section]", filename, line_of("section", key))
        if key not in expected:
            raise ProblemFileError(f"index out of range in {key!r} (n={n}, k={k})", filename, line_of("section", key))
    if raw["section"]:
        missing = [key for key in expected if key not in raw["section"]]
        if missing:
            raise ProblemFileError(f"[section] is missing {missing}", filename, line_of("section"))
        pf.section = {key: raw["section"][key] for key in expected}
        lines.update({key: line_of("section", key) for key in expected})

    if ("grid", None) in where:
        reject_unknown("grid", ("t_min", "t_max", "steps", "q0"))
        g = raw["grid"]
        for key in ("t_min", "t_max", "steps", "q0"):
            if key not in g:
                raise ProblemFileError(f"[grid] is missing {key!r}", filename, line_of("grid"))
        vals = {
            key: _numbers(g[key], int if key == "steps" else float, key, filename, line_of("grid", key))
            for key in ("t_min", "t_max", "steps", "q0")
        }
        for key, size in (("t_min", k), ("t_max", k), ("steps", k), ("q0", n)):
            if len(vals[key]) != size:
                raise ProblemFileError(f"{key} needs {size} entries, got {len(vals[key])}", filename, line_of("grid", key))
        try:
            pf.grid = GridSpec(vals["t_min"], vals["t_max"], vals["steps"], vals["q0"])
        except ValueError as exc:
            raise ProblemFileError(str(exc), filename, line_of("grid")) from None

    if ("tolerances", None) in where:
        types = {f.name: f.type for f in fields(Tolerances)}
        reject_unknown("tolerances", tuple(types))
        overrides = {}
        for key, value in raw["tolerances"].items():
            conv = int if types[key] in (int, "int") else float
            try:
                overrides[key] = conv(value)
            except ValueError:
                raise ProblemFileError(f"{key}: expected a number", filename, line_of("tolerances", key)) from None
        pf.tolerances = Tolerances(**overrides)

    pf.build()  # surfaces expression errors with their line numbers
    return pf


def load_problem(path):
    with open(path) as fh:
        return parse_problem(fh.read(), filename=str(path))


def _fmt_list(values):
    return ", ".join(repr(float(v)) if not float(v).is_integer() else str(int(v)) for v in values)


def format_problem(pf):
    """Problem-file text for ``pf``; ``parse_problem(format_problem(pf))`` round-trips."""
    symbol = "H" if pf.kind == "hamiltonian" else "L"
    out = ["[problem]", f"kind = {pf.kind}", f"n = {pf.n}", f"k = {pf.k}", "", f"[{pf.kind}]", f"{symbol} = {pf.expression}"]
    if pf.section:
        out += ["", "[section]"] + [f"{key} = {value}" for key, value in pf.section.items()]
    if pf.grid is not None:
        g = pf.grid
        out += [
            "",
            "[grid]",
            f"t_min = {_fmt_list(g.t_min)}",
            f"t_max = {_fmt_list(g.t_max)}",
            f"steps = {', '.join(str(int(s)) for s in g.steps)}",
            f"q0 = {_fmt_list(g.q0)}",
        ]
    defaults = Tolerances()
    changed = [(f.name, getattr(pf.tolerances, f.name)) for f in fields(Tolerances)
               if getattr(pf.tolerances, f.name) != getattr(defaults, f.name)]
    if changed:
        out += ["", "[tolerances]"] + [f"{name} = {value!r}" for name, value in changed]
    return "\n".join(out) + "\n"
