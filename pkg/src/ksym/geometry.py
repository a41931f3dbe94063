"""Chart-level objects on Q, T^1_k Q and (T^1_k)^* Q.

Layout conventions used throughout the package:

* momenta ``p`` are ``(k, n)`` arrays, ``p[A, i] = p^A_i``;
* velocities ``v`` are ``(n, k)`` arrays, ``v[i, A] = v^i_A``;
* a section ``gamma`` evaluates to ``(k, n)``, ``gamma[A, i] = gamma^A_i(q)``;
* a k-vector field on Q evaluates to ``(n, k)``, ``X[i, A] = X^i_A(q)``;
* flat coordinate vectors are ``q`` followed by the fibre block in A-major
  order, matching :class:`~ksym.exprlang.CoordEnv`.

Every evaluator accepts trailing batch axes, so a whole lattice can be pushed
through in one call.
"""

import io
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import exprlang, scalars
from .errors import DomainError, PreconditionError, SchemaError

__all__ = [
    "Dims",
    "PhasePointH",
    "PhasePointL",
    "SectionGamma",
    "KVectorFieldQ",
    "GridSolution",
    "PhaseGrid",
    "prolong",
    "integral_section_residual",
    "closedness_defect",
    "potential_recover",
    "sample_box",
    "interior",
]


@dataclass(frozen=True)
class Dims:
    n: int
    k: int

    def __post_init__(self):
        for name in ("n", "k"):
            value = getattr(self, name)
            if not (isinstance(value, (int, np.integer)) and value >= 1):
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    def env(self, side=exprlang.HAMILTONIAN):
        return exprlang.CoordEnv(int(self.n), int(self.k), side)


def _finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


@dataclass
class PhasePointH:
    """A point (q^i, p^A_i) of (T^1_k)^* Q."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = _finite("q", np.atleast_1d(np.asarray(self.q, dtype=float)))
        self.p = _finite("p", np.atleast_2d(np.asarray(self.p, dtype=float)))
        if self.p.shape[1] != self.q.shape[0]:
            raise ValueError(f"p must have shape (k, {len(self.q)}), got {self.p.shape}")

    @property
    def dims(self):
        return Dims(len(self.q), self.p.shape[0])

    def coords(self):
        return np.concatenate([self.q, self.p.ravel()])

    @classmethod
    def from_coords(cls, dims, z):
        z = np.asarray(z, dtype=float)
        return cls(z[: dims.n], z[dims.n:].reshape(dims.k, dims.n))


@dataclass
class PhasePointL:
    """A point (q^i, v^i_A) of T^1_k Q."""

    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.q = _finite("q", np.atleast_1d(np.asarray(self.q, dtype=float)))
        v = np.asarray(self.v, dtype=float)
        self.v = _finite("v", v.reshape(len(self.q), -1))

    @property
    def dims(self):
        return Dims(len(self.q), self.v.shape[1])

    def coords(self):
        return np.concatenate([self.q, self.v.T.ravel()])

    @classmethod
    def from_coords(cls, dims, z):
        z = np.asarray(z, dtype=float)
        return cls(z[: dims.n], z[dims.n:].reshape(dims.k, dims.n).T)


def _generic_call(func, q):
    q = np.asarray(q, dtype=float)
    qs = [float(x) if np.ndim(x) == 0 else x for x in q]
    rows = func(qs)
    shape = q.shape[1:]
    return np.array([[np.broadcast_to(np.asarray(c, dtype=float), shape) for c in row] for row in rows])


class _QField:
    """Matrix-valued function on Q, generic over scalar types."""

    rows_label = ""

    def __init__(self, dims, func, asts=None):
        self.dims = dims
        self.func = func
        self.asts = asts

    @classmethod
    def from_asts(cls, dims, asts):
        allowed = {f"q{i + 1}" for i in range(dims.n)}
        for row in asts:
            for a in row:
                extra = exprlang.free_vars(a) - allowed
                if extra:
                    raise ValueError(f"{cls.__name__} entries may only use q variables, found {sorted(extra)}")

        def func(qs, _asts=asts):
            return [[exprlang.evaluate(a, qs) for a in row] for row in _asts]

        return cls(dims, func, asts)

    @classmethod
    def from_strings(cls, dims, rows):
        env = dims.env(exprlang.BASE)
        return cls.from_asts(dims, [[exprlang.parse(s, env) for s in row] for row in rows])

    def components(self, qs):
        """Nested-list evaluation on arbitrary scalars (duals welcome)."""
        return self.func(list(qs))

    def __call__(self, q):
        return _generic_call(self.func, q)

    def jacobian(self, q):
        """Array ``J[r, c, j]`` of derivatives of entry ``[r][c]`` along ``q^j``."""
        q = np.asarray(q, dtype=float)
        qs = [float(x) if np.ndim(x) == 0 else x for x in q]

        def flat(zs):
            return [c for row in self.func(zs) for c in row]

        values, rows = scalars.jacobian_generic(flat, qs)
        shape = q.shape[1:]
        jac = np.array([[np.broadcast_to(np.asarray(e, dtype=float), shape) for e in row] for row in rows])
        if not np.all(np.isfinite(jac)):
            raise DomainError("non-finite derivative of a field component")
        r, c = self.shape
        return jac.reshape((r, c, self.dims.n) + shape)


class SectionGamma(_QField):
    """k one-forms gamma^A = gamma^A_i dq^i; evaluates to shape ``(k, n)``."""

    @property
    def shape(self):
        return (self.dims.k, self.dims.n)

    @classmethod
    def from_asts(cls, dims, asts):
        if len(asts) != dims.k or any(len(row) != dims.n for row in asts):
            raise ValueError(f"section needs a {dims.k}x{dims.n} array of components")
        return super().from_asts(dims, asts)


class KVectorFieldQ(_QField):
    """k vector fields X_A = X^i_A d/dq^i on Q; evaluates to shape ``(n, k)``."""

    @property
    def shape(self):
        return (self.dims.n, self.dims.k)

    @classmethod
    def from_asts(cls, dims, asts):
        if len(asts) != dims.n or any(len(row) != dims.k for row in asts):
            raise ValueError(f"k-vector field needs an {dims.n}x{dims.k} array of components")
        return super().from_asts(dims, asts)

    def column(self, a):
        """Vector field X_A as a function ``q -> (n, ...)`` on arrays."""

        def f(q):
            return self(q)[:, a]

        return f


# ---------------------------------------------------------------------------
# lattices


@dataclass
class GridSolution:
    """Values of psi: [t_min, t_max] -> Q on a uniform lattice.

    ``values`` has shape ``(steps[0] + 1, ..., steps[k-1] + 1, n)``.
    """

    t_min: np.ndarray
    t_max: np.ndarray
    steps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.t_min = np.atleast_1d(np.asarray(self.t_min, dtype=float))
        self.t_max = np.atleast_1d(np.asarray(self.t_max, dtype=float))
        self.steps = np.atleast_1d(np.asarray(self.steps, dtype=int))
        self.values = np.asarray(self.values, dtype=float)
        k = len(self.steps)
        if self.t_min.shape != (k,) or self.t_max.shape != (k,):
            raise ValueError("t_min, t_max and steps must have the same length")
        if np.any(self.steps < 2):
            raise ValueError(f"need at least 2 steps per axis, got {self.steps.tolist()}")
        if np.any(self.t_max <= self.t_min):
            raise ValueError("t_max must exceed t_min on every axis")
        if self.values.shape[:k] != tuple(self.steps + 1):
            raise ValueError(f"values shape {self.values.shape} does not match steps {self.steps.tolist()}")

    @property
    def k(self):
        return len(self.steps)

    @property
    def n(self):
        return self.values.shape[-1]

    @property
    def nodes(self):
        return tuple(int(s) + 1 for s in self.steps)

    @property
    def spacing(self):
        return (self.t_max - self.t_min) / self.steps

    def axes(self):
        return [np.linspace(a, b, s + 1) for a, b, s in zip(self.t_min, self.t_max, self.steps)]

    def times(self):
        """Array ``(*nodes, k)`` of lattice coordinates."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def q_batch(self):
        """Values with the coordinate axis first, ready for batched evaluators."""
        return np.moveaxis(self.values, -1, 0)

    def columns(self):
        names = [f"t{a + 1}" for a in range(self.k)] + [f"q{i + 1}" for i in range(self.n)]
        data = [self.times().reshape(-1, self.k), self.values.reshape(-1, self.n)]
        return names, data

    def to_csv(self, path=None):
        """CSV text ``t1..tk,q1..qn[,...]``, one row per node, t1 slowest.

        If ``path`` is given the file is written atomically.
        """
        names, data = self.columns()
        buf = io.StringIO()
        np.savetxt(buf, np.hstack(data), delimiter=",", fmt="%.17g", header=",".join(names), comments="")
        text = buf.getvalue()
        if path is not None:
            write_atomic(path, text)
        return text

    def restrict(self, lo, hi):
        """Sub-lattice between node indices ``lo`` and ``hi`` (inclusive) per axis."""
        sl = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
        axes = self.axes()
        return GridSolution(
            [ax[a] for ax, a in zip(axes, lo)],
            [ax[b] for ax, b in zip(axes, hi)],
            [b - a for a, b in zip(lo, hi)],
            self.values[sl],
        )


@dataclass
class PhaseGrid(GridSolution):
    """A lattice of phase points (q, p); ``momenta`` has shape ``(*nodes, k, n)``."""

    momenta: np.ndarray = field(default=None)

    def __post_init__(self):
        super().__post_init__()
        self.momenta = np.asarray(self.momenta, dtype=float)
        if self.momenta.shape != self.nodes + (self.k, self.n):
            raise ValueError(f"momenta must have shape {self.nodes + (self.k, self.n)}, got {self.momenta.shape}")

    def columns(self):
        names, data = super().columns()
        names = names + [f"p{a + 1}_{i + 1}" for a in range(self.k) for i in range(self.n)]
        return names, data + [self.momenta.reshape(-1, self.k * self.n)]

    def restrict(self, lo, hi):
        base = super().restrict(lo, hi)
        sl = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
        return PhaseGrid(base.t_min, base.t_max, base.steps, base.values, self.momenta[sl])


def write_atomic(path, text):
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_grid_csv(source, k=None, n=None):
    """Parse a grid CSV into ``(header, GridSolution, extra_columns)``.

    ``extra_columns`` maps every column after ``q1..qn`` to its lattice array.
    """
    text = source.read() if hasattr(source, "read") else open(source).read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError("grid CSV is empty")
    header = [h.strip() for h in lines[0].split(",")]
    tcols = [h for h in header if h.startswith("t")]
    qcols = [h for h in header if h.startswith("q")]
    if k is not None and tcols != [f"t{a + 1}" for a in range(k)]:
        raise SchemaError(f"expected time columns t1..t{k}, found {tcols}")
    if n is not None and qcols != [f"q{i + 1}" for i in range(n)]:
        raise SchemaError(f"expected coordinate columns q1..q{n}, found {qcols}")
    k, n = len(tcols), len(qcols)
    if k == 0 or n == 0 or header[: k + n] != tcols + qcols:
        raise SchemaError(f"header must start with t1..tk,q1..qn, found {header}")
    if len(lines) < 2:
        raise SchemaError("grid CSV has a header but no rows")
    try:
        data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    except ValueError as exc:
        raise SchemaError(f"non-numeric entry in grid CSV: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise SchemaError(f"rows must have {len(header)} entries")
    axes = [np.unique(data[:, a]) for a in range(k)]
    nodes = tuple(len(ax) for ax in axes)
    if int(np.prod(nodes)) != len(data):
        raise SchemaError(f"{len(data)} rows do not form a lattice with {nodes} nodes")
    if any(m < 3 for m in nodes):
        raise SchemaError(f"need at least 3 nodes per axis, got {nodes}")
    for a, ax in enumerate(axes):
        d = np.diff(ax)
        if not np.allclose(d, d[0], rtol=1e-9, atol=0):
            raise SchemaError(f"axis t{a + 1} is not uniformly spaced")
    expected = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    if not np.array_equal(expected, data[:, :k]):
        raise SchemaError("rows are not in lattice order (t1 slowest)")
    grid = GridSolution(
        [ax[0] for ax in axes], [ax[-1] for ax in axes], [m - 1 for m in nodes],
        data[:, k: k + n].reshape(nodes + (n,)),
    )
    extra = {name: data[:, j].reshape(nodes) for j, name in enumerate(header) if j >= k + n}
    return header, grid, extra


# ---------------------------------------------------------------------------
# operations


def interior(k):
    return (slice(1, -1),) * k


def prolong(g):
    """First prolongation: ``v[..., i, A] = d psi^i / d t^A`` on every node.

    Central differences inside, one-sided three-point stencils on the
    boundary, so the whole lattice is second-order accurate.
    """
    if any(m < 3 for m in g.nodes):
        raise ValueError(f"prolongation needs at least 3 nodes per axis, got {g.nodes}")
    derivs = np.gradient(g.values, *g.spacing, axis=tuple(range(g.k)), edge_order=2)
    if g.k == 1:
        derivs = [derivs]
    return np.stack(derivs, axis=-1)


def _locate(fn, q_batch):
    """Evaluate ``fn`` on a batch; on a domain error, report the first bad node."""
    try:
        return fn(q_batch)
    except DomainError as exc:
        shape = q_batch.shape[1:]
        for idx in np.ndindex(*shape):
            try:
                fn(q_batch[(slice(None),) + idx])
            except DomainError:
                raise DomainError(f"{exc} at node {idx}") from exc
        raise


def integral_section_defects(g, X):
    """Per-node ``max_{i,A} |d psi^i/dt^A - X^i_A(psi)|`` over interior nodes."""
    v = prolong(g)
    xv = np.moveaxis(_locate(X, g.q_batch()), (0, 1), (-2, -1))
    sl = interior(g.k)
    return np.abs(v[sl] - xv[sl]).max(axis=(-2, -1))


def integral_section_residual(g, X):
    """Sup-norm defect of the integral-section equations on interior nodes."""
    return float(integral_section_defects(g, X).max())


def sample_box(lo, hi, n, points=101, cap=100_000):
    """Uniform sample of ``[lo, hi]^n`` as an ``(m, n)`` array, at most ``cap`` points."""
    per_axis = points
    while per_axis > 2 and per_axis**n > cap:
        per_axis -= 1
    axes = [np.linspace(lo, hi, per_axis)] * n
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)


def _as_sample(sample, n):
    sample = np.asarray(sample, dtype=float)
    if sample.ndim == 1:
        sample = sample.reshape(-1, n) if n > 1 else sample[:, None]
    if sample.size == 0:
        raise ValueError("sample must be nonempty")
    if sample.shape[1] != n:
        raise ValueError(f"sample points must have {n} coordinates")
    return sample


def closedness_defects(gamma, sample):
    """Per-form defects ``max |d gamma^A_i/dq^j - d gamma^A_j/dq^i|``, shape ``(k,)``."""
    sample = _as_sample(sample, gamma.dims.n)
    jac = gamma.jacobian(sample.T)
    asym = np.abs(jac - np.swapaxes(jac, 1, 2))
    return asym.reshape(gamma.dims.k, -1).max(axis=1)


def closedness_defect(gamma, sample):
    """Largest violation of d gamma^A = 0 over the sample (0 when n == 1)."""
    return float(closedness_defects(gamma, sample).max())


def potential_recover(gamma, base, target, nodes=101, tol=1e-9):
    """``W^A(target) - W^A(base)`` by Simpson quadrature along the straight segment.

    Raises :class:`PreconditionError` when gamma is not closed on the segment,
    since the result would then depend on the path.
    """
    base = np.atleast_1d(np.asarray(base, dtype=float))
    target = np.atleast_1d(np.asarray(target, dtype=float))
    if nodes < 3 or nodes % 2 == 0:
        raise ValueError("composite Simpson needs an odd number of nodes >= 3")
    s = np.linspace(0.0, 1.0, nodes)
    path = base[:, None] + np.outer(target - base, s)
    defect = closedness_defect(gamma, path.T)
    if defect > tol:
        raise PreconditionError(f"section is not closed along the path (defect {defect:.3e})")
    integrand = np.einsum("ais,i->as", gamma(path), target - base)
    return simpson(integrand, x=s, axis=-1)
