"""Hamiltonian side: the flat map, Hamilton field equations and HJ checks.

On (T^1_k)^* Q with omega^A = dq^i ^ dp^A_i the flat map sends a k-vector Z to

    flat(Z) = sum_A i_{Z_A} omega^A = -sum_A (Z_A)^A_i dq^i + Z^i_A dp^A_i,

and Z solves the field equations when flat(Z) = dH.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import exprlang, scalars
from .errors import PreconditionError
from .fields import KVector, KVectorFieldPhase
from .geometry import Dims, KVectorFieldQ, SectionGamma, _as_sample, closedness_defect, interior

__all__ = [
    "HamiltonianProblem",
    "Covector",
    "KernelTest",
    "flat",
    "in_ker_flat",
    "build_hamiltonian_kvf",
    "project_gamma",
    "hj_residual",
    "hj_spread",
    "relatedness_defect",
    "hamilton_defects",
    "hamilton_residual",
]

DEFAULT_TOL = 1e-9


@dataclass
class HamiltonianProblem:
    dims: Dims
    H: object
    gamma: SectionGamma = None

    def __post_init__(self):
        if isinstance(self.H, str):
            self.H = exprlang.parse(self.H, self.dims.env())
        if isinstance(self.H, exprlang.Ast):
            extra = exprlang.free_vars(self.H) - set(self.dims.env().names)
            if extra:
                raise ValueError(f"H uses unknown coordinates {sorted(extra)}")
        if self.gamma is not None and self.gamma.dims != self.dims:
            raise ValueError("section dimensions do not match the problem")

    @classmethod
    def from_strings(cls, n, k, H, gamma=None):
        dims = Dims(n, k)
        section = SectionGamma.from_strings(dims, gamma) if gamma is not None else None
        return cls(dims, exprlang.parse(H, dims.env()), section)

    @property
    def func(self):
        return exprlang.as_function(self.H)


@dataclass
class Covector:
    """A covector on (T^1_k)^* Q: ``dq`` has shape ``(n,)``, ``dp`` shape ``(k, n)``."""

    dq: np.ndarray
    dp: np.ndarray

    def norm_inf(self):
        return float(max(np.abs(self.dq).max(initial=0.0), np.abs(self.dp).max(initial=0.0)))

    def is_zero(self):
        return not np.any(self.dq) and not np.any(self.dp)


class KernelTest(NamedTuple):
    in_kernel: bool
    defect: float


def _trace(fiber):
    # sequential sum over A so that constructed kernel elements cancel exactly
    total = 0.0
    for a in range(fiber.shape[0]):
        total = total + fiber[a, a]
    return total


def flat(Z):
    """The covector sum_A i_{Z_A} omega^A of an evaluated k-vector ``Z``."""
    base = np.asarray(Z.base, dtype=float)
    fiber = np.asarray(Z.fiber, dtype=float)
    k, n = base.shape
    if fiber.shape != (k, k, n):
        raise ValueError(f"fibre block must have shape {(k, k, n)}, got {fiber.shape}")
    return Covector(-_trace(fiber), base.copy())


def in_ker_flat(Z, tol=DEFAULT_TOL):
    defect = flat(Z).norm_inf()
    return KernelTest(defect < tol, defect)


def build_hamiltonian_kvf(H, dims, gauge="symmetric"):
    """A k-vector field solving flat(Z) = dH.

    Base parts are Z^i_A = dH/dp^A_i.  The fibre parts are fixed only through
    their trace; ``gauge="symmetric"`` spreads -dH/dq^i evenly over the
    diagonal, ``gauge="first"`` puts it all on (Z_1)^1_i.
    """
    if gauge not in ("symmetric", "first"):
        raise ValueError(f"unknown gauge {gauge!r}")
    f = exprlang.as_function(H, dims.env())
    n, k = dims.n, dims.k

    def base_fn(zs):
        _, partials = scalars.gradient_generic(f, zs)
        return [[partials[n + a * n + i] for i in range(n)] for a in range(k)]

    def fiber_fn(zs):
        _, partials = scalars.gradient_generic(f, zs)
        dq = partials[:n]
        out = [[[0.0] * n for _ in range(k)] for _ in range(k)]
        for i in range(n):
            if gauge == "symmetric":
                for a in range(k):
                    out[a][a][i] = -dq[i] / k
            else:
                out[0][0][i] = -dq[i]
        return out

    return KVectorFieldPhase(dims, exprlang.HAMILTONIAN, base_fn, fiber_fn)


def project_gamma(Z, gamma):
    """Z^gamma = T Pi_Q o Z o gamma: the base parts of Z along the section."""
    if Z.dims != gamma.dims:
        raise ValueError("field and section dimensions differ")
    n, k = Z.dims.n, Z.dims.k

    def func(qs):
        g = gamma.components(qs)
        zs = list(qs) + [g[a][i] for a in range(k) for i in range(n)]
        base = Z.base_fn(zs)
        return [[base[a][i] for a in range(k)] for i in range(n)]

    return KVectorFieldQ(Z.dims, func)


def _composed(f, gamma, n, k):
    def h_of_gamma(qs):
        g = gamma.components(qs)
        return f(list(qs) + [g[a][i] for a in range(k) for i in range(n)])

    return h_of_gamma


def _require_closed(gamma, sample, tol):
    if gamma.dims.n > 1:
        defect = closedness_defect(gamma, sample)
        if defect > tol:
            raise PreconditionError(f"section is not closed (defect {defect:.3e} > {tol:g})")


def hj_residual(H, gamma, sample, tol=DEFAULT_TOL):
    """sup over the sample of |d(H o gamma)|_inf."""
    dims = gamma.dims
    sample = _as_sample(sample, dims.n)
    _require_closed(gamma, sample, tol)
    f = exprlang.as_function(H, dims.env())
    d = scalars.grad(_composed(f, gamma, dims.n, dims.k), sample.T)
    return float(np.abs(d).max())


def hj_spread(H, gamma, sample):
    """max - min of H o gamma over the sample (a second witness of constancy)."""
    dims = gamma.dims
    sample = _as_sample(sample, dims.n)
    f = exprlang.as_function(H, dims.env())
    values = np.broadcast_to(
        np.asarray(_composed(f, gamma, dims.n, dims.k)(list(sample.T)), dtype=float), (len(sample),)
    )
    return float(values.max() - values.min())


def relatedness_defect(Z, gamma, sample, tol=DEFAULT_TOL):
    """Kernel test for Z o gamma - T gamma(Z^gamma).

    The difference has no base part; its fibre part is
    (Y_A)^B_i = (Z_A)^B_i o gamma - (Z^j_A o gamma) d gamma^B_i / dq^j.
    Returns the sup over the sample of |flat(Y)|_inf and whether it is below ``tol``.
    """
    dims = gamma.dims
    n, k = dims.n, dims.k
    sample = _as_sample(sample, n)
    _require_closed(gamma, sample, tol)
    q = sample.T
    g = gamma(q)
    z = np.concatenate([q, g.reshape(k * n, -1)])
    base, fiber = Z.batch(z)
    jac = gamma.jacobian(q)
    y = fiber - np.einsum("ajm,bijm->abim", base, jac)
    worst = 0.0
    for m in range(len(sample)):
        worst = max(worst, flat(KVector(np.zeros((k, n)), y[..., m])).norm_inf())
    return KernelTest(worst < tol, worst)


def hamilton_defects(grid, H):
    """Per-node defect of the Hamilton field equations on interior nodes.

    ``grid`` is a :class:`~ksym.geometry.PhaseGrid`.  Both families are checked:
    dq^i/dt^A = dH/dp^A_i and sum_A dp^A_i/dt^A = -dH/dq^i.
    """
    k, n = grid.k, grid.n
    h = grid.spacing
    f = exprlang.as_function(H, grid_env(grid))
    q = grid.q_batch()
    p = np.moveaxis(grid.momenta, (-2, -1), (0, 1))
    z = np.concatenate([q, p.reshape((k * n,) + grid.nodes)])
    dH = scalars.grad(f, z)
    dHdq, dHdp = dH[:n], dH[n:].reshape((k, n) + grid.nodes)
    dq = [np.gradient(q, h[a], axis=1 + a, edge_order=2) for a in range(k)]
    div = sum(np.gradient(p[a], h[a], axis=1 + a, edge_order=2) for a in range(k))
    fam1 = np.stack([np.abs(dq[a] - dHdp[a]) for a in range(k)])
    fam2 = np.abs(div + dHdq)
    sl = interior(k)
    per_node = np.maximum(fam1.max(axis=(0, 1)), fam2.max(axis=0))
    return per_node[sl]


def grid_env(grid):
    return exprlang.CoordEnv(grid.n, grid.k, exprlang.HAMILTONIAN)


def hamilton_residual(grid, H):
    """Sup-norm defect of the Hamilton equations over interior nodes."""
    if any(m < 3 for m in grid.nodes):
        raise ValueError(f"need at least 3 nodes per axis, got {grid.nodes}")
    return float(hamilton_defects(grid, H).max())
