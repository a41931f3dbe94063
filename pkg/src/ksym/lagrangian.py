"""Lagrangian side: Legendre map, energy, flat_L, Euler-Lagrange and HJ checks.

Velocity-block matrices use the A-major flattening ``(A, i) -> A * n + i``
everywhere; the velocity Hessian ("BigHessian") is
``W[A*n + i, B*n + j] = d^2 L / dv^i_A dv^j_B``.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from . import exprlang, scalars
from .errors import IterationError, PreconditionError, RegularityError
from .fields import KVector, KVectorFieldPhase
from .geometry import (
    Dims,
    KVectorFieldQ,
    PhasePointH,
    PhasePointL,
    SectionGamma,
    _as_sample,
    closedness_defects,
    prolong,
)
from .hamiltonian import KernelTest

__all__ = [
    "LagrangianProblem",
    "CovectorL",
    "RegularityReport",
    "legendre",
    "regularity",
    "big_hessian",
    "energy",
    "legendre_inverse",
    "flat_L",
    "in_ker_flat_L",
    "build_lagrangian_kvf",
    "pullback_theta_L",
    "lagrangian_hj_residual",
    "lagrangian_relatedness_defect",
    "el_residual",
    "el_defects",
    "consistency_H_EL",
]

DEFAULT_TOL = 1e-9
PIVOT_RTOL = 1e-10
EL_INTERIOR = (slice(2, -2),)


@dataclass
class LagrangianProblem:
    dims: Dims
    L: object
    X: KVectorFieldQ = None

    def __post_init__(self):
        env = self.dims.env(exprlang.LAGRANGIAN)
        if isinstance(self.L, str):
            self.L = exprlang.parse(self.L, env)
        if isinstance(self.L, exprlang.Ast):
            extra = exprlang.free_vars(self.L) - set(env.names)
            if extra:
                raise ValueError(f"L uses unknown coordinates {sorted(extra)}")
        if self.X is not None and self.X.dims != self.dims:
            raise ValueError("k-vector field dimensions do not match the problem")

    @classmethod
    def from_strings(cls, n, k, L, X=None):
        dims = Dims(n, k)
        field = KVectorFieldQ.from_strings(dims, X) if X is not None else None
        return cls(dims, exprlang.parse(L, dims.env(exprlang.LAGRANGIAN)), field)


@dataclass
class CovectorL:
    """A covector on T^1_k Q: ``dq`` shape ``(n,)``, ``dv`` shape ``(n, k)``."""

    dq: np.ndarray
    dv: np.ndarray

    def norm_inf(self):
        return float(max(np.abs(self.dq).max(initial=0.0), np.abs(self.dv).max(initial=0.0)))


class RegularityReport(NamedTuple):
    min_pivot: float
    condition: float
    regular: bool


def _fn(L, dims):
    return exprlang.as_function(L, dims.env(exprlang.LAGRANGIAN))


def _dims_of(x):
    return Dims(len(x.q), x.v.shape[1])


def _derivatives(L, x):
    """Gradient and full Hessian of L at a phase point (flat coordinates)."""
    dims = _dims_of(x)
    d2 = scalars.second_order(_fn(L, dims), x.coords())
    return dims, d2.gradient, d2.hessian


def big_hessian(L, x):
    dims, _, hmat = _derivatives(L, x)
    n = dims.n
    return hmat[n:, n:]


def legendre(L, x):
    """FL(q, v) = (q, dL/dv): returns a :class:`PhasePointH`."""
    dims = _dims_of(x)
    g = scalars.grad(_fn(L, dims), x.coords())
    return PhasePointH(x.q, g[dims.n:].reshape(dims.k, dims.n))


def _pivots(w):
    if w.size == 0:
        return np.zeros(0)
    _, _, u = scipy.linalg.lu(w)
    return np.diag(u)


def _regularity_of(w):
    scale = np.linalg.norm(w, np.inf)
    piv = np.abs(_pivots(w))
    min_pivot = float(piv.min())
    regular = bool(scale > 0 and np.all(piv > PIVOT_RTOL * scale))
    cond = float(np.linalg.cond(w)) if regular else float("inf")
    return RegularityReport(min_pivot, cond, regular)


def regularity(L, x):
    """Maximal-rank test of the velocity Hessian at ``x`` via pivoted elimination."""
    return _regularity_of(big_hessian(L, x))


def _energy_generic(f, zs, n):
    value, partials = scalars.gradient_generic(f, zs)
    total = 0.0
    for j in range(n, len(zs)):
        total = total + zs[j] * partials[j]
    return total - value


def energy(L, x):
    """E_L = v^i_A dL/dv^i_A - L."""
    dims = _dims_of(x)
    return float(scalars._real(_energy_generic(_fn(L, dims), [float(c) for c in x.coords()], dims.n)))


def legendre_inverse(L, y, v_init=None, maxiter=50, tol=1e-12):
    """Solve dL/dv(q, v) = p for v by damped Newton iteration.

    The stopping test is ``|F|_inf < tol * max(1, |p|_inf)``.
    """
    n, k = len(y.q), y.p.shape[0]
    dims = Dims(n, k)
    f = _fn(L, dims)
    target = y.p.ravel()
    v = np.zeros(k * n) if v_init is None else np.asarray(v_init, dtype=float).T.ravel()
    bound = tol * max(1.0, float(np.abs(target).max(initial=0.0)))

    def residual(v):
        return scalars.grad(f, np.concatenate([y.q, v]))[n:] - target

    r = residual(v)
    norm = np.abs(r).max(initial=0.0)
    for _ in range(maxiter):
        if norm < bound:
            return PhasePointL(y.q, v.reshape(k, n).T)
        w = scalars.hess(f, np.concatenate([y.q, v]))[n:, n:]
        if not _regularity_of(w).regular:
            raise RegularityError(f"velocity Hessian is singular at v={v.tolist()}")
        step = np.linalg.solve(w, -r)
        scale = 1.0
        for _ in range(30):
            trial = v + scale * step
            r_trial = residual(trial)
            n_trial = np.abs(r_trial).max(initial=0.0)
            if n_trial < norm:
                break
            scale *= 0.5
        v, r, norm = trial, r_trial, n_trial
    if norm < bound:
        return PhasePointL(y.q, v.reshape(k, n).T)
    raise IterationError("Legendre inversion did not converge", float(norm))


def flat_L(Z, x, L):
    """sum_A i_{Z_A} omega_L^A in coordinates; ``Z`` uses the Lagrangian layout."""
    dims, _, hmat = _derivatives(L, x)
    n, k = dims.n, dims.k
    base = np.asarray(Z.base, dtype=float)
    fiber = np.asarray(Z.fiber, dtype=float)
    if base.shape != (k, n) or fiber.shape != (k, n, k):
        raise ValueError(f"k-vector shapes {base.shape}, {fiber.shape} do not match n={n}, k={k}")
    w4 = hmat[n:, n:].reshape(k, n, k, n)  # [A, i, B, j]
    m3 = hmat[n:, :n].reshape(k, n, n)  # [A, i, j] = d2L / dv^i_A dq^j
    antisym = np.einsum("aji,aj->i", m3, base) - np.einsum("aij,aj->i", m3, base)
    dq = antisym - np.einsum("aibj,ajb->i", w4, fiber)
    dv = np.einsum("aibj,ai->jb", w4, base)
    return CovectorL(dq, dv)


def in_ker_flat_L(Z, x, L, tol=DEFAULT_TOL):
    defect = flat_L(Z, x, L).norm_inf()
    return KernelTest(defect < tol, defect)


def build_lagrangian_kvf(L, dims, gauge="min_norm"):
    """A second-order k-vector field solving flat_L(Z) = dE_L.

    Base parts are Z^i_A = v^i_A.  The fibre parts satisfy n linear equations
    sum_{A,j,B} W[(A,i),(B,j)] (Z_A)^j_B = dL/dq^i - d2L/dq^j dv^i_A v^j_A;
    ``gauge="min_norm"`` takes the minimum-norm solution over all legs,
    ``gauge="first"`` the minimum-norm solution supported on leg A = 1.
    """
    if gauge not in ("min_norm", "first"):
        raise ValueError(f"unknown gauge {gauge!r}")
    n, k = dims.n, dims.k

    def base_fn(zs):
        return [[zs[n + a * n + i] for i in range(n)] for a in range(k)]

    def fiber_fn(zs):
        x = PhasePointL.from_coords(dims, [float(scalars._real(z)) for z in zs])
        _, g, hmat = _derivatives(L, x)
        w = hmat[n:, n:]
        if not _regularity_of(w).regular:
            raise RegularityError(f"velocity Hessian is singular at {x.coords().tolist()}")
        w4 = w.reshape(k, n, k, n)
        m3 = hmat[n:, :n].reshape(k, n, n)
        rhs = g[:n] - np.einsum("aij,ja->i", m3, x.v)
        system = np.transpose(w4, (1, 0, 3, 2)).reshape(n, k * n * k)  # [i, (A, j, B)]
        if gauge == "first":
            sol = np.zeros((k, n * k))
            sol[0] = np.linalg.lstsq(system[:, : n * k], rhs, rcond=None)[0]
        else:
            sol = np.linalg.lstsq(system, rhs, rcond=None)[0]
        return sol.reshape(k, n, k).tolist()

    return KVectorFieldPhase(dims, exprlang.LAGRANGIAN, base_fn, fiber_fn)


def pullback_theta_L(X, L):
    """The k one-forms X^* theta_L^A with components dL/dv^i_A(q, X(q))."""
    dims = X.dims
    n, k = dims.n, dims.k
    f = _fn(L, dims)

    def func(qs):
        zs = _lift(X, qs, n, k)
        _, partials = scalars.gradient_generic(f, zs)
        return [[partials[n + a * n + i] for i in range(n)] for a in range(k)]

    return SectionGamma(dims, func)


def _lift(X, qs, n, k):
    xs = X.components(qs)
    return list(qs) + [xs[i][a] for a in range(k) for i in range(n)]


def _require_lagrangian_closed(X, L, sample, tol):
    defects = closedness_defects(pullback_theta_L(X, L), sample)
    bad = np.nonzero(defects > tol)[0]
    if len(bad):
        a = int(bad[0])
        raise PreconditionError(
            f"X*omega_L^{a + 1} != 0: pulled-back form {a + 1} is not closed (defect {defects[a]:.3e})"
        )


def lagrangian_hj_residual(L, X, sample, tol=DEFAULT_TOL):
    """sup over the sample of |d(E_L o X)|_inf."""
    dims = X.dims
    n, k = dims.n, dims.k
    sample = _as_sample(sample, n)
    _require_lagrangian_closed(X, L, sample, tol)
    f = _fn(L, dims)
    d = scalars.grad(lambda qs: _energy_generic(f, _lift(X, qs, n, k), n), sample.T)
    return float(np.abs(d).max())


def lagrangian_relatedness_defect(Z, X, L, sample, tol=DEFAULT_TOL):
    """Kernel test for Z o X - T X(X) with respect to flat_L.

    The difference has fibre part (Y_A)^j_B = (Z_A)^j_B o X - X^i_A dX^j_B/dq^i;
    the returned defect is the sup of |flat_L(Y)|_inf over the sample.
    """
    dims = X.dims
    n, k = dims.n, dims.k
    sample = _as_sample(sample, n)
    _require_lagrangian_closed(X, L, sample, tol)
    worst = 0.0
    for q in sample:
        xq = X(q)  # (n, k)
        jac = X.jacobian(q)  # [j, B, i]
        x = PhasePointL(q, xq)
        zval = Z(x)
        y = zval.fiber - np.einsum("ia,jbi->ajb", xq, jac)
        worst = max(worst, flat_L(KVector(np.zeros((k, n)), y), x, L).norm_inf())
    return KernelTest(worst < tol, worst)


def el_defects(g, L):
    """Per-node defect of the Euler-Lagrange equations.

    The divergence differentiates the prolongation a second time, so the
    defect is reported on nodes at least two steps from the boundary, where
    both stencils are central and the error is O(h^2).
    """
    k, n = g.k, g.n
    dims = Dims(n, k)
    v = prolong(g)  # (*nodes, n, k)
    z = np.concatenate([g.q_batch(), np.moveaxis(v, (-1, -2), (0, 1)).reshape((k * n,) + g.nodes)])
    dl = scalars.grad(_fn(L, dims), z)
    p = dl[n:].reshape((k, n) + g.nodes)
    div = sum(np.gradient(p[a], g.spacing[a], axis=1 + a, edge_order=2) for a in range(k))
    return np.abs(div - dl[:n]).max(axis=0)[EL_INTERIOR * k]


def el_residual(g, L):
    """Sup-norm defect of sum_A d/dt^A(dL/dv^i_A) = dL/dq^i on the prolonged grid."""
    if any(m < 5 for m in g.nodes):
        raise ValueError(f"need at least 5 nodes per axis, got {g.nodes}")
    return float(el_defects(g, L).max())


def consistency_H_EL(L, H, sample):
    """sup |H(FL(x)) - E_L(x)| over a sample of :class:`PhasePointL` (or coordinate rows)."""
    points = list(sample)
    if not points:
        raise ValueError("sample must be nonempty")
    worst = 0.0
    for x in points:
        if not isinstance(x, PhasePointL):
            raise TypeError("sample entries must be PhasePointL")
        if not regularity(L, x).regular:
            raise RegularityError(f"Lagrangian is singular at {x.coords().tolist()}")
        y = legendre(L, x)
        h = exprlang.as_function(H, y.dims.env())(list(y.coords()))
        worst = max(worst, abs(float(h) - energy(L, x)))
    return worst
