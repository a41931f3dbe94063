"""Integral sections of k-vector fields on Q: the characteristics step.

An integral section psi of X satisfies d psi / dt^A = X_A(psi) for every A.
It is built by sweeping the lattice axis by axis with classical RK4: first
along t^1 from ``q0``, then along t^2 from every node of that line, and so on.
For a commuting (integrable) field the sweep order does not matter, which
:func:`path_independence_defect` checks.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, IntegrabilityError
from .geometry import GridSolution, PhaseGrid, _as_sample, sample_box

__all__ = [
    "GridSpec",
    "commutator_defect",
    "solve_characteristics",
    "path_independence_defect",
    "compose_solution",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9


@dataclass
class GridSpec:
    t_min: np.ndarray
    t_max: np.ndarray
    steps: np.ndarray
    q0: np.ndarray

    def __post_init__(self):
        self.t_min = np.atleast_1d(np.asarray(self.t_min, dtype=float))
        self.t_max = np.atleast_1d(np.asarray(self.t_max, dtype=float))
        self.steps = np.atleast_1d(np.asarray(self.steps, dtype=int))
        self.q0 = np.atleast_1d(np.asarray(self.q0, dtype=float))
        if not (self.t_min.shape == self.t_max.shape == self.steps.shape):
            raise ValueError("t_min, t_max and steps must all have length k")
        if np.any(self.t_max <= self.t_min):
            raise ValueError("t_max must exceed t_min componentwise")
        if np.any(self.steps < 2):
            raise ValueError("need at least 2 steps per axis")

    @property
    def k(self):
        return len(self.steps)

    @property
    def spacing(self):
        return (self.t_max - self.t_min) / self.steps


def commutator_defect(X, sample):
    """sup over sample, A < B, i of |[X_A, X_B]^i| with [X_A, X_B]^i = X^j_A dX^i_B/dq^j - X^j_B dX^i_A/dq^j."""
    n, k = X.dims.n, X.dims.k
    if k == 1:
        return 0.0
    q = _as_sample(sample, n).T
    vals = X(q)  # (n, k, m)
    jac = X.jacobian(q)  # (n, k, n, m): [i, A, j]
    worst = 0.0
    for a in range(k):
        for b in range(a + 1, k):
            bracket = np.einsum("jm,ijm->im", vals[:, a], jac[:, b]) - np.einsum("jm,ijm->im", vals[:, b], jac[:, a])
            worst = max(worst, float(np.abs(bracket).max()))
    return worst


def _rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _sweep(X, spec, order):
    n, k = X.dims.n, spec.k
    nodes = tuple(int(s) + 1 for s in spec.steps)
    h = spec.spacing
    values = np.full(nodes + (n,), np.nan)
    values[(0,) * k] = spec.q0
    done = []
    for a in order:
        # all nodes reached so far sit at index 0 on the axes not yet swept
        sel = tuple(slice(None) if b in done else 0 for b in range(k))
        field = X.column(a)
        for s in range(nodes[a] - 1):
            here = tuple(s if b == a else sel[b] for b in range(k))
            there = tuple(s + 1 if b == a else sel[b] for b in range(k))
            state = np.moveaxis(values[here], -1, 0)
            nxt = _rk4_step(field, state, h[a])
            if not np.all(np.isfinite(nxt)):
                bad = np.argwhere(~np.isfinite(nxt).all(axis=0))
                node = [there[b] if not isinstance(there[b], slice) else None for b in range(k)]
                if bad.size:
                    free = [b for b in range(k) if isinstance(there[b], slice)]
                    for b, idx in zip(free, bad[0]):
                        node[b] = int(idx)
                t = [float(spec.t_min[b] + h[b] * node[b]) for b in range(k)]
                raise BlowUpError("non-finite state during integration", node={"index": node, "t": t})
            values[there] = np.moveaxis(nxt, 0, -1)
        done.append(a)
    return GridSolution(spec.t_min, spec.t_max, spec.steps, values)


def _check_integrable(X, spec, tol, override):
    if X.dims.k == 1:
        return 0.0
    sample = spec.q0 + sample_box(-1.0, 1.0, X.dims.n, points=5)
    defect = commutator_defect(X, sample)
    if defect > tol:
        if not override:
            raise IntegrabilityError(
                f"k-vector field is not integrable near q0: commutator defect {defect:.3e} > {tol:g}"
            )
        log.warning("integrability check failed (defect %.3e); proceeding on request", defect)
    return defect


def solve_characteristics(X, spec, tol=DEFAULT_TOL, override_integrability=False, order=None):
    """Integral section of ``X`` through ``spec.q0`` on the lattice of ``spec``.

    Before integrating, the commutators of X are sampled on the box
    ``q0 + [-1, 1]^n``; a defect above ``tol`` raises
    :class:`IntegrabilityError` unless ``override_integrability`` is set.
    """
    if len(spec.q0) != X.dims.n or spec.k != X.dims.k:
        raise ValueError("grid spec does not match the field dimensions")
    _check_integrable(X, spec, tol, override_integrability)
    return _sweep(X, spec, list(range(spec.k)) if order is None else list(order))


def path_independence_defect(X, spec, tol=DEFAULT_TOL, override_integrability=True):
    """sup node-wise difference between the t^1-first and t^k-first sweeps."""
    if spec.k == 1:
        return 0.0
    forward = solve_characteristics(X, spec, tol, override_integrability)
    backward = solve_characteristics(X, spec, tol, override_integrability, order=range(spec.k - 1, -1, -1))
    return float(np.abs(forward.values - backward.values).max())


def compose_solution(gamma, g):
    """The phase lattice t -> (psi(t), gamma(psi(t)))."""
    if gamma.dims.n != g.n or gamma.dims.k != g.k:
        raise ValueError("section and grid dimensions differ")
    p = np.moveaxis(gamma(g.q_batch()), (0, 1), (-2, -1))
    return PhaseGrid(g.t_min, g.t_max, g.steps, g.values, p)
