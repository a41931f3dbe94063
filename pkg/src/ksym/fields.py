"""k-vector fields on the phase spaces T^1_k Q and (T^1_k)^* Q."""

from dataclasses import dataclass

import numpy as np

from . import exprlang

__all__ = ["KVector", "KVectorFieldPhase"]


@dataclass
class KVector:
    """A k-vector Z = (Z_1, ..., Z_k) at a single phase point.

    ``base[A, i] = Z^i_A``.  The fibre block depends on the side:

    * Hamiltonian: ``fiber[A, B, i] = (Z_A)^B_i`` (component along d/dp^B_i);
    * Lagrangian:  ``fiber[A, j, B] = (Z_A)^j_B`` (component along d/dv^j_B).
    """

    base: np.ndarray
    fiber: np.ndarray

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        self.fiber = np.asarray(self.fiber, dtype=float)

    @classmethod
    def zeros(cls, n, k):
        return cls(np.zeros((k, n)), np.zeros((k, k, n)))


class KVectorFieldPhase:
    """A k-vector field on a phase space, given by two coordinate functions.

    ``base_fn(zs)`` returns nested lists ``[A][i]`` and ``fiber_fn(zs)`` the
    fibre block in the layout documented on :class:`KVector`; ``zs`` is the
    flat coordinate list of a :class:`~ksym.exprlang.CoordEnv`.  When the
    functions are written against generic scalars they accept duals and
    arrays as well as floats.
    """

    def __init__(self, dims, side, base_fn, fiber_fn):
        self.dims = dims
        self.side = side
        self.base_fn = base_fn
        self.fiber_fn = fiber_fn

    @property
    def env(self):
        return self.dims.env(self.side)

    def __call__(self, x):
        zs = [float(c) for c in x.coords()]
        return KVector(np.array(self.base_fn(zs), dtype=float), np.array(self.fiber_fn(zs), dtype=float))

    def batch(self, z):
        """Evaluate on coordinates ``z`` of shape ``(d, ...)``; returns (base, fiber) arrays."""
        z = np.asarray(z, dtype=float)
        zs = list(z)
        shape = z.shape[1:]

        def stack(nested):
            if isinstance(nested, (list, tuple)):
                return np.array([stack(e) for e in nested])
            return np.broadcast_to(np.asarray(nested, dtype=float), shape)

        return stack(self.base_fn(zs)), stack(self.fiber_fn(zs))


def is_hamiltonian(side):
    return side == exprlang.HAMILTONIAN
