"""Vibrating string: from a section satisfying the HJ condition to a field solution.

    python demos/vibrating_string.py
"""

import numpy as np

from ksym.catalog import vibrating_string
from ksym.geometry import sample_box
from ksym.hamiltonian import build_hamiltonian_kvf, hamilton_residual, hj_residual, project_gamma
from ksym.integrate import commutator_defect, compose_solution, solve_characteristics

## Problem: sigma = 4, tau = 1, gamma = (2q, q)
pf = vibrating_string()
prob = pf.build()
sample = sample_box(-1, 1, 1)
print("d(H o gamma) on [-1, 1]:", hj_residual(prob.H, prob.gamma, sample))

## Project the Hamiltonian 2-vector field along gamma
Z = build_hamiltonian_kvf(prob.H, prob.dims)
X = project_gamma(Z, prob.gamma)
print("X(q=1) =", X(np.array([[1.0]]))[:, :, 0].ravel(), "  commutator:", commutator_defect(X, sample))

## Integral section through q0 = 1
grid = solve_characteristics(X, pf.grid)
t = grid.times()
exact = np.exp(0.5 * t[..., 0] - t[..., 1])
print("max relative error vs exp(t1/2 - t2):", np.abs(grid.values[..., 0] / exact - 1).max())

## gamma o psi solves the field equations
phase = compose_solution(prob.gamma, grid)
print("Hamilton residual on the 101 x 101 lattice:", hamilton_residual(phase, prob.H))

## A detuned section fails the same test
bad = vibrating_string(b=1.1).build()
print("detuned b = 1.1, d(H o gamma):", hj_residual(bad.H, bad.gamma, sample))
