"""The same string seen through its Lagrangian.

The Legendre map takes the velocity field X = (q/2, -q) to the section
gamma = (2q, q); both pipelines produce the same lattice.

    python demos/lagrangian_side.py
"""

import numpy as np

from ksym.catalog import string_lagrangian, vibrating_string
from ksym.geometry import PhasePointL, sample_box
from ksym.hamiltonian import build_hamiltonian_kvf, project_gamma
from ksym.integrate import solve_characteristics
from ksym.lagrangian import consistency_H_EL, el_residual, lagrangian_hj_residual, legendre, pullback_theta_L

pf = string_lagrangian()
prob = pf.build()
ham = vibrating_string().build()

x = PhasePointL([0.7], [[3.0, 5.0]])
print("FL(q=0.7, v=(3, 5)) -> p =", legendre(prob.L, x).p.ravel())

q = np.linspace(-1, 1, 5)[None, :]
print("pullback of theta_L by X:", pullback_theta_L(prob.X, prob.L)(q)[:, 0, :].round(3).tolist())
print("d(E_L o X):", lagrangian_hj_residual(prob.L, prob.X, sample_box(-1, 1, 1)))

rng = np.random.default_rng(0)
pts = [PhasePointL(rng.normal(size=1), rng.normal(size=(1, 2))) for _ in range(100)]
print("sup |H o FL - E_L|:", consistency_H_EL(prob.L, ham.H, pts))

g_lag = solve_characteristics(prob.X, pf.grid)
g_ham = solve_characteristics(project_gamma(build_hamiltonian_kvf(ham.H, ham.dims), ham.gamma), pf.grid)
print("Euler-Lagrange residual:", el_residual(g_lag, prob.L))
print("max |psi_L - psi_H|:", np.abs(g_lag.values - g_ham.values).max())
