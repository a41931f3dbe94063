"""Hamilton-Jacobi tools for first-order field theories in k-symplectic form."""

from .errors import (
    BlowUpError,
    DomainError,
    IntegrabilityError,
    IterationError,
    KsymError,
    ParseError,
    PreconditionError,
    RegularityError,
    SchemaError,
)
from .geometry import Dims, GridSolution, KVectorFieldQ, PhaseGrid, PhasePointH, PhasePointL, SectionGamma, sample_box
from .hamiltonian import HamiltonianProblem, build_hamiltonian_kvf, flat, hamilton_residual, hj_residual, project_gamma
from .integrate import GridSpec, commutator_defect, compose_solution, path_independence_defect, solve_characteristics
from .lagrangian import LagrangianProblem, build_lagrangian_kvf, el_residual, flat_L, legendre, legendre_inverse
from .catalog import catalog_problem
from .problemfile import load_problem, parse_problem

__version__ = "0.1.0"
