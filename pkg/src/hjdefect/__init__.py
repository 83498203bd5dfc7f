"""Numerical laboratory for Hamilton-Jacobi homogenization with a localized defect.

Effective Hamiltonians from periodic cell problems, the ergodic constant of the
defect from state-constrained truncated problems, correctors, the homogenized
Dirichlet limit, and randomized defect lattices, all validated against the
closed-form one-dimensional solutions.
"""

from hjdefect.correctors import check_growth, corrector_piecewise, corrector_w, find_ptilde
from hjdefect.defect_ergodic import ergodic_constant, ergodic_constant_truncated
from hjdefect.effective_ham import effective_hamiltonian_at, tabulate
from hjdefect.experiments import convergence_study, get_preset, pipeline_report
from hjdefect.hj_core import (
    ConvergenceError,
    Grid,
    GridField,
    ball_grid,
    box_grid,
    solve_discounted_constrained,
    solve_discounted_periodic,
    solve_eps_problem,
    torus_grid,
)
from hjdefect.homogenized import solve_homogenized
from hjdefect.random_defects import (
    direct_random_solve,
    limit_law_mc,
    regime_summary,
    sample_lattice,
    u_random_min,
    verify_separation_2d,
)
from hjdefect.scalar_fields import (
    ControlSet,
    DefectCost,
    HamiltonianSpec,
    Kinetic,
    PeriodicCost,
    eval_hamiltonian,
    legendre_cost,
    shift_hamiltonian,
)

__all__ = [
    "ControlSet",
    "ConvergenceError",
    "DefectCost",
    "Grid",
    "GridField",
    "HamiltonianSpec",
    "Kinetic",
    "PeriodicCost",
    "ball_grid",
    "box_grid",
    "check_growth",
    "convergence_study",
    "corrector_piecewise",
    "corrector_w",
    "direct_random_solve",
    "effective_hamiltonian_at",
    "ergodic_constant",
    "ergodic_constant_truncated",
    "eval_hamiltonian",
    "find_ptilde",
    "get_preset",
    "legendre_cost",
    "limit_law_mc",
    "pipeline_report",
    "regime_summary",
    "sample_lattice",
    "shift_hamiltonian",
    "solve_discounted_constrained",
    "solve_discounted_periodic",
    "solve_eps_problem",
    "solve_homogenized",
    "tabulate",
    "torus_grid",
    "u_random_min",
    "verify_separation_2d",
]

__version__ = "0.1.0"
