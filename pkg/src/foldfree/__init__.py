"""Foldover-free maps of 2D triangle/quad meshes and 3D tetrahedral meshes.

Minimizes a regularized polyconvex distortion energy with a penalty
continuation loop; both quasi-Newton (L-BFGS-B) and modified-Hessian Newton
inner solvers are available.
"""

from .energy import EnergyParams, chi, chi_prime, element_energy, gradient, total_energy
from .fixtures import generate_fixture
from .hessian import assemble_H_plus, corner_M_indefinite, corner_M_plus
from .medit import load_problem, read_mesh, write_mesh
from .mesh import CornerSimplex, Instance, MapState, MeshPair, build_instance, compute_jacobian
from .quality import QualityReport, report, singular_ratio
from .solver import (
    IterationTrace,
    SolverConfig,
    UntangleResult,
    min_det,
    sigma_k,
    untangle,
    update_epsilon_heuristic,
    update_epsilon_theory,
)

__all__ = [
    "CornerSimplex",
    "EnergyParams",
    "Instance",
    "IterationTrace",
    "MapState",
    "MeshPair",
    "QualityReport",
    "SolverConfig",
    "UntangleResult",
    "assemble_H_plus",
    "build_instance",
    "chi",
    "chi_prime",
    "compute_jacobian",
    "corner_M_indefinite",
    "corner_M_plus",
    "element_energy",
    "generate_fixture",
    "gradient",
    "load_problem",
    "min_det",
    "read_mesh",
    "report",
    "sigma_k",
    "singular_ratio",
    "total_energy",
    "untangle",
    "update_epsilon_heuristic",
    "update_epsilon_theory",
    "write_mesh",
]

__version__ = "0.1.0"
