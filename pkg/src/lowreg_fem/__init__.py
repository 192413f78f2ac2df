"""Lowest-order Nedelec / Raviart-Thomas interpolation on simplicial meshes.

Averaging quasi-interpolation with localized fractional-seminorm error
bounds, singular double-integral quadrature, and a curl-curl solver with
strong or Nitsche boundary conditions.
"""
from .errors import (
    DegenerateCellError,
    IndefiniteSystemError,
    LowRegError,
    SingularTrace,
    SolverError,
)
from .fields import AnalyticField, get_field, list_fields
from .interpolation import (
    NEDELEC,
    RT,
    BrokenFEFunction,
    FEFunction,
    average_dofs,
    best_approximation_l2,
    broken_project,
    canonical_interpolate,
    quasi_interpolate,
)
from .kernels import BACKEND
from .mesh import SimplicialMesh, build_mesh, edge_patch, face_patch, uniform_refine
from .study import StudyConfig, StudyReport, compute_eoc, run_study

__version__ = "0.1.0"

__all__ = [
    "AnalyticField", "BACKEND", "BrokenFEFunction", "DegenerateCellError", "FEFunction",
    "IndefiniteSystemError", "LowRegError", "NEDELEC", "RT", "SimplicialMesh", "SingularTrace",
    "SolverError", "StudyConfig", "StudyReport", "average_dofs", "best_approximation_l2",
    "broken_project", "build_mesh", "canonical_interpolate", "compute_eoc", "edge_patch",
    "face_patch", "get_field", "list_fields", "quasi_interpolate", "run_study", "uniform_refine",
]
