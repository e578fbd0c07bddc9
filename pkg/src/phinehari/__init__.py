"""Nehari-manifold computations for Phi-Laplacian problems with critical growth."""
__version__ = "0.1.0"

from .constants import ConstantsReport, build_report, estimate_S
from .fibering import FiberingProfile, classify, find_peak, nehari_roots
from .functional import ProblemData, energy, residual
from .mesh import Mesh, ScalarField, gradient, load_field, luxemburg_norm, save_field
from .orlicz import PhiSpec, check_hypotheses, extract_exponents
from .solver import SolveResult, minimize_branch, project_to_branch

__all__ = [
    "ConstantsReport", "FiberingProfile", "Mesh", "PhiSpec", "ProblemData", "ScalarField",
    "SolveResult", "build_report", "check_hypotheses", "classify", "energy", "estimate_S",
    "extract_exponents", "find_peak", "gradient", "load_field", "luxemburg_norm",
    "minimize_branch", "nehari_roots", "project_to_branch", "residual", "save_field",
]
