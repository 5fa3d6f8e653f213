"""Crouzeix-Raviart type nonconforming finite elements of arbitrary degree in 2D."""
from .analysis import StudyConfig, StudyResult, run_study
from .femspace import FeSpace, build_space
from .mesh import TriMesh, lshape_graded, uniform_refine, unit_square

__all__ = ["FeSpace", "StudyConfig", "StudyResult", "TriMesh", "build_space", "lshape_graded",
           "run_study", "uniform_refine", "unit_square"]
__version__ = "0.1.0"
