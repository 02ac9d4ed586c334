"""Multifrontal sparse LU with task-tree parallelism scheduled by tabular Q-learning."""

from .kernels import BACKEND
from .numeric import SingularMatrixError, parallel_factor, refactor_same_pattern, solve
from .sparse import CscMatrix, from_coo, load_matrix_market, residual_norm, save_matrix_market
from .symbolic import analyze

__all__ = ["BACKEND", "CscMatrix", "SingularMatrixError", "analyze", "from_coo",
           "load_matrix_market", "parallel_factor", "refactor_same_pattern", "residual_norm",
           "save_matrix_market", "solve"]
__version__ = "0.1.0"
