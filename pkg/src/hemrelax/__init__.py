"""Finite-volume experiments for a stiff relaxation model of homogeneous two-phase flow."""

from .eos import DEFAULT_EOS, AffineClampMap, ConservedState, EosModel, LogisticMap, PrimitiveState
from .relax_solver import Grid1D, SolutionField, SolverConfig

__version__ = "0.1.0"

__all__ = ["DEFAULT_EOS", "AffineClampMap", "ConservedState", "EosModel", "LogisticMap", "PrimitiveState",
           "Grid1D", "SolutionField", "SolverConfig", "__version__"]
