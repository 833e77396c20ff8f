"""Hybrid atom-optomechanics simulator: master equation, trajectories, 0-1 chaos test."""

from .operators import OperatorSet, ParameterError, SystemParams, build_operators, hamiltonian
from .dynamics import (
    DivergenceError,
    HybridState,
    ObservableSeries,
    classical_force,
    evolve,
    lindblad_rhs,
    observables,
    step_hybrid,
)

__version__ = "0.1.0"

__all__ = [
    "OperatorSet",
    "ParameterError",
    "SystemParams",
    "build_operators",
    "hamiltonian",
    "DivergenceError",
    "HybridState",
    "ObservableSeries",
    "classical_force",
    "evolve",
    "lindblad_rhs",
    "observables",
    "step_hybrid",
]
