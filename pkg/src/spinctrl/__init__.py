"""Bounded optimal control of two Ising-coupled spins for fast entanglement generation."""
from .dynamics import (
    BELL,
    SPIN_DOWN,
    Metric,
    PiecewiseControl,
    SimConfig,
    Trajectory,
    bell_fidelity,
    concurrence,
    density_matrix,
    hamiltonian_at,
    populations,
    propagate,
    simplex_coords,
    singlet_decoupling_check,
    step,
)
from .controls import TrigControlParams, bound_violation, sample, trig_eval
from .objectives import ObjectiveSpec, OptimResult, TrigObjective, evaluate

__version__ = "0.1.0"

__all__ = [
    "BELL", "SPIN_DOWN", "Metric", "PiecewiseControl", "SimConfig", "Trajectory", "bell_fidelity",
    "concurrence", "density_matrix", "hamiltonian_at", "populations", "propagate", "simplex_coords",
    "singlet_decoupling_check", "step", "TrigControlParams", "bound_violation", "sample", "trig_eval",
    "ObjectiveSpec", "OptimResult", "TrigObjective", "evaluate",
]
