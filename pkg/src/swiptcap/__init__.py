"""Capacity of the complex AWGN channel under power-transfer constraints.

Discrete-input search with KKT certification for peak-limited inputs,
closed forms for the peak-unconstrained case, and a Monte-Carlo oracle.
"""

__version__ = "0.1.0"

from .channel import DiscreteAmplitudeDistribution, MixtureDistribution, mutual_information
from .constraints import EvenPolynomial, InfeasibleProblemError, OopProblem, RdpProblem
from .solver import Solution, SolverConfig, solve

__all__ = [
    "DiscreteAmplitudeDistribution",
    "EvenPolynomial",
    "InfeasibleProblemError",
    "MixtureDistribution",
    "OopProblem",
    "RdpProblem",
    "Solution",
    "SolverConfig",
    "mutual_information",
    "solve",
]
