"""Step-reinforced random walks: exact moments, simulation and limit-theorem checks."""

__version__ = "0.1.0"

from .engine import WalkPath, simulate_reinforced_path
from .numerics import a_seq, exact_second_moment, v_exact
from .steps import RandomStream, StepDistribution, make_distribution

__all__ = [
    "RandomStream",
    "StepDistribution",
    "WalkPath",
    "__version__",
    "a_seq",
    "exact_second_moment",
    "make_distribution",
    "simulate_reinforced_path",
    "v_exact",
]
