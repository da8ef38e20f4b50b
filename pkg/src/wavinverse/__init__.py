"""Taylor and Chebyshev wavelet collocation for recovering a field and its
source control parameter in a 1D parabolic inverse problem."""

from .basis import BasisIndex, BasisSpec, WaveletFamily, collocation_points, expand
from .problem import ExactReference, InverseProblem, example_one, example_two
from .solver import LinearMethod, SolveOutput, SolverConfig, run

__all__ = [
    "BasisIndex",
    "BasisSpec",
    "WaveletFamily",
    "collocation_points",
    "expand",
    "ExactReference",
    "InverseProblem",
    "example_one",
    "example_two",
    "LinearMethod",
    "SolveOutput",
    "SolverConfig",
    "run",
]
