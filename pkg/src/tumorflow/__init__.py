"""Simulator and property checks for a density-driven growth model with a screened-Poisson potential.

The density ``n`` obeys ``dn/dt - div(n grad W) = alpha n - beta n^(1 + gamma theta)``
while the potential solves ``-mu Lap W + W = a n^gamma``, both with Neumann walls
on a rectangle.
"""

from .config import ConfigError, SimConfig, parse_config, serialize_config
from .core import GridSpec, ScalarField, VectorField
from .elliptic import SolverError, solve_brinkman, solve_potential
from .kinetics import Params, compute_eta, compute_n_star
from .simulator import RunRecord, run

__all__ = [
    "ConfigError",
    "GridSpec",
    "Params",
    "RunRecord",
    "ScalarField",
    "SimConfig",
    "SolverError",
    "VectorField",
    "compute_eta",
    "compute_n_star",
    "parse_config",
    "run",
    "serialize_config",
    "solve_brinkman",
    "solve_potential",
]

__version__ = "0.1.0"
