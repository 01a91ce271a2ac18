"""Maximal flows and minimal cutsets from a convex body to infinity in
first passage percolation on Z^d."""

__version__ = "0.1.0"

from .environment import CapacityLaw, Environment, LatticeRegion, sample_environment  # noqa: E402
from .functionals import (  # noqa: E402
    glued_upper_bound,
    phi_cylinder,
    phi_to_infinity,
    tau_cylinder,
)
from .maxflow import FlowProblem, brute_force_min_cut, max_flow, min_cut  # noqa: E402

__all__ = [
    "CapacityLaw", "Environment", "FlowProblem", "LatticeRegion", "brute_force_min_cut",
    "glued_upper_bound", "max_flow", "min_cut", "phi_cylinder", "phi_to_infinity",
    "sample_environment", "tau_cylinder",
]
