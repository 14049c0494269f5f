"""Penalized backward doubly stochastic differential equations driven by Teugels
martingales, with the Markovian representation of multivalued stochastic
integro-differential equations."""

from .bdsde import BdsdeProblem, BdsdeSolution, SolverConfig, check_apriori, solve_limit, solve_penalized
from .convex import ConvexFunction, resolvent, subdiff, yosida_grad, yosida_value
from .levy_model import LevyModel, PathBundle, TimeGrid, simulate_paths
from .mspdie import MspdieProblem, estimate_u, flow_eps, flow_eta, generator_apply, phi1_k
from .teugels import TeugelsBasis, h_increments, orthonormalize

__all__ = [
    "BdsdeProblem",
    "BdsdeSolution",
    "ConvexFunction",
    "LevyModel",
    "MspdieProblem",
    "PathBundle",
    "SolverConfig",
    "TeugelsBasis",
    "TimeGrid",
    "check_apriori",
    "estimate_u",
    "flow_eps",
    "flow_eta",
    "generator_apply",
    "h_increments",
    "orthonormalize",
    "phi1_k",
    "resolvent",
    "simulate_paths",
    "solve_limit",
    "solve_penalized",
    "subdiff",
    "yosida_grad",
    "yosida_value",
]
