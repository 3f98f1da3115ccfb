"""Distributed anytime MAP inference for discrete pairwise MRFs.

The edge-variable LP relaxation is solved either directly with the bundled
simplex solver or through Dantzig-Wolfe column generation, where each edge is
an independent pricing subprogram that may run on a remote worker.
"""

from dwmap.model import (
    Graph,
    GraphError,
    combined_edge_cost,
    degree_check,
    edge_costs,
    map_objective,
    split_isolated,
)
from dwmap.sideconstraints import InjectiveConstraint, LinearConstraint
from dwmap.decomposition import DWConfig, solve_dw
from dwmap.solve import SolveResult, solve

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "GraphError",
    "combined_edge_cost",
    "degree_check",
    "edge_costs",
    "map_objective",
    "split_isolated",
    "InjectiveConstraint",
    "LinearConstraint",
    "DWConfig",
    "solve_dw",
    "SolveResult",
    "solve",
]
