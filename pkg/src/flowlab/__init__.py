"""Numerical laboratory for heat flow and entropy gradient flow on non-convex
planar domains: masked grids, convexity-defining potentials, conformal metric
transforms, EVI descent flows, Neumann heat semigroups, and Wasserstein
machinery (exact LP, Sinkhorn, JKO stepping)."""

from . import (  # noqa: F401
    conformal_metric,
    entropy_transport,
    errors,
    evi_flow,
    experiment_cli,
    grid_space,
    neumann_heat,
    potentials,
)

__version__ = "0.1.0"
