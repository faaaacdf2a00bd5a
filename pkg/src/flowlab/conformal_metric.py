"""Conformal convexification of the grid metric and curvature arithmetic.

The transform replaces edge lengths by their integral against a positive
factor phi = exp(-kp * V), which penalizes travel through {V > 0} when
kp < 0 and leaves the region {V = 0} untouched. Containment checks verify
that transformed geodesics between region points no longer shortcut through
the complement; sandwich checks verify the uniform equivalence of the
approximating factors with the restricted metric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimension
from .grid_space import AMBIENT, graph_distance, trace_geodesic
from .potentials import Potential, v_epsilon


@dataclass
class MetricField:
    """Per-node positive conformal factor and the exponent that produced it."""

    phi: np.ndarray
    kappa_prime: float
    source_potential: Potential | None = None
    k_bound: int | None = None

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if np.any(self.phi <= 0):
            raise ValueError("conformal factor must be strictly positive")


@dataclass
class ContainmentReport:
    passed: bool
    fractions: np.ndarray
    pairs: list
    tol_cells: int
    excursion_nodes: int

    def to_json(self):
        return json.dumps(
            {"pass": self.passed,
             "fractions": [float(f) for f in self.fractions],
             "pairs": [list(map(int, p)) for p in self.pairs],
             "tol_cells": self.tol_cells,
             "excursion_nodes": self.excursion_nodes},
            sort_keys=True)


@dataclass
class SandwichReport:
    passed: bool
    worst_lower_slack: float
    worst_upper_slack: float
    n_pairs: int
    k: int

    def to_json(self):
        return json.dumps(
            {"pass": self.passed, "worst_lower_slack": self.worst_lower_slack,
             "worst_upper_slack": self.worst_upper_slack,
             "n_pairs": self.n_pairs, "k": self.k}, sort_keys=True)


def conformal_factor(potential, kappa_prime):
    """Pointwise factor exp(-kp * V); the identity field when kp = 0."""
    phi = np.exp(-float(kappa_prime) * potential.values)
    return MetricField(phi=phi, kappa_prime=float(kappa_prime),
                       source_potential=potential)


def phi_sequence(domain, potential, kappa, k):
    """k-th approximating factor exp(-2 kappa V_eps) with eps chosen so the
    factor sits in [k/(k+1), 1] on every Y node.

    For kappa < 0 the largest admissible shift is log(1 + 1/k) / (-2 kappa);
    for kappa = 0 the factor is identically one.
    """
    if kappa > 0:
        raise ValueError("kappa must be nonpositive")
    k = int(k)
    if k < 1:
        raise ValueError("k must be a positive integer")
    if kappa == 0:
        eps = 1.0 / (k + 1)
        reg = v_epsilon(domain, potential, eps)
        return MetricField(phi=np.ones(domain.n_nodes), kappa_prime=0.0,
                           source_potential=reg, k_bound=k)
    eps = np.log1p(1.0 / k) / (-2.0 * kappa)
    reg = v_epsilon(domain, potential, eps)
    phi = np.exp(-2.0 * kappa * reg.values)
    lo = k / (k + 1)
    on_y = domain.is_y
    assert phi[on_y].min() >= lo - 1e-12 and phi[on_y].max() <= 1 + 1e-12
    return MetricField(phi=phi, kappa_prime=2.0 * kappa,
                       source_potential=reg, k_bound=k)


def containment_check(domain, field, pairs, tol_cells=1):
    """Trace the transformed geodesic of each pair on the unrestricted graph
    and count traced nodes lying outside Y beyond tol_cells king-move hops
    from the nearest Y node. Passes iff every pair has zero such excursions.
    """
    hops = domain.hops_to_Y()
    fractions = []
    total_excursions = 0
    for a, b in pairs:
        path = trace_geodesic(domain, field, int(a), int(b), restrict_to_Y=False)
        outside = domain.mask[path.nodes] == AMBIENT
        deep = outside & (hops[path.nodes] > tol_cells)
        n_exc = int(deep.sum())
        total_excursions += n_exc
        fractions.append(n_exc / len(path))
    fractions = np.asarray(fractions)
    return ContainmentReport(passed=bool(np.all(fractions == 0)),
                             fractions=fractions,
                             pairs=[tuple(map(int, p)) for p in pairs],
                             tol_cells=int(tol_cells),
                             excursion_nodes=total_excursions)


def sandwich_check(domain, field_k, pairs=None, n_pairs=40, rng=None):
    """Verify k/(k+1) d_Y <= d_k <= d_Y over sampled Y pairs.

    d_k uses the Y-restricted graph under field_k; d_Y the same graph with the
    unit factor. Slacks are reported as the worst signed violations (negative
    values mean a violated inequality).
    """
    if field_k.k_bound is None:
        raise ValueError("field_k must come from phi_sequence (k_bound set)")
    k = field_k.k_bound
    lo = k / (k + 1)
    rng = np.random.default_rng(rng)
    ys = domain.y_nodes
    if pairs is None:
        pairs = [tuple(rng.choice(ys, size=2, replace=False))
                 for _ in range(n_pairs)]
    worst_lower = np.inf
    worst_upper = np.inf
    by_source = {}
    for a, b in pairs:
        by_source.setdefault(int(a), []).append(int(b))
    for a, targets in by_source.items():
        d_y = graph_distance(domain, None, a, restrict_to_Y=True)
        d_k = graph_distance(domain, field_k, a, restrict_to_Y=True)
        for b in targets:
            worst_lower = min(worst_lower, d_k[b] - lo * d_y[b])
            worst_upper = min(worst_upper, d_y[b] - d_k[b])
    tol = 1e-12
    return SandwichReport(passed=bool(worst_lower >= -tol and worst_upper >= -tol),
                          worst_lower_slack=float(worst_lower),
                          worst_upper_slack=float(worst_upper),
                          n_pairs=len(pairs), k=k)


def sample_chart_pairs(domain, center, chart_radius, n_pairs, rng=None,
                       min_separation=0.0):
    """Y-node pairs drawn inside the chart ball around `center` whose mutual
    ambient distance stays below the chart radius."""
    rng = np.random.default_rng(rng)
    xy = domain.node_xy()
    in_chart = (np.hypot(xy[:, 0] - center[0], xy[:, 1] - center[1])
                <= chart_radius) & domain.is_y
    nodes = np.flatnonzero(in_chart)
    if nodes.size < 2:
        raise ValueError("chart contains fewer than two Y nodes")
    pairs = []
    attempts = 0
    while len(pairs) < n_pairs and attempts < 200 * n_pairs:
        attempts += 1
        a, b = rng.choice(nodes, size=2, replace=False)
        d = np.hypot(*(xy[a] - xy[b]))
        if min_separation <= d <= chart_radius:
            pairs.append((int(a), int(b)))
    if len(pairs) < n_pairs:
        raise ValueError("could not sample enough chart pairs")
    return pairs


def curvature_bound(K, N, kappa, kappa_prime, C0, C1, C2, C3):
    """Transformed curvature constants (K', N', K'') as pure arithmetic.

    N' = N + 1,
    K' = K - N' kappa kp + N'^2 kp^2 C1,
    K'' = exp(2 kp C0) [ K - (N+1) kappa kp + (N+1)^2 kp^2 C1
                         + kp C2 - (N-3) kp^2 C1 + (N-1) kp C3 ].
    Reproduces K exactly at kp = 0.
    """
    if not np.isfinite(N) or N < 1:
        raise InvalidDimension(f"N must be finite and >= 1, got {N}")
    K, kappa, kp = float(K), float(kappa), float(kappa_prime)
    C0, C1, C2, C3 = float(C0), float(C1), float(C2), float(C3)
    n_prime = N + 1.0
    k_prime = K - n_prime * kappa * kp + n_prime ** 2 * kp ** 2 * C1
    bracket = (K - (N + 1) * kappa * kp + (N + 1) ** 2 * kp ** 2 * C1
               + kp * C2 - (N - 3) * kp ** 2 * C1 + (N - 1) * kp * C3)
    k_second = np.exp(2 * kp * C0) * bracket
    return float(k_prime), float(n_prime), float(k_second)


def estimate_regularity_constants(domain, potential):
    """Grid estimates of the constants entering curvature_bound.

    C0 = sup V, C1 = sup of the squared local slope, C2 = sup of the 5-point
    Laplacian, C3 = sup one-sided second difference over stencil directions.
    These are estimates, not certificates; the flag says so.
    """
    from .potentials import local_slope

    V2 = potential.values.reshape(domain.nx, domain.ny)
    h = domain.h
    c0 = float(potential.values.max())
    c1 = float((local_slope(domain, potential) ** 2).max())
    lap = (V2[2:, 1:-1] + V2[:-2, 1:-1] + V2[1:-1, 2:] + V2[1:-1, :-2]
           - 4 * V2[1:-1, 1:-1]) / h ** 2
    c2 = float(lap.max()) if lap.size else 0.0
    c3 = 0.0
    for a, b in ((1, 0), (0, 1), (1, 1), (1, -1)):
        # second difference (V(x+d) - 2V(x) + V(x-d)) / |d|^2 over valid nodes
        nxs = slice(abs(a), domain.nx - abs(a))
        nys = slice(abs(b), domain.ny - abs(b))
        plus = V2[nxs.start + a: nxs.stop + a, nys.start + b: nys.stop + b]
        minus = V2[nxs.start - a: nxs.stop - a, nys.start - b: nys.stop - b]
        mid = V2[nxs, nys]
        if mid.size:
            d2 = (plus - 2 * mid + minus) / ((a * a + b * b) * h ** 2)
            c3 = max(c3, float(d2.max()))
    return {"C0": c0, "C1": c1, "C2": c2, "C3": c3, "certified": False}
