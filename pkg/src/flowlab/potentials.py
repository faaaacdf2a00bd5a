"""Defining potentials of sets with a curvature-controlled boundary.

A region Y on the grid is encoded as the sublevel set {V <= 0} of a scalar
node field V. For complements of balls (exterior-ball condition) the potential
has a closed form built from a curvature comparison profile, and the convexity
modulus kappa of V along straight chords is explicit. The audits in this
module falsify (never prove) the claimed modulus and the slope lower bound on
thin bands above the zero level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CenterTooClose, EmptyBand, EmptyRegion, RadiusOutOfRange
from .grid_space import AMBIENT, BOUNDARY, IN_Y, distance_to_set, trace_geodesic


@dataclass
class Potential:
    """Per-node scalar field with its claimed convexity modulus."""

    values: np.ndarray
    kappa: float | None = None
    analytic: dict | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


@dataclass
class ConvexityReport:
    passed: bool
    worst_margin: float
    worst_pair: tuple
    samples: int
    tol: float

    def to_json(self):
        return json.dumps(
            {"pass": self.passed, "worst_margin": self.worst_margin,
             "worst_pair": list(map(int, self.worst_pair)),
             "samples": self.samples, "tol": self.tol},
            sort_keys=True)


def phi_comparison(L, r):
    """Comparison profile Phi(r) for curvature lower bound L.

    r^2/2 in the flat case, -cos(sqrt(L) r)/L for L > 0 (restricted to
    r < pi/(2 sqrt(L))), -cosh(sqrt(-L) r)/L for L < 0.
    """
    return phi_comparison_derivatives(L, r)[0]


def phi_comparison_derivatives(L, r):
    """(Phi, Phi', Phi'') at radius r."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if L == 0:
        return 0.5 * r * r, r, 1.0
    if L > 0:
        s = np.sqrt(L)
        if r >= np.pi / (2 * s):
            raise RadiusOutOfRange(
                f"r = {r} outside [0, pi/(2 sqrt(L))) for L = {L}")
        return -np.cos(s * r) / L, np.sin(s * r) / s, np.cos(s * r)
    s = np.sqrt(-L)
    return -np.cosh(s * r) / L, np.sinh(s * r) / s, np.cosh(s * r)


def kappa_for_ball_complement(L, r):
    """Convexity modulus of the complement of a radius-r ball at curvature L.

    Equals -Phi''(r)/Phi'(r): -1/r when L = 0, -sqrt(L) cot(sqrt(L) r) for
    L > 0, -sqrt(-L) coth(sqrt(-L) r) for L < 0.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    _, d1, d2 = phi_comparison_derivatives(L, r)
    return -d2 / d1


def exterior_ball_potential(domain, centers, r, L=0.0):
    """Potential of a region whose complement is a union of radius-r balls.

    V(x) = max over centers z of (Phi(r) - Phi(|x - z|))_+ / Phi'(r); zero on
    the region, positive exactly inside some ball. Ambient point distances are
    Euclidean. Raises CenterTooClose if a center sits closer than r - h to a
    Y node.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    xy = domain.node_xy()
    y_xy = xy[domain.is_y]
    phi_r, dphi_r, _ = phi_comparison_derivatives(L, r)
    values = np.zeros(domain.n_nodes)
    for z in centers:
        d_y = np.hypot(y_xy[:, 0] - z[0], y_xy[:, 1] - z[1]).min()
        if d_y < r - domain.h:
            raise CenterTooClose(
                f"center {z.tolist()} at distance {d_y:.6g} < r - h from Y")
        d = np.hypot(xy[:, 0] - z[0], xy[:, 1] - z[1])
        inside = d < r
        v_z = np.zeros(domain.n_nodes)
        v_z[inside] = (phi_r - _phi_vec(L, d[inside])) / dphi_r
        np.maximum(values, v_z, out=values)
    kappa = kappa_for_ball_complement(L, r)
    return Potential(values, kappa=kappa,
                     analytic={"form": "exterior_ball", "r": r, "L": L,
                               "centers": centers.tolist()})


def _phi_vec(L, d):
    if L == 0:
        return 0.5 * d * d
    if L > 0:
        return -np.cos(np.sqrt(L) * d) / L
    s = np.sqrt(-L)
    return -np.cosh(s * d) / L


def signed_distance_potential(domain):
    """Graph signed distance from the Boundary node set.

    Negative inside Y, positive on Ambient nodes, zero on Boundary.
    """
    boundary = np.flatnonzero(domain.mask == BOUNDARY)
    if boundary.size == 0:
        raise EmptyRegion("domain has no Boundary node")
    d = distance_to_set(domain, boundary)
    values = np.where(domain.mask == AMBIENT, d, -d)
    values[boundary] = 0.0
    return Potential(values, kappa=None, analytic={"form": "signed_distance"})


def audit_kappa_convexity(domain, potential, kappa, region, samples, tol,
                          rng=None, min_separation=None):
    """Falsification sweep of the chordwise convexity inequality.

    Draws `samples` random node pairs inside `region` separated by at least
    `min_separation` (default 8h: closer pairs cannot resolve curvature on the
    grid), walks the ambient geodesic of the flat chart -- the straight chord
    -- sampling V bilinearly, and checks
        V(gamma_t) <= (1-t) V0 + t V1 - (kappa/2) t (1-t) len^2.
    A pair passes when its worst violation stays below tol * len^2.
    """
    rng = np.random.default_rng(rng)
    region = np.asarray(region, dtype=bool)
    nodes = np.flatnonzero(region)
    if nodes.size == 0:
        raise EmptyRegion("region predicate selects no nodes")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if min_separation is None:
        min_separation = 8 * domain.h
    from .interp import BilinearField
    field = BilinearField(domain, potential.values)
    xy = domain.node_xy()
    worst_excess = -np.inf
    worst_margin = 0.0
    worst_pair = (int(nodes[0]), int(nodes[0]))
    n_checked = 0
    attempts = 0
    while n_checked < samples and attempts < 50 * samples:
        attempts += 1
        a, b = rng.choice(nodes, size=2, replace=True)
        pa, pb = xy[a], xy[b]
        length = float(np.hypot(*(pb - pa)))
        if length < min_separation:
            continue
        n_pts = max(17, 2 * int(np.ceil(length / domain.h)) + 1)
        t = np.linspace(0.0, 1.0, n_pts)
        pts = pa[None, :] * (1 - t)[:, None] + pb[None, :] * t[:, None]
        v = field.value(pts)
        bound = (1 - t) * v[0] + t * v[-1] - 0.5 * kappa * t * (1 - t) * length ** 2
        margin = float(np.max(v - bound))
        excess = margin - tol * length ** 2
        n_checked += 1
        if excess > worst_excess:
            worst_excess = excess
            worst_margin = margin
            worst_pair = (int(a), int(b))
    passed = worst_excess <= 0
    return ConvexityReport(passed=bool(passed), worst_margin=worst_margin,
                           worst_pair=worst_pair, samples=n_checked, tol=tol)


def local_slope(domain, potential):
    """Per-node descending slope: max over stencil neighbors of
    (V(x) - V(y))_+ / d(x, y)."""
    V = potential.values
    u, v = domain.edges[:, 0], domain.edges[:, 1]
    w = domain.edge_length
    slope = np.zeros(domain.n_nodes)
    drop_uv = np.maximum(V[u] - V[v], 0.0) / w
    drop_vu = np.maximum(V[v] - V[u], 0.0) / w
    np.maximum.at(slope, u, drop_uv)
    np.maximum.at(slope, v, drop_vu)
    return slope


def gradient_lower_bound(domain, potential, band):
    """Minimum descending slope over the band {lo < V <= hi}."""
    lo, hi = band
    V = potential.values
    sel = (V > lo) & (V <= hi)
    if not sel.any():
        raise EmptyBand(f"no node with {lo} < V <= {hi}")
    return float(local_slope(domain, potential)[sel].min())


def v_epsilon(domain, potential, eps):
    """One-parameter regularized family: clamp at -eps, then smooth the
    clamped region over one cell. Values on {V > -eps} are untouched; on Y the
    result stays within [-eps, 0]."""
    V = potential.values
    clamped = np.maximum(V, -eps)
    deep = V < -eps
    if deep.any():
        sm2d = clamped.reshape(domain.nx, domain.ny).copy()
        acc = clamped.reshape(domain.nx, domain.ny).copy()
        cnt = np.ones_like(acc)
        for a in (-1, 0, 1):
            for b in (-1, 0, 1):
                if a == b == 0:
                    continue
                xs = slice(max(a, 0), domain.nx + min(a, 0))
                xd = slice(max(-a, 0), domain.nx + min(-a, 0))
                ys = slice(max(b, 0), domain.ny + min(b, 0))
                yd = slice(max(-b, 0), domain.ny + min(-b, 0))
                acc[xd, yd] += sm2d[xs, ys]
                cnt[xd, yd] += 1
        mean = (acc / cnt).reshape(-1)
        out = clamped.copy()
        out[deep] = np.minimum(mean[deep], 0.0)
        return Potential(out, kappa=potential.kappa, analytic=None)
    return Potential(clamped, kappa=potential.kappa, analytic=None)
