"""Gradient descent flows of node potentials in continuous grid coordinates.

Trajectories follow explicit Euler steps on the bilinear interpolant of V,
with adaptive step halving whenever a step fails to decrease V. A trajectory
stops when it first reaches the sublevel set {V <= 0}; the crossing time and
point are resolved by linear interpolation along the final step. The stopped
map x -> x_{T(x)} is the projection onto the region, and the pairwise tests
below measure its contraction and length-shortening behavior in the flat
ambient chart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LeftGrid, ProjectionFailed, StepCollapse
from .interp import BilinearField


@dataclass
class PointTrajectory:
    """Time-stamped continuous positions of one descent flow."""

    times: np.ndarray
    positions: np.ndarray
    values: np.ndarray
    hit_time: float | None
    step_size: float

    def at(self, t):
        """Position at time t: linear interpolation, frozen after the end."""
        times = self.times
        if t <= times[0]:
            return self.positions[0]
        if t >= times[-1]:
            return self.positions[-1]
        k = int(np.searchsorted(times, t, side="right")) - 1
        t0, t1 = times[k], times[k + 1]
        w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        return (1 - w) * self.positions[k] + w * self.positions[k + 1]


def _field_of(domain, potential):
    if isinstance(potential, BilinearField):
        return potential
    return BilinearField(domain, potential.values)


def descend(domain, potential, x0, dt, t_max, min_step_factor=2.0 ** -40):
    """Explicit Euler descent of V from x0 until {V <= 0} or t_max.

    Steps that fail to decrease V are retried with half the step; StepCollapse
    fires when the step underflows, LeftGrid when the trajectory exits the
    grid bounding box.

    The sublevel test carries a relative slack (1e-10 of the starting value):
    the bilinear interpolant of a clamped potential stays strictly positive
    inside cells with one positive corner, so flows entering such a cell along
    its diagonal would otherwise creep toward a boundary node forever.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    field = _field_of(domain, potential)
    x = np.asarray(x0, dtype=float)
    if not field.inside(x):
        raise LeftGrid(f"start point {x.tolist()} outside the grid")
    v = float(field.value(x))
    times = [0.0]
    points = [x.copy()]
    values = [v]
    if v <= 0.0:
        return PointTrajectory(np.array(times), np.array(points),
                               np.array(values), hit_time=0.0, step_size=dt)
    eps_hit = 1e-10 * v
    t = 0.0
    step = dt
    hit_time = None
    while t < t_max:
        step = min(step, t_max - t)
        g = field.gradient(x)
        trial = x - step * g
        if not field.inside(trial):
            raise LeftGrid(f"trajectory left the grid at t = {t:.6g}")
        v_trial = float(field.value(trial))
        if v_trial > v:
            step *= 0.5
            if step < dt * min_step_factor:
                raise StepCollapse(f"step underflow at t = {t:.6g}")
            continue
        if v_trial <= eps_hit:
            # linear interpolation of V along the accepted step
            frac = v / (v - v_trial) if v != v_trial else 1.0
            hit_time = t + frac * step
            x = x + frac * (trial - x)
            v = float(field.value(x))
            times.append(hit_time)
            points.append(x.copy())
            values.append(v)
            break
        t += step
        x = trial
        v = v_trial
        times.append(t)
        points.append(x.copy())
        values.append(v)
        step = min(dt, step * 2.0)
    return PointTrajectory(np.array(times), np.array(points),
                           np.array(values), hit_time=hit_time, step_size=dt)


def project_to_Y(domain, potential, x, dt, t_max=50.0):
    """First point of the descent flow from x inside {V <= 0}.

    The identity on {V <= 0}; raises ProjectionFailed if the flow does not
    reach the region within t_max.
    """
    traj = descend(domain, potential, x, dt, t_max)
    if traj.hit_time is None:
        raise ProjectionFailed(
            f"flow from {np.asarray(x).tolist()} did not reach the region "
            f"within t = {t_max}")
    return traj.positions[-1], traj.hit_time


def contraction_test(domain, potential, x0, y0, kappa_prime, horizon, dt,
                     tol=None):
    """Normalized contraction curve of two descent flows.

    Returns the sampled curve t -> exp(kp t) |x_t - y_t| / |x_0 - y_0| and its
    sup over [0, horizon]; flows freeze at their hitting points. Passes iff
    sup <= 1 + tol, with tol defaulting to the 5 (dt + h) slack used for
    modulus-equality cases.
    """
    if tol is None:
        tol = 5.0 * (dt + domain.h)
    tx = descend(domain, potential, x0, dt, horizon)
    ty = descend(domain, potential, y0, dt, horizon)
    d0 = float(np.hypot(*(np.asarray(x0, float) - np.asarray(y0, float))))
    if d0 == 0:
        raise ValueError("x0 and y0 must differ")
    ts = np.arange(0.0, horizon + 0.5 * dt, dt)
    ratios = np.empty(ts.size)
    for i, t in enumerate(ts):
        d = float(np.hypot(*(tx.at(t) - ty.at(t))))
        ratios[i] = np.exp(kappa_prime * t) * d / d0
    sup = float(ratios.max())
    return {"times": ts, "ratios": ratios, "sup_ratio": sup,
            "passed": bool(sup <= 1.0 + tol), "tol": tol}


def ratio_bound_test(domain, potential, x, y, kappa, delta, dt,
                     n_segment_samples=9, t_max=50.0):
    """Projected-endpoint distance ratio against its exponential bound.

    ratio = |Proj(y) - Proj(x)| / |y - x|; the bound is
    exp(-(kappa - delta) T(x, y)) with T(x, y) estimated as the max hitting
    time over points sampled along the segment [x, y] -- a conservative
    stand-in that can only raise a bound with nonpositive exponent rate.
    Returns bound - ratio along with the pieces.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    px, tx_hit = project_to_Y(domain, potential, x, dt, t_max)
    py, ty_hit = project_to_Y(domain, potential, y, dt, t_max)
    d_xy = float(np.hypot(*(x - y)))
    if d_xy == 0:
        raise ValueError("x and y must differ")
    ratio = float(np.hypot(*(px - py))) / d_xy
    t_seg = 0.0
    for s in np.linspace(0.0, 1.0, n_segment_samples):
        p = (1 - s) * x + s * y
        _, t_hit = project_to_Y(domain, potential, p, dt, t_max)
        t_seg = max(t_seg, t_hit)
    bound = float(np.exp(-(kappa - delta) * t_seg))
    return {"ratio": ratio, "bound": bound, "margin": bound - ratio,
            "T_xy": t_seg, "hit_times": (tx_hit, ty_hit)}


def polyline_length(domain, field_phi, points):
    """Length of a continuous polyline under a conformal factor, trapezoid
    rule per segment (matching the edge-weight convention of the graph)."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return 0.0
    interp = BilinearField(domain, field_phi)
    phi = interp.value(pts)
    seg = np.hypot(*(pts[1:] - pts[:-1]).T)
    return float(np.sum(seg * 0.5 * (phi[1:] + phi[:-1])))


def projection_shortens(domain, potential, field, points, dt, t_max=50.0):
    """Projects every vertex of a polyline and measures both lengths under
    the conformal field. Returns (len_before, len_after)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    projected = np.array(
        [project_to_Y(domain, potential, p, dt, t_max)[0] for p in pts])
    before = polyline_length(domain, field.phi, pts)
    after = polyline_length(domain, field.phi, projected)
    return before, after
