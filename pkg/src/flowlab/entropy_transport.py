"""Entropy, Wasserstein distances and minimizing-movement steps on Y nodes.

The exact transport solver is the network LP (HiGHS, sparse constraints) and
is authoritative up to a support cap; the Sinkhorn solver is the log-domain
scaling iteration and is tagged approximate. JKO steps run on an
entropic-proximal scaling loop with geometric epsilon annealing, with a
projected mirror-descent fallback on the exact LP for small supports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.special import logsumexp

from .errors import NoConvergence, SizeLimit
from .grid_space import distance_matrix, trace_geodesic
from .neumann_heat import build_neumann_operator, heat_step
from .trajectory import FlowTrajectory

EXACT_SUPPORT_CAP = 2000


def _neumann_of(domain):
    op = getattr(domain, "_neumann_cache", None)
    if op is None:
        op = build_neumann_operator(domain)
        domain._neumann_cache = op
    return op


@dataclass
class DiscreteMeasure:
    """Probability mass vector over the Y nodes of a domain."""

    domain: object
    mass: np.ndarray

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        y = self.domain.y_nodes
        if self.mass.shape != (y.size,):
            raise ValueError("mass vector must cover exactly the Y nodes")
        if self.mass.min() < -1e-14:
            raise ValueError("mass must be nonnegative")
        self.mass = np.maximum(self.mass, 0.0)
        total = self.mass.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"total mass {total} is not 1")

    @property
    def measure_weights(self):
        return self.domain.node_measure[self.domain.y_nodes]

    @property
    def density(self):
        return self.mass / self.measure_weights

    @classmethod
    def uniform(cls, domain):
        m = domain.node_measure[domain.y_nodes]
        return cls(domain, m / m.sum())

    @classmethod
    def from_density(cls, domain, f):
        m = domain.node_measure[domain.y_nodes]
        mass = np.asarray(f, dtype=float) * m
        return cls(domain, mass / mass.sum())

    @classmethod
    def point_mass(cls, domain, node):
        y = domain.y_nodes
        mass = np.zeros(y.size)
        k = np.flatnonzero(y == node)
        if k.size == 0:
            raise ValueError(f"node {node} is not a Y node")
        mass[k[0]] = 1.0
        return cls(domain, mass)

    @classmethod
    def gaussian_blob(cls, domain, center, sigma, floor=0.0):
        """Truncated Gaussian density plus a uniform floor, normalized."""
        xy = domain.node_xy(domain.y_nodes)
        d2 = (xy[:, 0] - center[0]) ** 2 + (xy[:, 1] - center[1]) ** 2
        f = np.exp(-0.5 * d2 / sigma ** 2) + floor
        return cls.from_density(domain, f)


def entropy(mu):
    """Boltzmann entropy sum rho log rho m over the support (0 log 0 = 0)."""
    rho = mu.density
    m = mu.measure_weights
    pos = rho > 0
    return float(np.sum(rho[pos] * np.log(rho[pos]) * m[pos]))


@dataclass
class CostMatrix:
    """Pairwise squared graph distances between support nodes."""

    domain: object
    support: np.ndarray
    sq: np.ndarray
    metric_tag: str
    field: object = None

    @property
    def restricted(self):
        return self.metric_tag != "d"


def build_cost_matrix(domain, metric="d_Y", field=None, support=None):
    """Squared-distance cost over a node support (all Y nodes by default).

    metric: "d" (ambient), "d_Y" (Y-restricted, unit factor) or "d_k"
    (Y-restricted under the supplied conformal field).
    """
    if support is None:
        support = domain.y_nodes
    support = np.asarray(support, dtype=int)
    if metric == "d":
        use_field, restrict = field, False
    elif metric == "d_Y":
        use_field, restrict = None, True
    elif metric == "d_k":
        if field is None:
            raise ValueError('metric "d_k" needs a conformal field')
        use_field, restrict = field, True
    else:
        raise ValueError(f"unknown metric {metric!r}")
    D = distance_matrix(domain, use_field, support, restrict_to_Y=restrict)
    D = D[:, support]
    D = 0.5 * (D + D.T)  # scrub accumulation-order asymmetry
    np.fill_diagonal(D, 0.0)
    return CostMatrix(domain=domain, support=support, sq=D * D,
                      metric_tag=metric, field=use_field)


def _support_vector(mu, cost):
    """Mass of mu re-indexed to the cost support; off-support mass must vanish."""
    y = mu.domain.y_nodes
    pos = np.zeros(mu.domain.n_nodes)
    pos[y] = mu.mass
    off = mu.mass.sum() - pos[cost.support].sum()
    if abs(off) > 1e-12:
        raise ValueError("measure carries mass outside the cost support")
    return pos[cost.support]


def _transport_lp(C, a, b):
    """Exact network LP: returns (value, plan, dual_a) on the full index set."""
    ia = np.flatnonzero(a > 0)
    ib = np.flatnonzero(b > 0)
    n, m = ia.size, ib.size
    Csub = C[np.ix_(ia, ib)]
    plan = np.zeros_like(C)
    if n == 1:
        plan[ia[0], ib] = b[ib]
        value = float(Csub.ravel() @ b[ib])
        dual = np.zeros_like(a)
        return value, plan, dual
    if m == 1:
        plan[ia, ib[0]] = a[ia]
        value = float(Csub.ravel() @ a[ia])
        dual = np.zeros_like(a)
        dual[ia] = Csub.ravel()
        return value, plan, dual
    nm = n * m
    var = np.arange(nm)
    row_of = np.repeat(np.arange(n), m)
    col_of = np.tile(np.arange(m), n)
    A_rows = sparse.csr_matrix((np.ones(nm), (row_of, var)), shape=(n, nm))
    A_cols = sparse.csr_matrix((np.ones(nm), (col_of, var)), shape=(m, nm))
    A_eq = sparse.vstack([A_rows, A_cols[:-1]], format="csr")
    rhs = np.concatenate([a[ia], b[ib][:-1]])
    res = linprog(Csub.ravel(), A_eq=A_eq, b_eq=rhs, bounds=(0, None),
                  method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise NoConvergence(f"transport LP failed: {res.message}")
    plan[np.ix_(ia, ib)] = res.x.reshape(n, m)
    dual = np.zeros_like(a)
    dual[ia] = res.eqlin.marginals[:n]
    return float(res.fun), plan, dual


def _sinkhorn_log(C, a, b, eps, tol=1e-9, max_iter=20000):
    """Log-domain Sinkhorn; returns (plan_cost, plan, iterations)."""
    with np.errstate(divide="ignore"):
        log_a = np.log(a)
        log_b = np.log(b)
    f = np.zeros_like(a)
    g = np.zeros_like(b)
    M = -C / eps
    finite_a = np.isfinite(log_a)
    finite_b = np.isfinite(log_b)
    for it in range(max_iter):
        f = eps * (log_a - logsumexp(M + g[None, :] / eps, axis=1))
        f[~finite_a] = -np.inf
        g = eps * (log_b - logsumexp(M + f[:, None] / eps, axis=0))
        g[~finite_b] = -np.inf
        if it % 10 == 9 or it < 5:
            log_plan = M + f[:, None] / eps + g[None, :] / eps
            plan = np.exp(log_plan)
            err = max(np.abs(plan.sum(axis=1) - a).max(),
                      np.abs(plan.sum(axis=0) - b).max())
            if err < tol:
                return float(np.sum(plan * C)), plan, it + 1
    raise NoConvergence(
        f"Sinkhorn stalled at marginal error {err:.3e} after {max_iter} iters")


def wasserstein2(mu, nu, cost, method="exact", eps=1e-3, tol=1e-9,
                 max_iter=20000):
    """Quadratic Wasserstein distance and optimal coupling over the cost
    support.

    "exact" solves the network LP (authoritative, support cap 2000);
    "sinkhorn" returns the plan cost of the eps-regularized coupling without
    debiasing, converged when both marginal errors drop below tol.
    """
    a = _support_vector(mu, cost)
    b = _support_vector(nu, cost)
    if method == "exact":
        if max(np.count_nonzero(a), np.count_nonzero(b)) > EXACT_SUPPORT_CAP:
            raise SizeLimit(
                f"exact LP support cap {EXACT_SUPPORT_CAP} exceeded")
        # canonical orientation makes W(mu, nu) == W(nu, mu) bit-exact
        swap = a.tobytes() > b.tobytes()
        if swap:
            value, plan, _ = _transport_lp(cost.sq, b, a)
            plan = plan.T
        else:
            value, plan, _ = _transport_lp(cost.sq, a, b)
        return float(np.sqrt(max(value, 0.0))), plan
    if method == "sinkhorn":
        value, plan, _ = _sinkhorn_log(cost.sq, a, b, eps, tol=tol,
                                       max_iter=max_iter)
        return float(np.sqrt(max(value, 0.0))), plan
    raise ValueError(f"unknown method {method!r}")


def _jko_scaling(C, mu_k, m_weights, tau, eps_schedule, tol, max_iter):
    """Entropic-proximal scaling loop in the log domain.

    Alternates the hard-marginal update (second marginal = mu_k) with the
    closed-form KL prox of the entropy: the free marginal is the geometric
    mean a^(eps/(eps+2tau)) m^(2tau/(eps+2tau)).
    """
    with np.errstate(divide="ignore"):
        log_muk = np.log(mu_k)
        log_m = np.log(m_weights)
    finite_b = np.isfinite(log_muk)
    f = np.zeros_like(mu_k)
    g = np.zeros_like(mu_k)
    mu_prev = mu_k.copy()
    total_iters = 0
    for eps in eps_schedule:
        M = -C / eps
        weight = 2 * tau * eps / (eps + 2 * tau)
        converged = False
        for it in range(max_iter):
            total_iters += 1
            g = eps * (log_muk - logsumexp(M + f[:, None] / eps, axis=0))
            g[~finite_b] = -np.inf
            log_a = logsumexp(M + g[None, :] / eps, axis=1)
            f = weight * (log_m - log_a)
            mu = np.exp(f / eps + log_a)
            delta = np.abs(mu - mu_prev).max()
            mu_prev = mu
            if delta < tol:
                converged = True
                break
        if not converged:
            raise NoConvergence(
                f"JKO scaling stalled at eps = {eps:.3e}, "
                f"last update {delta:.3e} > {tol:.1e}")
    mu = np.maximum(mu_prev, 0.0)
    return mu / mu.sum(), {"iterations": total_iters, "final_update": delta,
                           "eps_final": eps_schedule[-1]}


def _jko_mirror(C, mu_k, m_weights, tau, tol, max_iter):
    """Projected mirror descent on Ent + W2^2/(2 tau) with exact LP gradients."""
    n = mu_k.size
    if np.count_nonzero(mu_k) > 200:
        raise SizeLimit("mirror solver is limited to supports of 200 nodes")
    mu = np.maximum(mu_k, 1e-12)
    mu = mu / mu.sum()

    def objective(x):
        w2sq = _transport_lp(C, x, mu_k)[0]
        pos = x > 0
        ent = np.sum(x[pos] * np.log(x[pos] / m_weights[pos]))
        return ent + w2sq / (2 * tau)

    obj = objective(mu)
    eta = 0.5
    grad_norm = np.inf
    for it in range(max_iter):
        _, _, dual = _transport_lp(C, mu, mu_k)
        grad = np.log(mu / m_weights) + 1.0 + dual / (2 * tau)
        grad -= grad @ mu  # tangent part on the simplex
        grad_norm = float(np.abs(grad).max())
        if grad_norm < tol:
            break
        while eta > 1e-8:
            trial = mu * np.exp(-eta * grad)
            trial /= trial.sum()
            trial_obj = objective(trial)
            if trial_obj <= obj + 1e-15:
                mu, obj = trial, trial_obj
                eta = min(eta * 1.5, 2.0)
                break
            eta *= 0.5
        else:
            break
    else:
        raise NoConvergence(
            f"mirror descent stalled, gradient norm {grad_norm:.3e}")
    return mu, {"iterations": it + 1, "grad_norm": grad_norm}


def jko_step(mu_k, tau, cost, solver="scaling",
             eps_schedule=(1e-1, 1e-3, 5), tol=1e-11, max_iter=5000):
    """One minimizing-movement step of the entropy at time scale tau.

    solver "scaling": entropic-proximal iterations with geometric epsilon
    annealing given as (eps_start, eps_end, levels). solver "mirror":
    projected mirror descent on the exact LP objective (small supports only).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    a = _support_vector(mu_k, cost)
    m_w = mu_k.domain.node_measure[cost.support]
    if solver == "scaling":
        e0, e1, levels = eps_schedule
        schedule = np.geomspace(e0, e1, int(levels))
        mass, info = _jko_scaling(cost.sq, a, m_w, tau, schedule, tol, max_iter)
    elif solver == "mirror":
        mass, info = _jko_mirror(cost.sq, a, m_w, tau, tol=1e-7,
                                 max_iter=max_iter)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    full = np.zeros(mu_k.domain.n_nodes)
    full[cost.support] = mass
    out = DiscreteMeasure(mu_k.domain, full[mu_k.domain.y_nodes])
    return out, info


def fisher_information(mu):
    """Relative Fisher information 4 sum_e (sqrt(rho_u) - sqrt(rho_v))^2 over
    Y-internal axis edges; equals 8x the Dirichlet energy of sqrt(rho)."""
    op = _neumann_of(mu.domain)
    root = np.sqrt(mu.density)
    diff = root[op.edges_u] - root[op.edges_v]
    return float(4.0 * np.dot(diff, diff))


def _heat_candidate_at_radius(mu, cost, op, radius, dt0=1e-3, max_probe=14):
    """Heat-evolved measure whose distance from mu sits just under radius.

    Doubles/halves the heat time until W2(mu, nu_dt) lands in
    [0.6, 0.98] * radius; each probe costs one exact LP.
    """
    f = mu.density
    dt = dt0
    last = None
    for _ in range(max_probe):
        g = heat_step(op, f, dt)
        nu = DiscreteMeasure.from_density(mu.domain, g)
        w, _ = wasserstein2(mu, nu, cost)
        last = (nu, w)
        if w > 0.98 * radius:
            dt *= 0.5
        elif w < 0.6 * radius:
            dt *= 2.0
        else:
            return nu, w
    nu, w = last
    return (nu, w) if w <= radius else (None, None)


def descending_slope_estimate(mu, cost, radius, samples=30, rng=None,
                              heat_fractions=(1.0, 0.6, 0.35)):
    """Lower estimate of the descending slope of the entropy at mu.

    Scans heat-flow perturbations with the heat time tuned so the candidates
    sit at the given fractions of the radius (known descent directions), plus
    random pairwise mass swaps, and returns the largest
    (Ent(mu) - Ent(nu))_+ / W2(mu, nu) over candidates with W2 <= radius.

    On a grid the estimate is meaningful only for radii of a few cells and
    above: transporting mass on the graph costs whole edge lengths, so the
    ratio collapses like sqrt(radius) below the cell scale.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(rng)
    op = _neumann_of(mu.domain)
    ent0 = entropy(mu)
    best = 0.0
    scored = []
    for frac in heat_fractions:
        nu, w = _heat_candidate_at_radius(mu, cost, op, frac * radius)
        if nu is not None and 0 < w <= radius:
            scored.append((nu, w))
    y = mu.domain.y_nodes
    pos = np.flatnonzero(mu.mass > 0)
    comp = {int(n): k for k, n in enumerate(cost.support)}
    for _ in range(samples):
        i = int(rng.choice(pos))
        j = int(rng.integers(mu.mass.size))
        if i == j:
            continue
        gi = int(y[i])
        gj = int(y[j])
        if gi not in comp or gj not in comp:
            continue
        d2 = cost.sq[comp[gi], comp[gj]]
        if d2 <= 0:
            continue
        # moving delta over distance d costs at most sqrt(delta) d
        delta = min(mu.mass[i], 0.9 * radius ** 2 / d2)
        if delta <= 0:
            continue
        mass = mu.mass.copy()
        mass[i] -= delta
        mass[j] += delta
        nu = DiscreteMeasure(mu.domain, mass)
        w, _ = wasserstein2(mu, nu, cost)
        if 0 < w <= radius:
            scored.append((nu, w))
    for nu, w in scored:
        gain = ent0 - entropy(nu)
        if gain > 0:
            best = max(best, gain / w)
    return best


def ede_residual(traj, cost):
    """Energy-dissipation residual curve of a trajectory of densities.

    residual(t) = Ent(t) - Ent(0) + 1/2 int |speed|^2 + 1/2 int slope^2, with
    the metric speed from central W2 differences and the slope from the
    Fisher information. Approximately zero along a true gradient flow.
    """
    domain = cost.domain
    times = traj.times
    n = len(times)
    measures = [DiscreteMeasure.from_density(domain, st) for st in traj.states]
    ents = np.array([entropy(m) for m in measures])
    fisher = np.array([fisher_information(m) for m in measures])
    speed = np.zeros(n)
    for k in range(n):
        if 0 < k < n - 1:
            w, _ = wasserstein2(measures[k - 1], measures[k + 1], cost)
            speed[k] = w / (times[k + 1] - times[k - 1])
        else:
            a, b = (k, k + 1) if k == 0 else (k - 1, k)
            w, _ = wasserstein2(measures[a], measures[b], cost)
            speed[k] = w / (times[b] - times[a])
    integrand = 0.5 * speed ** 2 + 0.5 * fisher
    cum = np.concatenate(
        [[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1])
                          * np.diff(times))])
    return ents - ents[0] + cum


def entropy_convexity_probe(mu0, mu1, cost, steps=10, K=0.0, rng=None):
    """Displacement-convexity probe along geodesic mass splitting.

    Builds an approximate displacement interpolation by routing every optimal
    coupling entry along its traced geodesic under the cost's metric, placing
    the mass at the node nearest to arclength fraction t = j/steps, then
    checks Ent(mu_t) <= (1-t) Ent0 + t Ent1 - (K/2) t (1-t) W2^2 and reports
    the worst margin (positive = violation).
    """
    w, plan = wasserstein2(mu0, mu1, cost)
    e0, e1 = entropy(mu0), entropy(mu1)
    domain = cost.domain
    restrict = cost.restricted
    entries = np.argwhere(plan > 1e-15)
    paths = {}
    ts = np.arange(1, steps) / steps
    margins = np.zeros(ts.size)
    ents = np.zeros(ts.size)
    y_index = -np.ones(domain.n_nodes, dtype=int)
    y_index[domain.y_nodes] = np.arange(domain.y_nodes.size)
    for kt, t in enumerate(ts):
        mass_t = np.zeros(domain.y_nodes.size)
        for i, j in entries:
            gi = int(cost.support[i])
            gj = int(cost.support[j])
            if gi == gj:
                mass_t[y_index[gi]] += plan[i, j]
                continue
            key = (gi, gj)
            if key not in paths:
                paths[key] = trace_geodesic(domain, cost.field, gi, gj,
                                            restrict_to_Y=restrict)
            path = paths[key]
            frac = np.concatenate([[0.0], np.cumsum(path.lengths)])
            frac /= frac[-1]
            node = path.nodes[int(np.argmin(np.abs(frac - t)))]
            mass_t[y_index[node]] += plan[i, j]
        mu_t = DiscreteMeasure(domain, mass_t / mass_t.sum())
        ents[kt] = entropy(mu_t)
        bound = (1 - t) * e0 + t * e1 - 0.5 * K * t * (1 - t) * w ** 2
        margins[kt] = ents[kt] - bound
    worst = float(margins.max()) if margins.size else 0.0
    return {"w2": w, "ts": ts, "entropies": ents, "margins": margins,
            "worst_margin": worst, "endpoints": (e0, e1)}
