"""Independent reference computations used to freeze expected test values.

Everything here is deliberately naive (exhaustive enumeration, dense linear
algebra, high-accuracy ODE integration, symbolic arithmetic) and shares no
code path with the library implementations it checks.
"""

import numpy as np


def flood_fill_connected(in_y, offsets):
    """Breadth-first reachability over a boolean mask; True iff one component."""
    in_y = np.asarray(in_y, dtype=bool)
    nx, ny = in_y.shape
    seeds = np.argwhere(in_y)
    if len(seeds) == 0:
        return True
    seen = np.zeros_like(in_y)
    stack = [tuple(seeds[0])]
    seen[tuple(seeds[0])] = True
    while stack:
        i, j = stack.pop()
        for a, b in offsets:
            ii, jj = i + a, j + b
            if 0 <= ii < nx and 0 <= jj < ny and in_y[ii, jj] and not seen[ii, jj]:
                seen[ii, jj] = True
                stack.append((ii, jj))
    return bool(np.all(seen[in_y]))


def enumerate_shortest_path(n_nodes, edges, weights, src, dst):
    """Exhaustive DFS over simple paths; returns the minimal total weight."""
    adj = {u: [] for u in range(n_nodes)}
    for (u, v), w in zip(edges, weights):
        adj[u].append((v, w))
        adj[v].append((u, w))
    best = [np.inf]

    def walk(node, used, acc):
        if acc >= best[0]:
            return
        if node == dst:
            best[0] = acc
            return
        for nxt, w in adj[node]:
            if nxt not in used:
                walk(nxt, used | {nxt}, acc + w)

    walk(src, {src}, 0.0)
    return best[0]


def radial_escape(s0, r, rtol=1e-12):
    """High-accuracy solve of ds/dt = s/r from s0 until s = r.

    Returns (escape_time, dense solution callable). Independent oracle for the
    gradient flow of the flat exterior-ball potential, which is radial with
    outward speed s/r inside the ball.
    """
    from scipy.integrate import solve_ivp

    def rhs(t, y):
        return [y[0] / r]

    def hit(t, y):
        return y[0] - r

    hit.terminal = True
    hit.direction = 1
    sol = solve_ivp(rhs, (0.0, 100.0), [s0], events=hit, rtol=rtol, atol=1e-14,
                    dense_output=True)
    return float(sol.t_events[0][0]), sol.sol


def curvature_bound_symbolic(K, N, kappa, kappa_prime, C0, C1, C2, C3):
    """Symbolic evaluation of the transformed curvature constants."""
    import sympy as sp

    Ks, Ns, k, kp, c0, c1, c2, c3 = [
        sp.nsimplify(v, rational=False) for v in
        (K, N, kappa, kappa_prime, C0, C1, C2, C3)
    ]
    Np = Ns + 1
    Kp = Ks - Np * k * kp + Np ** 2 * kp ** 2 * c1
    bracket = (Ks - (Ns + 1) * k * kp + (Ns + 1) ** 2 * kp ** 2 * c1
               + kp * c2 - (Ns - 3) * kp ** 2 * c1 + (Ns - 1) * kp * c3)
    Kpp = sp.exp(2 * kp * c0) * bracket
    return float(Kp.evalf(30)), float(Np.evalf(30)), float(Kpp.evalf(30))


def dense_heat_step(L_dense, f, dt):
    """Direct dense solve of (I - dt L) f' = f."""
    n = len(f)
    return np.linalg.solve(np.eye(n) - dt * np.asarray(L_dense), f)


def spectral_gap_dense(L_dense, measure):
    """Smallest nonzero eigenvalue magnitude of -L via a dense symmetric solve
    in the measure-weighted inner product."""
    from scipy.linalg import eigh

    m = np.asarray(measure, dtype=float)
    s = np.sqrt(m)
    A = (s[:, None] * np.asarray(L_dense)) / s[None, :]
    vals = eigh(A, eigvals_only=True)
    vals = np.sort(np.abs(vals))
    return float(vals[1])


def two_node_jko(mu0, dist, tau, measures=(1.0, 1.0)):
    """Scalar minimization of Ent + W^2/(2 tau) on a two-node space."""
    from scipy.optimize import minimize_scalar

    m0, m1 = measures

    def ent(a):
        out = 0.0
        for mass, m in (((1 - a), m0), (a, m1)):
            if mass > 0:
                rho = mass / m
                out += rho * np.log(rho) * m
        return out

    def w2sq(a):
        moved = abs(a - mu0[1])
        return moved * dist ** 2

    res = minimize_scalar(lambda a: ent(a) + w2sq(a) / (2 * tau),
                          bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x)


def power_iteration_gap(heat_step_fn, measure, n, iters=300, dt=0.05, seed=7):
    """Spectral gap from inverse power iteration using a heat-step black box."""
    rng = np.random.default_rng(seed)
    m = np.asarray(measure, dtype=float)
    v = rng.standard_normal(n)
    v -= (v @ m) / m.sum()
    v /= np.linalg.norm(v)
    factor = 1.0
    for _ in range(iters):
        w = heat_step_fn(v, dt)
        w -= (w @ m) / m.sum()
        factor = np.linalg.norm(w)
        v = w / factor
    return (1.0 / factor - 1.0) / dt
