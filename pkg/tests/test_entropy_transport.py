import numpy as np
import pytest

import flowlab.entropy_transport as et
from flowlab.entropy_transport import (
    DiscreteMeasure, build_cost_matrix, descending_slope_estimate,
    ede_residual, entropy, entropy_convexity_probe, fisher_information,
    jko_step, wasserstein2,
)
from flowlab.errors import NoConvergence, SizeLimit
from flowlab.grid_space import DomainSpec, build_domain
from flowlab.neumann_heat import build_neumann_operator, cheeger_energy, evolve
from flowlab.trajectory import FlowTrajectory

from oracles import two_node_jko


def explicit_domain(shape, h=1.0):
    return build_domain(DomainSpec("explicit", h=h,
                                   params={"mask": np.ones(shape, bool).tolist()}))


@pytest.fixture(scope="module")
def square8():
    return build_domain(DomainSpec("square", h=1 / 8))


@pytest.fixture(scope="module")
def square8_cost(square8):
    return build_cost_matrix(square8, metric="d_Y")


@pytest.fixture(scope="module")
def two_node():
    dom = explicit_domain((2, 1))
    cost = build_cost_matrix(dom, metric="d_Y")
    return dom, cost


class TestEntropy:
    def test_uniform_on_four_unit_cells(self):
        dom = explicit_domain((2, 2))
        mu = DiscreteMeasure.uniform(dom)
        assert entropy(mu) == pytest.approx(-np.log(4.0), rel=1e-14)
        assert entropy(mu) == pytest.approx(-1.386294, abs=1e-6)

    def test_point_mass(self, square8):
        node = int(square8.y_nodes[10])
        mu = DiscreteMeasure.point_mass(square8, node)
        m_i = square8.node_measure[node]
        assert entropy(mu) == pytest.approx(np.log(1.0 / m_i), rel=1e-14)

    def test_two_node_hand_value(self, two_node):
        dom, _ = two_node
        mu = DiscreteMeasure(dom, np.array([0.75, 0.25]))
        want = 0.75 * np.log(0.75) + 0.25 * np.log(0.25)
        assert entropy(mu) == pytest.approx(want, rel=1e-14)
        assert entropy(mu) == pytest.approx(-0.562335, abs=1e-6)

    def test_uniform_minimizes(self, square8):
        rng = np.random.default_rng(0)
        uni = DiscreteMeasure.uniform(square8)
        for _ in range(10):
            f = rng.random(square8.y_nodes.size) + 0.05
            mu = DiscreteMeasure.from_density(square8, f)
            assert entropy(mu) >= entropy(uni) - 1e-12


class TestWasserstein:
    def test_identical_measures(self, square8, square8_cost):
        mu = DiscreteMeasure.gaussian_blob(square8, (0.4, 0.6), 0.2)
        w, plan = wasserstein2(mu, mu, square8_cost)
        assert w == 0.0
        assert np.allclose(plan, np.diag(mu.mass), atol=1e-12)

    def test_point_masses(self, square8, square8_cost):
        a = int(square8.y_nodes[3])
        b = int(square8.y_nodes[-5])
        mu = DiscreteMeasure.point_mass(square8, a)
        nu = DiscreteMeasure.point_mass(square8, b)
        w, plan = wasserstein2(mu, nu, square8_cost)
        ka = np.flatnonzero(square8_cost.support == a)[0]
        kb = np.flatnonzero(square8_cost.support == b)[0]
        assert w == pytest.approx(np.sqrt(square8_cost.sq[ka, kb]), rel=1e-12)
        assert plan[ka, kb] == pytest.approx(1.0, abs=1e-12)
        assert np.count_nonzero(plan > 1e-12) == 1

    def test_half_to_full_oracle(self, two_node):
        # oracle: one-parameter coupling family, optimum moves 1/2 across
        dom, cost = two_node
        mu = DiscreteMeasure(dom, np.array([0.5, 0.5]))
        nu = DiscreteMeasure(dom, np.array([1.0, 0.0]))
        w, plan = wasserstein2(mu, nu, cost)
        assert w == pytest.approx(np.sqrt(0.5), rel=1e-12)
        assert plan[1, 0] == pytest.approx(0.5, abs=1e-12)

    def test_symmetry_exact_and_triangle(self, square8, square8_cost):
        rng = np.random.default_rng(1)
        mus = [DiscreteMeasure.from_density(square8,
                                            rng.random(square8.y_nodes.size) + 0.1)
               for _ in range(3)]
        w01, _ = wasserstein2(mus[0], mus[1], square8_cost)
        w10, _ = wasserstein2(mus[1], mus[0], square8_cost)
        assert w01 == w10  # bit-exact by canonical orientation
        w02, _ = wasserstein2(mus[0], mus[2], square8_cost)
        w12, _ = wasserstein2(mus[1], mus[2], square8_cost)
        assert w02 <= w01 + w12 + 1e-9

    def test_sinkhorn_close_to_exact_and_biased_up(self, square8, square8_cost):
        rng = np.random.default_rng(2)
        mu = DiscreteMeasure.from_density(square8,
                                          rng.random(square8.y_nodes.size) + 0.2)
        nu = DiscreteMeasure.gaussian_blob(square8, (0.7, 0.3), 0.25, floor=0.1)
        w_lp, _ = wasserstein2(mu, nu, square8_cost)
        eps = 1e-3
        w_sk, plan = wasserstein2(mu, nu, square8_cost, method="sinkhorn",
                                  eps=eps)
        n = square8_cost.support.size
        assert w_sk ** 2 >= w_lp ** 2 - eps * np.log(n)
        assert w_sk ** 2 >= w_lp ** 2 - 1e-12  # plan cost dominates the LP
        assert w_sk ** 2 <= w_lp ** 2 + 10 * eps * np.log(n)
        a = mu.mass
        assert np.abs(plan.sum(axis=1) - a).max() < 1e-9

    def test_sinkhorn_no_convergence_raises(self, square8, square8_cost):
        mu = DiscreteMeasure.uniform(square8)
        nu = DiscreteMeasure.gaussian_blob(square8, (0.3, 0.3), 0.2)
        with pytest.raises(NoConvergence):
            wasserstein2(mu, nu, square8_cost, method="sinkhorn", eps=1e-3,
                         max_iter=3)

    def test_size_limit(self, square8, square8_cost, monkeypatch):
        monkeypatch.setattr(et, "EXACT_SUPPORT_CAP", 10)
        mu = DiscreteMeasure.uniform(square8)
        nu = DiscreteMeasure.gaussian_blob(square8, (0.3, 0.3), 0.2)
        with pytest.raises(SizeLimit):
            wasserstein2(mu, nu, square8_cost)


class TestJKO:
    def test_uniform_fixed_point_mirror(self, two_node):
        dom, cost = two_node
        mu = DiscreteMeasure.uniform(dom)
        out, info = jko_step(mu, 0.5, cost, solver="mirror")
        assert np.abs(out.mass - mu.mass).max() < 1e-9

    def test_uniform_fixed_point_scaling(self, square8, square8_cost):
        mu = DiscreteMeasure.uniform(square8)
        out, info = jko_step(mu, 1e-3, square8_cost)
        assert np.abs(out.mass - mu.mass).max() < 5e-4
        assert np.abs(out.mass - mu.mass).sum() < 5e-3

    def test_two_node_against_scalar_oracle(self, two_node):
        dom, cost = two_node
        mu = DiscreteMeasure(dom, np.array([1.0, 0.0]))
        tau = 100.0
        a_star = two_node_jko((1.0, 0.0), dist=1.0, tau=tau)
        out, _ = jko_step(mu, tau, cost, solver="mirror")
        assert abs(out.mass[1] - a_star) < 1e-6
        assert abs(out.mass[1] - 0.5) < 1e-3  # large-tau limit
        out_sc, _ = jko_step(mu, tau, cost, solver="scaling",
                             eps_schedule=(1e-1, 1e-4, 7))
        assert abs(out_sc.mass[1] - a_star) < 1e-3

    def test_objective_decreases(self, square8, square8_cost):
        rng = np.random.default_rng(3)
        mu = DiscreteMeasure.from_density(square8,
                                          rng.random(square8.y_nodes.size) + 0.3)
        tau = 2e-3
        out, _ = jko_step(mu, tau, square8_cost)
        w, _ = wasserstein2(out, mu, square8_cost)
        assert entropy(out) + w ** 2 / (2 * tau) <= entropy(mu) + 1e-9

    def test_no_convergence_reports(self, square8, square8_cost):
        mu = DiscreteMeasure.gaussian_blob(square8, (0.5, 0.5), 0.2, floor=0.05)
        with pytest.raises(NoConvergence):
            jko_step(mu, 1e-3, square8_cost, max_iter=2)


class TestFisher:
    def test_uniform_zero(self, square8):
        assert fisher_information(DiscreteMeasure.uniform(square8)) == 0.0

    def test_chain_hand_value(self, chain3):
        mu = DiscreteMeasure(chain3, np.array([0.5, 0.25, 0.25]))
        rho = np.array([0.5, 0.25, 0.25])
        want = 4 * ((np.sqrt(rho[0]) - np.sqrt(rho[1])) ** 2
                    + (np.sqrt(rho[1]) - np.sqrt(rho[2])) ** 2)
        assert fisher_information(mu) == pytest.approx(want, rel=1e-14)

    def test_mirror_symmetry(self, square8):
        xy = square8.node_xy(square8.y_nodes)
        f = 1.0 + xy[:, 0]
        g = 1.0 + (1.0 - xy[:, 0])
        fi_a = fisher_information(DiscreteMeasure.from_density(square8, f))
        fi_b = fisher_information(DiscreteMeasure.from_density(square8, g))
        assert fi_a == pytest.approx(fi_b, rel=1e-12)

    def test_matches_cheeger_of_root_density(self, square8):
        rng = np.random.default_rng(4)
        mu = DiscreteMeasure.from_density(square8,
                                          rng.random(square8.y_nodes.size) + 0.2)
        op = build_neumann_operator(square8)
        assert fisher_information(mu) == pytest.approx(
            8.0 * cheeger_energy(op, np.sqrt(mu.density)), rel=1e-12)

    def test_zero_only_for_uniform(self, square8):
        mu = DiscreteMeasure.gaussian_blob(square8, (0.5, 0.5), 0.3)
        assert fisher_information(mu) > 1e-6


class TestDescendingSlope:
    def test_uniform_has_zero_slope(self, square8, square8_cost):
        mu = DiscreteMeasure.uniform(square8)
        est = descending_slope_estimate(mu, square8_cost, radius=0.05,
                                        samples=20, rng=0)
        assert est == 0.0

    def test_bounded_by_fisher(self, square8, square8_cost):
        rng = np.random.default_rng(5)
        for seed in range(5):
            f = rng.random(square8.y_nodes.size) + 0.3
            mu = DiscreteMeasure.from_density(square8, f)
            est = descending_slope_estimate(mu, square8_cost, radius=0.02,
                                            samples=20, rng=seed)
            assert est ** 2 <= fisher_information(mu) * 1.05

    def test_heat_direction_approaches_fisher(self, square8, square8_cost):
        mu = DiscreteMeasure.gaussian_blob(square8, (0.45, 0.55), 0.18,
                                           floor=0.2)
        fi = fisher_information(mu)
        radii = np.array([0.02, 0.01, 0.005])
        ests = np.array([
            descending_slope_estimate(mu, square8_cost, radius=r, samples=0,
                                      rng=0)
            for r in radii])
        # linear Richardson extrapolation to radius 0
        slope = (ests[-1] - ests[-2]) / (radii[-1] - radii[-2])
        extr = ests[-1] + slope * (0.0 - radii[-1])
        assert extr >= 0.8 * np.sqrt(fi)


class TestEDEResidual:
    def test_constant_uniform_trajectory(self, square8, square8_cost):
        op = build_neumann_operator(square8)
        uni = 1.0 / op.measure.sum()
        states = np.full((4, op.dimension), uni)
        traj = FlowTrajectory(np.array([0.0, 0.01, 0.02, 0.03]), states)
        res = ede_residual(traj, square8_cost)
        assert np.allclose(res, 0.0, atol=1e-12)

    def test_heat_flow_small_residual(self, square8, square8_cost):
        op = build_neumann_operator(square8)
        mu0 = DiscreteMeasure.gaussian_blob(square8, (0.45, 0.5), 0.15,
                                            floor=0.3)
        times = np.linspace(0.0, 0.02, 9)
        traj = evolve(op, mu0.density, times, dt_max=5e-4)
        res = ede_residual(traj, square8_cost)
        ent_drop = np.abs(traj.diagnostics["entropy"]
                          - traj.diagnostics["entropy"][0])
        sel = ent_drop > 1e-6
        assert np.all(np.abs(res[sel]) <= 0.1 * ent_drop[sel])

    def test_rotation_control_has_positive_residual(self, square8, square8_cost):
        times = np.linspace(0.0, 0.02, 9)
        states = []
        for t in times:
            ang = 2 * np.pi * t / 0.08
            c = (0.5 + 0.2 * np.cos(ang), 0.5 + 0.2 * np.sin(ang))
            states.append(
                DiscreteMeasure.gaussian_blob(square8, c, 0.12, floor=0.1).density)
        traj = FlowTrajectory(times, np.array(states))
        res = ede_residual(traj, square8_cost)
        ent_drop = np.abs([entropy(DiscreteMeasure.from_density(square8, s))
                           for s in traj.states] - res[0])
        assert res[-1] > 0.0
        # far above the gradient-flow residual scale
        assert res[-1] >= 5 * 0.1 * abs(
            entropy(DiscreteMeasure.from_density(square8, traj.states[-1]))
            - entropy(DiscreteMeasure.from_density(square8, traj.states[0])))


class TestConvexityProbe:
    def test_identical_endpoints_zero_margins(self, square8, square8_cost):
        mu = DiscreteMeasure.gaussian_blob(square8, (0.5, 0.5), 0.2)
        rep = entropy_convexity_probe(mu, mu, square8_cost, steps=5)
        assert np.allclose(rep["margins"], 0.0, atol=1e-12)

    def test_two_gaussians_on_convex_square(self, square8, square8_cost):
        mu0 = DiscreteMeasure.gaussian_blob(square8, (0.25, 0.35), 0.12,
                                            floor=0.05)
        mu1 = DiscreteMeasure.gaussian_blob(square8, (0.75, 0.65), 0.12,
                                            floor=0.05)
        rep = entropy_convexity_probe(mu0, mu1, square8_cost, steps=8, K=0.0)
        assert rep["worst_margin"] <= 0.05 * rep["w2"] ** 2

    def test_pacman_ambient_metric_logged_not_failed(self, pacman_32):
        # ambient d on a non-convex region carries no displacement-convexity
        # guarantee; the probe only reports the margins
        cost_d = build_cost_matrix(pacman_32, metric="d")
        mu0 = DiscreteMeasure.gaussian_blob(pacman_32, (0.72, 0.72), 0.05,
                                            floor=0.02)
        mu1 = DiscreteMeasure.gaussian_blob(pacman_32, (0.72, 0.28), 0.05,
                                            floor=0.02)
        rep = entropy_convexity_probe(mu0, mu1, cost_d, steps=6, K=0.0)
        assert np.isfinite(rep["worst_margin"])
