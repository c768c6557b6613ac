import numpy as np
import pytest
from hypothesis import given, settings

from oracles import normal_quantile, smoothed_step_quad, step_covariance_quad
from strategies import convex_order_pairs, measures_1d
from wotbb.errors import InfeasibleError, NonConvergenceError
from wotbb.measures import (
    Coupling,
    DiscreteMeasure as D,
    check_convex_order,
    convex_order_1d,
    discretize_gaussian,
    variance,
)
from wotbb.ot import mcov_value, wasserstein2_1d
from wotbb.paths import StepMartingale
from wotbb.sbm import bass_fixed_point_1d, simulate_bass_paths, simulate_leg, solve_sbm
from wotbb.verification import irreducible_pair

pm1 = D([-1.0, 1.0])
g2 = discretize_gaussian(2)


class TestSbmLP:
    def test_spread_from_point(self):
        res = solve_sbm(D([0.0]), pm1, g2)
        assert res.value == pytest.approx(normal_quantile(0.75), abs=1e-12)
        np.testing.assert_allclose(res.martingale_coupling.weights, [[0.5, 0.5]], atol=1e-12)

    def test_equal_marginals_is_identity(self):
        res = solve_sbm(pm1, pm1, g2)
        assert res.value == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(res.martingale_coupling.weights, np.diag([0.5, 0.5]), atol=1e-12)

    def test_infeasible_with_certificate(self):
        with pytest.raises(InfeasibleError) as info:
            solve_sbm(pm1, D([0.0]), g2)
        cert = info.value.certificate
        assert not cert.verdict and cert.margin > 0
        assert cert.replay(pm1, D([0.0])) is False

    @given(convex_order_pairs(max_atoms=3))
    @settings(max_examples=25)
    def test_feasible_triple_and_dual(self, pair):
        mu, nu = pair
        res = solve_sbm(mu, nu, discretize_gaussian(6))
        assert res.triple.marginal_error() <= 1e-9
        assert res.triple.martingale_error() <= 1e-8
        assert res.dual_gap <= 1e-7 * (1 + abs(res.value))
        # inner covariance is already maximal given the (x, y)-marginal
        pi = res.martingale_coupling
        inner = sum(mu.weights[i] * mcov_value(pi.conditional(i), discretize_gaussian(6)) for i in range(mu.size))
        assert res.value == pytest.approx(inner, abs=1e-8)

    @given(convex_order_pairs(max_atoms=3))
    @settings(max_examples=25)
    def test_optimal_against_witness_coupling(self, pair):
        mu, nu = pair
        g = discretize_gaussian(6)
        witness = check_convex_order(mu, nu, tol=1e-8).coupling
        pi = Coupling(mu, nu, witness)
        feasible = sum(mu.weights[i] * mcov_value(pi.conditional(i), g) for i in range(mu.size))
        assert solve_sbm(mu, nu, g).value >= feasible - 1e-8

    @given(measures_1d(max_atoms=4), measures_1d(max_atoms=4))
    @settings(max_examples=25)
    def test_feasible_iff_convex_order(self, mu, nu):
        ordered = check_convex_order(mu, nu, tol=1e-9).verdict
        try:
            solve_sbm(mu, nu, g2)
            feasible = True
        except InfeasibleError:
            feasible = False
        if ordered != feasible:
            assert abs(check_convex_order(mu, nu).margin) <= 1e-7

    def test_permutation_invariance(self):
        pts, w = np.array([0.5, -0.5, 0.0]), np.array([0.2, 0.3, 0.5])
        nu = D([-1.0, 1.0, 2.0], [0.4, 0.45, 0.15])
        shift = nu.weights @ nu.points[:, 0] - w @ pts
        a = solve_sbm(D(pts + shift, w), nu, discretize_gaussian(5)).value
        b = solve_sbm(D((pts + shift)[::-1], w[::-1]), nu, discretize_gaussian(5)).value
        assert a == b


class TestBass:
    def test_point_to_gaussian_has_unit_value(self):
        g = discretize_gaussian(64)
        bass = bass_fixed_point_1d(D([0.0]), g)
        assert bass.value() == pytest.approx(1.0, rel=0.02)
        assert bass.alpha.allclose(D([0.0]))
        assert bass.residual <= 1e-9

    def test_point_to_two_point(self):
        bass = bass_fixed_point_1d(D([0.0]), pm1)
        np.testing.assert_allclose(bass.jumps, [0.0], atol=1e-12)
        assert bass.leg().terminal_law().allclose(pm1, atol=1e-12)
        # Bass and LP agree: sqrt(2/pi) versus the grid-2 value
        assert bass.value() == pytest.approx(np.sqrt(2 / np.pi), abs=1e-12)
        lp = solve_sbm(D([0.0]), pm1, discretize_gaussian(64)).value
        assert bass.value() == pytest.approx(lp, rel=0.02)

    def test_degenerate(self):
        bass = bass_fixed_point_1d(D([0.3]), D([0.3]))
        assert bass.degenerate and bass.value() == 0.0
        np.testing.assert_allclose(bass.phi_grad, 0.3)

    @pytest.mark.parametrize("index", range(3))
    def test_smoothed_map_against_quadrature(self, index):
        mu, nu = irreducible_pair(0, index)
        bass = bass_fixed_point_1d(mu, nu)
        y = nu.points[:, 0]
        for a in np.linspace(-3, 3, 7):
            assert bass.smooth(a)[0] == pytest.approx(smoothed_step_quad(a, y, bass.jumps), abs=1e-10)
        assert np.all(np.diff(bass.phi_grad) >= 0)
        assert np.all(np.diff(bass.smoothed_map) >= 0)
        # fixed point: g pushes alpha onto mu
        np.testing.assert_allclose(bass.smooth(bass.atoms), mu.points[:, 0], atol=1e-9)
        assert bass.leg().terminal_law().allclose(nu, atol=1e-9)
        assert not bass.flagged

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            bass_fixed_point_1d(pm1, D([0.0, 0.1]))

    def test_boundary_atom(self):
        with pytest.raises(NonConvergenceError):
            bass_fixed_point_1d(D([-1.0, 1.0, 0.0], [0.25, 0.25, 0.5]), D([-1.0, 1.0, 0.0], [0.3, 0.3, 0.4]))


class TestLegs:
    def test_trace_value_against_quadrature(self):
        kappa = solve_sbm(D([0.15, 0.35], [0.5, 0.5]), D([-1.0, 0.5, 1.5], [0.3, 0.5, 0.2]),
                          discretize_gaussian(16)).martingale_coupling
        leg = StepMartingale.from_coupling(kappa)
        ref = sum(w * step_covariance_quad(leg.values, th) for w, th in zip(leg.start.weights, leg.thresholds))
        assert leg.trace_value() == pytest.approx(ref, abs=1e-10)
        assert leg.terminal_law().allclose(kappa.nu, atol=1e-9)

    def test_martingale_property_on_paths(self):
        mu, nu = irreducible_pair(0, 1)
        bundle = simulate_bass_paths(bass_fixed_point_1d(mu, nu), 20_000, 20, seed=3)
        x1 = bundle.terminal()[:, 0]
        for i, x in enumerate(mu.points[:, 0]):
            sel = x1[bundle.x0_index == i]
            se = sel.std(ddof=1) / np.sqrt(len(sel))
            assert abs(sel.mean() - x) <= 4 * se + 1e-12
        np.testing.assert_array_equal(bundle.replay(), bundle.X)

    def test_gaussian_terminal_variance(self):
        g = discretize_gaussian(64)
        bundle = simulate_bass_paths(bass_fixed_point_1d(D([0.0]), g), 20_000, 10, seed=1)
        x = bundle.terminal()[:, 0]
        s2 = x.var()
        se = np.sqrt((np.mean(x**4) - s2**2) / len(x))
        assert abs(s2 - variance(g)) <= 3 * se
        assert wasserstein2_1d(D.from_samples(x), g) <= 0.05

    def test_leg_constant(self):
        leg = StepMartingale.constant(D([0.0, 1.0]))
        bundle = simulate_leg(leg, 10, 5, seed=0)
        assert np.all(bundle.trace_term() == 0)
        np.testing.assert_array_equal(bundle.X[:, -1], bundle.x0)
