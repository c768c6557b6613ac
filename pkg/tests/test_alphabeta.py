import numpy as np
import pytest

from oracles import alphabeta_value_cvx, normal_quantile
from wotbb.alphabeta import alphabeta_objective, compose_optimizer, evaluate_alphabeta, solve_static_alphabeta
from wotbb.errors import ValidationError
from wotbb.measures import Coupling, DiscreteMeasure as D, discretize_gaussian
from wotbb.ot import mcov_value
from wotbb.sbm import solve_sbm
from wotbb.verification import alphabeta_instance, convex_order_pair
from wotbb.wot import solve_barycentric_wot

pm1 = D([-1.0, 1.0])
g2 = discretize_gaussian(2)


def test_examples():
    assert solve_static_alphabeta(D([0.0]), D([0.0]), g2, 1.0, 1.0).value == pytest.approx(0.0, abs=1e-12)
    assert solve_static_alphabeta(D([0.0]), D([1.5]), g2, 2.0, 1.0).value == pytest.approx(4.5, abs=1e-12)
    res = solve_static_alphabeta(D([0.0]), pm1, g2, 1.0, 0.5)
    assert res.value == pytest.approx(-0.5 * normal_quantile(0.75), abs=1e-10)


def test_positive_parameters_required():
    with pytest.raises(ValidationError):
        solve_static_alphabeta(D([0.0]), pm1, g2, 0.0, 1.0)


@pytest.mark.parametrize("index", range(8))
def test_against_conic_oracle(index):
    mu, nu = alphabeta_instance(0, index)
    g = discretize_gaussian(8)
    for alpha, beta in ((1.0, 1.0), (2.0, 0.5)):
        res = solve_static_alphabeta(mu, nu, g, alpha, beta)
        assert res.value == pytest.approx(alphabeta_value_cvx(mu, nu, g, alpha, beta), abs=1e-8)
        assert res.value == pytest.approx(alphabeta_objective(res.triple, alpha, beta), abs=1e-9)
        assert res.triple.marginal_error() <= 1e-9
        # the inner covariance is maximized by the solver
        assert evaluate_alphabeta(res.coupling, g, alpha, beta) == pytest.approx(res.value, abs=1e-9)


@pytest.mark.parametrize("index", range(5))
def test_homogeneity_and_monotonicity(index):
    mu, nu = alphabeta_instance(1, index)
    g = discretize_gaussian(8)
    base = solve_static_alphabeta(mu, nu, g, 1.0, 0.5).value
    assert solve_static_alphabeta(mu, nu, g, 3.0, 1.5).value == pytest.approx(3 * base, abs=1e-8)
    values = [solve_static_alphabeta(mu, nu, g, 1.0, b).value for b in (0.25, 0.5, 1.0, 2.0)]
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("index", range(4))
def test_small_beta_bracket(index):
    mu, nu = alphabeta_instance(2, index)
    g = discretize_gaussian(8)
    wot = solve_barycentric_wot(mu, nu).value
    cap = np.sqrt(max(mu.weights @ mu.points[:, 0] ** 0, 1) * nu.weights @ nu.points[:, 0] ** 2)
    for beta in (1e-2, 1e-3):
        v = solve_static_alphabeta(mu, nu, g, 1.0, beta).value
        assert wot - beta * cap - 1e-9 <= v <= wot + 1e-9


def test_composite_examples():
    wot = solve_barycentric_wot(D([2.0]), pm1)
    eta = wot.projection
    pi = compose_optimizer(wot, solve_sbm(eta, pm1, g2))
    np.testing.assert_allclose(pi.weights, [[0.5, 0.5]], atol=1e-12)
    assert pi.marginal_error() <= 1e-9


@pytest.mark.parametrize("index", range(3))
def test_composite_on_convex_order_pairs(index):
    mu, nu = convex_order_pair(0, index)
    wot = solve_barycentric_wot(mu, nu)
    sbm = solve_sbm(wot.projection, nu, discretize_gaussian(8))
    pi = compose_optimizer(wot, sbm)
    assert pi.marginal_error() <= 1e-9
    np.testing.assert_allclose(pi.barycenters(), mu.points, atol=1e-7)
    assert evaluate_alphabeta(pi, discretize_gaussian(8), 1.0, 1.0) == pytest.approx(-sbm.value, abs=1e-7)


def test_evaluate_examples():
    b = 1.3
    assert evaluate_alphabeta(Coupling(D([0.0]), D([b]), np.ones((1, 1))), g2, 2.0, 1.0) == pytest.approx(2 * b * b)
    pi = Coupling(D([0.0]), pm1, np.array([[0.5, 0.5]]))
    assert evaluate_alphabeta(pi, g2, 1.0, 1.0) == pytest.approx(-mcov_value(pm1, g2))


def test_composite_not_optimal_for_symmetric_two_point():
    # mu = nu: the barycentric map is the identity, the martingale leg is
    # constant and the composite scores 0, while moving mass strictly helps
    mu = nu = pm1
    g = discretize_gaussian(16)
    wot = solve_barycentric_wot(mu, nu)
    composite = evaluate_alphabeta(compose_optimizer(wot, solve_sbm(wot.projection, nu, g)), g, 1.0, 1.0)
    direct = solve_static_alphabeta(mu, nu, g, 1.0, 1.0).value
    assert composite == pytest.approx(0.0, abs=1e-12)
    assert direct < -0.3
