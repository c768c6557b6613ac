import numpy as np
import pytest
from hypothesis import given
from scipy.optimize import linear_sum_assignment

from oracles import normal_quantile
from strategies import measures_1d, measures_2d
from wotbb.errors import ValidationError
from wotbb.measures import DiscreteMeasure as D, discretize_gaussian, second_moment
from wotbb.ot import (
    comonotone_coupling,
    mcov,
    mcov_comonotone_1d,
    solve_ot,
    sq_dist,
    t2,
    t2_quantile_1d,
    w2_mcov_identity_check,
)

pm1 = D([-1.0, 1.0])


def test_solve_ot_example():
    res = solve_ot(D([0.0, 1.0]), D([0.0, 1.0]), np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert res.value == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(res.coupling.weights, np.diag([0.5, 0.5]), atol=1e-12)


def test_solve_ot_validation():
    with pytest.raises(ValidationError):
        solve_ot(pm1, pm1, np.zeros((2, 3)))
    with pytest.raises(ValidationError):
        solve_ot(pm1, pm1, np.array([[0.0, np.inf], [1.0, 0.0]]))


def test_t2_examples():
    assert t2(D([0.0]), pm1).value == pytest.approx(1.0, abs=1e-12)
    assert t2(pm1, pm1).value == pytest.approx(0.0, abs=1e-12)
    assert t2(D([2.0]), pm1).value == pytest.approx(5.0, abs=1e-12)


def test_mcov_examples():
    assert mcov(pm1, pm1).value == pytest.approx(1.0, abs=1e-12)
    assert mcov(D([0.0]), pm1).value == pytest.approx(0.0, abs=1e-12)
    assert mcov(pm1, discretize_gaussian(2)).value == pytest.approx(normal_quantile(0.75), abs=1e-12)


def test_comonotone_anti():
    pi = comonotone_coupling(pm1, pm1, anti=True)
    np.testing.assert_allclose(pi, [[0.0, 0.5], [0.5, 0.0]])


@pytest.mark.parametrize("seed", range(10))
def test_t2_against_assignment_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    for d in (1, 2):
        x, y = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        r, c = linear_sum_assignment(sq_dist(x, y))
        ref = sq_dist(x, y)[r, c].mean()
        assert t2(D(x), D(y)).value == pytest.approx(ref, abs=1e-10)


@given(measures_1d(), measures_1d())
def test_lp_matches_closed_forms(rho, varrho):
    assert abs(t2(rho, varrho).value - t2_quantile_1d(rho, varrho)) <= 1e-8
    assert abs(mcov(rho, varrho).value - mcov_comonotone_1d(rho, varrho)) <= 1e-9
    assert w2_mcov_identity_check(rho, varrho) <= 1e-8


@given(measures_2d(), measures_2d())
def test_dual_certificate(rho, varrho):
    cost = sq_dist(rho.points, varrho.points)
    res = solve_ot(rho, varrho, cost)
    assert res.dual_violation(cost) <= 1e-9
    assert res.gap <= 1e-9 * (1 + abs(res.value))
    assert res.coupling.marginal_error() <= 1e-9


@given(measures_2d(), measures_2d())
def test_cauchy_schwarz_and_identity(rho, varrho):
    value = mcov(rho, varrho).value
    assert abs(value) <= np.sqrt(second_moment(rho) * second_moment(varrho)) + 1e-12
    assert w2_mcov_identity_check(rho, varrho) <= 1e-8


def test_deterministic():
    rng = np.random.default_rng(3)
    rho, varrho = D(rng.normal(size=(7, 2))), D(rng.normal(size=(5, 2)))
    a, b = t2(rho, varrho), t2(rho, varrho)
    assert a.value == b.value
    assert np.array_equal(a.coupling.weights, b.coupling.weights)
