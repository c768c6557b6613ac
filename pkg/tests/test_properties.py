"""Cross-module invariants checked on random small instances."""

import numpy as np
from hypothesis import given, settings, strategies as st

from strategies import convex_order_pairs, couplings, measures_1d
from wotbb.alphabeta import solve_static_alphabeta
from wotbb.measures import (
    Coupling,
    DiscreteMeasure,
    barycentric_projection,
    check_convex_order,
    discretize_gaussian,
    mean,
    second_moment,
)
from wotbb.ot import mcov_value
from wotbb.sbm import solve_sbm
from wotbb.wot import solve_barycentric_wot

g4 = discretize_gaussian(4)


@given(st.data())
def test_barycentric_image_is_below_target(data):
    mu = data.draw(measures_1d())
    nu = data.draw(measures_1d())
    pi = Coupling(mu, nu, data.draw(couplings(mu, nu)))
    _, img = barycentric_projection(pi)
    assert check_convex_order(img, nu, tol=1e-8).verdict


@given(st.data())
def test_wot_value_is_a_lower_bound(data):
    mu = data.draw(measures_1d())
    nu = data.draw(measures_1d())
    pi = Coupling(mu, nu, data.draw(couplings(mu, nu)))
    b = pi.barycenters()
    cost = mu.weights @ np.sum((b - mu.points) ** 2, axis=1)
    assert solve_barycentric_wot(mu, nu).value <= cost + 1e-9


@given(measures_1d(), measures_1d())
def test_projection_is_idempotent(mu, nu):
    eta = solve_barycentric_wot(mu, nu).projection
    assert solve_barycentric_wot(eta, nu).value <= 1e-8
    assert abs(mean(eta)[0] - mean(nu)[0]) <= 1e-8
    assert second_moment(eta) <= second_moment(nu) + 1e-8


@given(measures_1d(), st.floats(-3, 3))
def test_translation_equivariance(nu, c):
    mu = DiscreteMeasure([0.1, 0.9], [0.4, 0.6])
    shift = lambda r: DiscreteMeasure(r.points + c, r.weights)
    a = solve_barycentric_wot(mu, nu).value
    assert abs(a - solve_barycentric_wot(shift(mu), shift(nu)).value) <= 1e-8 * (1 + a)


@given(convex_order_pairs(max_atoms=3))
@settings(max_examples=20)
def test_sbm_bounded_by_sum_of_row_covariances(pair):
    mu, nu = pair
    res = solve_sbm(mu, nu, g4)
    # each row covariance is at most the covariance with the full target law
    assert res.value <= mcov_value(nu, g4) + 1e-9
    assert res.value >= -1e-9


@given(measures_1d(max_atoms=4), measures_1d(max_atoms=4), st.floats(0.25, 4.0), st.floats(0.25, 4.0))
@settings(max_examples=20)
def test_alphabeta_scaling(mu, nu, alpha, beta):
    v = solve_static_alphabeta(mu, nu, g4, alpha, beta).value
    v2 = solve_static_alphabeta(mu, nu, g4, 2 * alpha, 2 * beta).value
    assert abs(v2 - 2 * v) <= 1e-8 * (1 + abs(v))
    # bracket by the two one-term problems
    lower = alpha * solve_barycentric_wot(mu, nu).value - beta * mcov_value(nu, g4)
    # the independent coupling is feasible with zero covariance
    upper = alpha * float(mu.weights @ (mu.points[:, 0] - mean(nu)[0]) ** 2)
    assert lower - 1e-8 <= v <= upper + 1e-8
