import numpy as np
import pytest

from wotbb.alphabeta import alphabeta_problem
from wotbb.errors import NonConvergenceError
from wotbb.fw import frank_wolfe
from wotbb.measures import DiscreteMeasure as D, discretize_gaussian
from wotbb.ot import transport_lp
from wotbb.wot import wot_problem


def _instance(seed, n=5, m=6):
    rng = np.random.default_rng(seed)
    mu = D(rng.uniform(-2, 2, n), rng.dirichlet(np.ones(n)))
    nu = D(rng.uniform(-2, 2, m), rng.dirichlet(np.ones(m)))
    return mu, nu


@pytest.mark.parametrize("seed", range(8))
def test_sorting_lmo_matches_lp(seed):
    mu, nu = _instance(seed)
    prob = alphabeta_problem(mu, nu, discretize_gaussian(4), 1.0, 0.7)
    rng = np.random.default_rng(100 + seed)
    P = np.outer(prob.source_weights, prob.y_weights) * rng.uniform(0.5, 1.5, (len(prob.source_weights), nu.size))
    grad = prob.gradient(P)
    vertex = prob.lmo(P, grad)
    plan, _ = transport_lp(prob.source_weights, prob.y_weights, grad)
    assert np.sum(grad * vertex) == pytest.approx(np.sum(grad * plan), abs=1e-12)
    np.testing.assert_allclose(vertex.sum(axis=1), prob.source_weights, atol=1e-15)
    np.testing.assert_allclose(vertex.sum(axis=0), prob.y_weights, atol=1e-15)


@pytest.mark.parametrize("seed", range(6))
def test_history_monotone_and_gap_certifies(seed):
    mu, nu = _instance(seed)
    prob = wot_problem(mu, nu)
    res = frank_wolfe(prob, tol=1e-12)
    h = np.asarray(res.history)
    assert np.all(np.diff(h) <= 1e-12 * (1 + np.abs(h[:-1])))
    # a looser solve is above the tight one by at most its own gap
    loose = frank_wolfe(prob, tol=1e-4, polish_every=0, max_iter=10_000)
    assert loose.value - res.value <= loose.fw_gap + 1e-12
    assert loose.value >= res.value - 1e-12


def test_nonconvergence_reports_gap():
    mu, nu = _instance(1)
    with pytest.raises(NonConvergenceError) as info:
        frank_wolfe(wot_problem(mu, nu), tol=1e-12, max_iter=0)
    assert info.value.last_gap > 0


def test_face_minimizer_decreases_objective():
    mu, nu = _instance(2)
    prob = wot_problem(mu, nu)
    P = np.outer(mu.weights, nu.weights)
    D_, _, _, bounded = prob.face_minimizer(P, P > 0)
    assert np.allclose(D_.sum(axis=0), 0, atol=1e-12) and np.allclose(D_.sum(axis=1), 0, atol=1e-12)
    t = 1.0 if bounded else 1e-3
    Q = P + t * D_
    if np.all(Q >= 0):
        assert prob.objective(Q) <= prob.objective(P) + 1e-14
