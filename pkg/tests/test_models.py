import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from composite_dfo.errors import InvalidInputError
from composite_dfo.history import History
from composite_dfo.models import build_models
from composite_dfo.problems import get_problem, jacobian, make_problem
from composite_dfo.selections import MinSquares


def _affine(rng, n=3, p=4, lower=None, upper=None):
    A = rng.normal(size=(p, n))
    b = rng.normal(size=p)
    return A, make_problem("affine", lambda x: A @ x + b, lambda x: A, np.zeros(n), lower=lower, upper=upper)


def test_affine_recovered_exactly_with_n_geometry_points(rng):
    A, prob = _affine(rng)
    hist = History(3, 4, MinSquares(4), 100)
    M = build_models(hist, prob, np.zeros(3), 0.1)
    assert np.abs(M.jacobian - A.T).max() <= 1e-10
    assert M.geometry_evals == 3 and hist.evals_used == 4
    assert M.interpolation and M.poised


def test_existing_points_reused(rng):
    A, prob = _affine(rng)
    hist = History(3, 4, MinSquares(4), 100)
    build_models(hist, prob, np.zeros(3), 0.1)
    M = build_models(hist, prob, np.zeros(3), 0.1)
    assert M.geometry_evals == 0


def test_interpolation_conditions(rng):
    prob = get_problem("bard3")
    hist = History(3, prob.p, MinSquares(prob.p), 100)
    x = prob.x0
    M = build_models(hist, prob, x, 0.05)
    assert M.interpolation
    for idx in M.points_used:
        rec = hist.records[idx - 1]
        pred = M.predict(rec.x - x)
        assert np.allclose(pred, rec.Fx, rtol=1e-9, atol=1e-12)


def test_geometry_points_respect_bounds(rng):
    lower, upper = np.array([0.0, -1.0, 0.0]), np.array([0.05, 1.0, 1.0])
    A, prob = _affine(rng, lower=lower, upper=upper)
    hist = History(3, 4, MinSquares(4), 100)
    M = build_models(hist, prob, np.zeros(3), 0.1)
    for r in hist.records:
        assert np.all(r.x >= lower) and np.all(r.x <= upper)
    assert np.abs(M.jacobian - A.T).max() <= 1e-9


def test_zero_width_coordinate(rng):
    lower, upper = np.array([0.0, -1.0]), np.array([0.0, 1.0])
    A, prob = _affine(rng, n=2, p=3, lower=lower, upper=upper)
    hist = History(2, 3, MinSquares(3), 100)
    M = build_models(hist, prob, np.zeros(2), 0.1)
    assert np.array_equal(M.jacobian[0], np.zeros(3))
    assert np.allclose(M.jacobian[1], A[:, 1])


def test_invalid_inputs(rng):
    _, prob = _affine(rng, lower=np.zeros(3), upper=np.ones(3))
    hist = History(3, 4, MinSquares(4), 100)
    with pytest.raises(InvalidInputError):
        build_models(hist, prob, np.zeros(3), 0.0)
    with pytest.raises(InvalidInputError):
        build_models(hist, prob, -np.ones(3), 0.1)


def gradient_error(prob, delta):
    hist = History(prob.n, prob.p, MinSquares(prob.p), 10 * (prob.n + 1))
    M = build_models(hist, prob, prob.x0, delta)
    return np.abs(M.jacobian - jacobian(prob, prob.x0).T).max(axis=0)


@pytest.mark.parametrize("name", ["froth2", "bard3", "box3", "kowosb4", "brden4"])
def test_gradient_error_is_first_order(name):
    prob = get_problem(name)
    deltas = np.array([1e-1, 1e-2, 1e-3])
    errs = np.array([gradient_error(prob, d) for d in deltas])  # (3, p)
    for i in range(prob.p):
        slope = np.polyfit(np.log(deltas), np.log(errs[:, i]), 1)[0]
        assert slope >= 0.9


@given(st.integers(1, 4), st.integers(1, 3), st.floats(1e-3, 1.0), st.integers(0, 2**31))
def test_affine_property(n, p, delta, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(p, n))
    prob = make_problem("aff", lambda x: A @ x, lambda x: A, rng.normal(size=n))
    hist = History(n, p, MinSquares(p), 100)
    # a few scattered points already in the history
    for y in prob.x0 + delta * rng.normal(size=(3, n)):
        hist.evaluate(prob, y)
    M = build_models(hist, prob, prob.x0, delta)
    assert np.abs(M.jacobian - A.T).max() <= 1e-8 * max(1.0, np.abs(A).max())
