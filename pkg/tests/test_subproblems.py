import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from composite_dfo.errors import InvalidInputError
from composite_dfo.glassbox import min_norm_hull_point
from composite_dfo.history import History
from composite_dfo.models import ModelJacobian
from composite_dfo.problems import make_problem
from composite_dfo.selections import MaxAffine, MinSquares
from composite_dfo.subproblems import (BoundData, GeneratorSet, build_generator_set, cauchy_step,
                                       chi_from_arrays, evaluate_primal_model, project_ball_box,
                                       solution_from_step, solve_chi, solve_step, solve_tr_subproblem,
                                       verify_cauchy_decrease)
from oracles import chi_cvxpy, grid_minimize_2d, min_norm_by_faces, tr_value_cvxpy

INF = np.inf


def _gen(G, fj=None, f=0.0):
    G = np.atleast_2d(np.asarray(G, float))
    fj = np.zeros(G.shape[1]) if fj is None else fj
    return GeneratorSet.from_arrays(G, fj, f)


def _random_case(rng, n_max=3, m_max=4, bounded=None):
    n, m = int(rng.integers(1, n_max + 1)), int(rng.integers(1, m_max + 1))
    G = rng.normal(size=(n, m))
    fj = rng.normal(scale=0.2, size=m)
    f = float(rng.choice(fj)) if rng.random() < 0.7 else float(fj.max())
    gen = GeneratorSet.from_arrays(G, fj, f)
    if bounded is None:
        bounded = rng.random() < 0.5
    if bounded:
        lg = rng.uniform(0, 1, n) * (rng.random(n) < 0.8)
        ug = np.where(rng.random(n) < 0.3, INF, rng.uniform(0, 1, n))
        bounds = BoundData(lg, ug)
    else:
        bounds = BoundData.unbounded(n)
    return gen, bounds


# -- closed forms --------------------------------------------------------------

def test_chi_single_generator():
    assert solve_chi(_gen([[3.0], [4.0]]), BoundData.unbounded(2)).chi == pytest.approx(5.0, abs=1e-8)


def test_chi_zero_in_hull():
    res = solve_chi(_gen([[1.0, -1.0], [0.0, 0.0]]), BoundData.unbounded(2))
    assert res.chi == pytest.approx(0.0, abs=1e-8)
    assert np.allclose(res.lambda_a, [0.5, 0.5], atol=1e-6)


def test_chi_active_bound_kkt():
    at_lower = BoundData(np.zeros(1), np.full(1, 10.0))
    res = solve_chi(_gen([[1.0]]), at_lower)
    assert res.chi == pytest.approx(0.0, abs=1e-8) and res.lambda_l[0] == pytest.approx(1.0, abs=1e-8)
    assert solve_chi(_gen([[-1.0]]), at_lower).chi == pytest.approx(1.0, abs=1e-8)


def test_chi_two_generator_grid():
    G = np.array([[1.0, -0.5], [0.5, 1.0]])
    a = np.array([0.0, 0.2])
    theta = np.linspace(0, 1, 1_000_001)
    agg = np.outer(theta, G[:, 0]) + np.outer(1 - theta, G[:, 1])
    brute = np.min(np.linalg.norm(agg, axis=1) + (1 - theta) * a[1])
    res = chi_from_arrays(G, a, np.full(2, INF), np.full(2, INF))
    assert res.chi == pytest.approx(brute, abs=1e-9)
    assert res.chi == pytest.approx(0.88421935707, abs=1e-9)  # frozen from the 1-D scan


def test_chi_invariants_at_returned_multipliers(rng):
    for _ in range(30):
        gen, bounds = _random_case(rng)
        res = solve_chi(gen, bounds)
        assert res.chi >= 0
        assert np.all(res.lambda_a >= 0) and res.lambda_a.sum() == pytest.approx(1.0)
        assert np.all(res.lambda_l >= 0) and np.all(res.lambda_u >= 0)
        assert np.all(res.lambda_l[bounds.l_inf_mask] == 0) and np.all(res.lambda_u[bounds.u_inf_mask] == 0)
        agg = gen.generators @ res.lambda_a - res.lambda_l + res.lambda_u
        assert np.allclose(agg, res.g_agg)
        lg = np.where(np.isfinite(bounds.lower_gap), bounds.lower_gap, 0)
        ug = np.where(np.isfinite(bounds.upper_gap), bounds.upper_gap, 0)
        value = np.linalg.norm(agg) + res.lambda_a @ gen.offsets + res.lambda_l @ lg + res.lambda_u @ ug
        assert value == pytest.approx(res.chi, abs=1e-12) or res.chi == 0.0


def test_chi_matches_conic_oracle(rng):
    for _ in range(40):
        gen, bounds = _random_case(rng)
        ref = chi_cvxpy(gen.generators, gen.offsets, bounds.lower_gap, bounds.upper_gap)
        assert solve_chi(gen, bounds).chi == pytest.approx(ref, abs=1e-6)


def test_chi_equals_min_norm_point(rng):
    for _ in range(40):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        G = rng.normal(size=(n, m))
        ref = min_norm_by_faces(G.T)
        chi = solve_chi(_gen(G), BoundData.unbounded(n)).chi
        assert chi == pytest.approx(np.linalg.norm(ref), abs=1e-8)
        assert np.allclose(min_norm_hull_point(G.T), ref, atol=1e-8)


@given(st.integers(0, 2**31), st.floats(1e-3, 1e3))
def test_chi_positive_homogeneity(seed, t):
    rng = np.random.default_rng(seed)
    gen, _ = _random_case(rng, bounded=False)
    full = BoundData.unbounded(gen.generators.shape[0])
    base = chi_from_arrays(gen.generators, gen.offsets, full.lower_gap, full.upper_gap).chi
    scaled = chi_from_arrays(t * gen.generators, t * gen.offsets, full.lower_gap, full.upper_gap).chi
    assert scaled == pytest.approx(t * base, rel=1e-7, abs=1e-9 * t)


@given(st.integers(0, 2**31))
def test_chi_monotone_in_generators(seed):
    rng = np.random.default_rng(seed)
    gen, bounds = _random_case(rng)
    n = gen.generators.shape[0]
    before = chi_from_arrays(gen.generators, gen.offsets, bounds.lower_gap, bounds.upper_gap).chi
    G2 = np.column_stack([gen.generators, rng.normal(size=n)])
    a2 = np.append(gen.offsets, 0.0)
    after = chi_from_arrays(G2, a2, bounds.lower_gap, bounds.upper_gap).chi
    assert after <= before + 1e-8 * (1 + before)


def test_tol_must_be_positive():
    with pytest.raises(InvalidInputError):
        solve_chi(_gen([[1.0]]), BoundData.unbounded(1), tol=0.0)
    with pytest.raises(InvalidInputError):
        solve_tr_subproblem(_gen([[1.0]]), BoundData.unbounded(1), None, 1.0, tol=-1.0)


# -- trust-region subproblem ------------------------------------------------------

def test_tr_steepest_descent_to_ball():
    sol = solve_tr_subproblem(_gen([[1.0], [0.0]]), BoundData.unbounded(2), None, 0.5)
    assert np.allclose(sol.s, [-0.5, 0.0], atol=1e-8) and sol.v == pytest.approx(-0.5, abs=1e-8)


def test_tr_symmetric_kink():
    sol = solve_tr_subproblem(_gen([[1.0, -1.0]]), BoundData.unbounded(1), None, 1.0)
    assert abs(sol.s[0]) <= 1e-8 and sol.v == pytest.approx(0.0, abs=1e-8)


def test_tr_box_binds_first():
    sol = solve_tr_subproblem(_gen([[1.0]]), BoundData(np.array([0.3]), np.array([INF])), None, 1.0)
    assert sol.s[0] == pytest.approx(-0.3, abs=1e-8) and sol.v == pytest.approx(-0.3, abs=1e-8)


def _tr_feasible(sol, gen, bounds, delta, tol=1e-9):
    s = sol.s
    eps = gen.f_j_values + gen.generators.T @ s - gen.betas
    return (np.linalg.norm(s) <= delta * (1 + tol) and np.all(s >= -bounds.lower_gap - tol)
            and np.all(s <= bounds.upper_gap + tol) and np.all(sol.v >= eps - tol))


def test_tr_matches_grid_in_2d(rng):
    for _ in range(15):
        G = rng.normal(size=(2, 3))
        fj = rng.normal(scale=0.2, size=3)
        gen = GeneratorSet.from_arrays(G, fj, float(fj[0]))
        bounds = BoundData(rng.uniform(0, 0.6, 2), rng.uniform(0, 0.6, 2))
        delta = float(rng.uniform(0.2, 1.0))
        sol = solve_tr_subproblem(gen, bounds, None, delta)
        assert _tr_feasible(sol, gen, bounds, delta)

        def fun(S):
            return np.max(S @ G - gen.offsets, axis=1)

        def feas(S):
            return ((np.einsum("ij,ij->i", S, S) <= delta * delta)
                    & np.all(S >= -bounds.lower_gap, axis=1) & np.all(S <= bounds.upper_gap, axis=1))

        ref, _ = grid_minimize_2d(fun, feas, delta)
        val = fun(sol.s[None, :])[0]
        assert val <= ref + 1e-9
        assert val == pytest.approx(ref, abs=1e-6)


def test_tr_matches_conic_oracle(rng):
    for _ in range(30):
        gen, bounds = _random_case(rng)
        delta = float(rng.uniform(0.05, 1.5))
        sol = solve_tr_subproblem(gen, bounds, None, delta)
        ref = tr_value_cvxpy(gen.generators, gen.offsets, bounds.lower_gap, bounds.upper_gap, delta)
        assert sol.v - gen.f_center == pytest.approx(ref, abs=1e-6)


@given(st.integers(0, 2**31), st.floats(1e-3, 2.0))
def test_tr_feasible_with_cauchy_decrease(seed, delta):
    rng = np.random.default_rng(seed)
    gen, bounds = _random_case(rng)
    sol = solve_tr_subproblem(gen, bounds, None, delta)
    assert _tr_feasible(sol, gen, bounds, delta)
    assert verify_cauchy_decrease(sol, solve_chi(gen, bounds), delta, 1e-4)


def test_cauchy_step_feasible_and_decreasing(rng):
    for _ in range(50):
        gen, bounds = _random_case(rng)
        delta = float(rng.uniform(0.05, 2.0))
        chi = solve_chi(gen, bounds)
        assert solution_from_step(gen, None, cauchy_step(chi, bounds, delta), bounds, delta).feasible
        # with every generator at f and no box, the step is steepest descent on the hull
        n, m = gen.generators.shape
        flat = _gen(gen.generators)
        chi = solve_chi(flat, BoundData.unbounded(n))
        sol = solution_from_step(flat, None, cauchy_step(chi, BoundData.unbounded(n), delta),
                                 BoundData.unbounded(n), delta)
        assert sol.predicted_decrease >= min(delta, 1.0) * chi.chi * (1 - 1e-9) - 1e-12


def test_solve_step_reports_certificate(rng):
    gen, bounds = _random_case(rng)
    res = solve_step(gen, bounds, 0.5)
    assert res.cauchy_ok


def test_verify_cauchy_arithmetic():
    from composite_dfo.subproblems import ChiResult, SubproblemSolution
    z = np.zeros(1)
    assert verify_cauchy_decrease(SubproblemSolution(z, 0.0, 0.5, True), ChiResult(5.0, z, z, z, z), 0.5, 1e-4)
    assert not verify_cauchy_decrease(SubproblemSolution(z, 0.0, 0.0, True), ChiResult(1.0, z, z, z, z), 1.0)
    with pytest.raises(InvalidInputError):
        verify_cauchy_decrease(SubproblemSolution(z, 0.0, 0.0, True), ChiResult(1.0, z, z, z, z), 1.0, 1.5)


# -- primal model and generator sets ---------------------------------------------------

def test_primal_model_examples(rng):
    gen = _gen([[1.0], [0.0]])
    assert evaluate_primal_model(gen, None, np.array([-0.5, 0.0])) == pytest.approx(-0.5)
    for _ in range(20):
        g, _ = _random_case(rng)
        n = g.generators.shape[0]
        assert evaluate_primal_model(g, None, np.zeros(n)) <= 1e-15
        s = rng.normal(size=n)
        loop = max(fj + gj @ s - b for fj, gj, b in zip(g.f_j_values, g.generators.T, g.betas)) - g.f_center
        assert evaluate_primal_model(g, None, s) == pytest.approx(loop)


def _piecewise_setup(rng, n_records=10):
    # h = max of 4 affine pieces of z = F(x) = x in 2-D
    A = rng.normal(size=(4, 2))
    b = rng.normal(scale=0.1, size=4)
    h = MaxAffine(A, b)
    prob = make_problem("id", lambda x: x.copy(), lambda x: np.eye(2), np.zeros(2))
    hist = History(2, 2, h, 100)
    x = np.zeros(2)
    hist.evaluate(prob, x)
    for y in 0.3 * rng.normal(size=(n_records, 2)):
        hist.evaluate(prob, y)
    models = ModelJacobian(x, x.copy(), np.eye(2), 0.1)
    return h, hist, models, x


def _brute_force_gen(h, hist, x, delta, c1, c2):
    Fx = x.copy()
    f = h.value(Fx)
    out = set()
    for rec in hist.records:
        d = np.linalg.norm(rec.x - x)
        for j in rec.active:
            fj = h.selection_value(j, Fx)
            if (fj > f and d <= c1 * delta ** 2) or (fj <= f and d <= c2 * delta):
                out.add(j)
    return out | set(h.active_indices(Fx))


def test_generator_set_matches_direct_filter(rng):
    for _ in range(20):
        h, hist, models, x = _piecewise_setup(rng)
        delta, c1, c2 = float(rng.uniform(0.05, 0.6)), float(rng.uniform(0, 2)), float(rng.uniform(0, 2))
        gen = build_generator_set(hist, models, h, x, delta, c1, c2)
        assert set(gen.indices) == _brute_force_gen(h, hist, x, delta, c1, c2)
        assert np.all(gen.betas >= 0) and np.all(gen.offsets >= 0)


def test_generator_set_extreme_case(rng):
    h, hist, models, x = _piecewise_setup(rng)
    gen = build_generator_set(hist, models, h, x, 0.5, 0.0, 0.0)
    assert gen.index_set == h.active_indices(x)


def test_generator_set_threshold_arithmetic():
    # h = min(z_0^2, z_1^2) with F(x) = (x, x - 0.1): piece 1 is inactive at 0
    # (value 0.01 > f = 0) and the only active piece at y = 0.06
    prob = make_problem("shift", lambda x: np.array([x[0], x[0] - 0.1]),
                        lambda x: np.array([[1.0], [1.0]]), np.zeros(1))
    h = MinSquares(2)
    hist = History(1, 2, h, 10)
    hist.evaluate(prob, [0.0])
    hist.evaluate(prob, [0.06])
    models = ModelJacobian(np.zeros(1), np.array([0.0, -0.1]), np.array([[1.0, 1.0]]), 0.1)
    # above f the radius is c1 * delta^2 = 0.01 < 0.06, so piece 1 stays out
    assert set(build_generator_set(hist, models, h, np.zeros(1), 0.1, 1.0, 1.0).indices) == {0}
    # c1 = 10 widens it to 0.1
    gen = build_generator_set(hist, models, h, np.zeros(1), 0.1, 10.0, 1.0)
    assert set(gen.indices) == {0, 1}
    assert gen.betas[list(gen.indices).index(1)] == pytest.approx(0.01)


# -- projection ---------------------------------------------------------------

@given(st.integers(0, 2**31), st.floats(1e-2, 3.0))
def test_projection_is_optimal(seed, radius):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    lo = -rng.uniform(0, 2, n)
    hi = rng.uniform(0, 2, n)
    y = 3 * rng.normal(size=n)
    s = project_ball_box(y, lo, hi, radius)
    assert np.linalg.norm(s) <= radius * (1 + 1e-12) and np.all(s >= lo) and np.all(s <= hi)
    # variational inequality against random feasible points
    for q in rng.normal(size=(50, n)):
        q = np.clip(q, lo, hi)
        nq = np.linalg.norm(q)
        if nq > radius:
            q *= radius / nq
        assert (y - s) @ (q - s) <= 1e-7 * (1 + np.linalg.norm(y))


@given(st.integers(0, 2**31))
def test_nonneg_lstsq_kkt(seed):
    from composite_dfo.subproblems import nonneg_lstsq
    rng = np.random.default_rng(seed)
    m, k = int(rng.integers(1, 7)), int(rng.integers(1, 9))
    A = rng.normal(size=(m, k)) + rng.normal(size=(m, 1))
    if rng.random() < 0.3:
        A[:, -1] = A[:, 0]
    b = rng.normal(size=m)
    x = nonneg_lstsq(A, b)
    w = A.T @ (b - A @ x)
    assert np.all(x >= 0)
    assert w.max() <= 1e-9
    assert np.all(np.abs(w[x > 0]) <= 1e-9)


# scorer bundle from a kinked h3 instance: clusters of nearly equal gradients
# with zero offsets.  The central path alone stalled on it at chi = 0.189.
CLUSTERED_BUNDLE = np.array([
    [-8.104415, -14.321049, 12.626639, 12.626636, -12.913773, 2.142502, -2.429697, -14.321005, -9.104399, -12.913832, -12.913818, -12.913781, -14.321076, 12.626666, -14.321026, 2.931566, -14.321055, 11.219346, -14.321052, 1.524296, 12.626666, 12.626645, -3.836952],
    [-5.043983, -3.226195, 5.391294, 5.391290, -4.226190, -1.285232, 2.450300, -3.226174, -5.043971, -4.226228, -4.226217, -4.226196, -3.226211, 5.391309, -3.226189, 4.758846, -3.226201, 6.391280, -3.226202, 5.758852, 5.391312, 5.391298, 3.450307],
    [-1.861554, -0.987063, 2.679069, 2.679065, -0.987060, -1.191159, 2.883144, -0.987050, -1.861544, -0.987086, -0.987079, -0.987065, -0.987075, 2.679079, -0.987061, 3.875836, -0.987068, 2.679058, -0.987069, 3.875842, 2.679082, 2.679072, 2.883150],
    [-0.069821, 0.394204, 1.064688, 1.064684, 0.394206, -0.768461, 2.227340, 0.394213, -0.069814, 0.394188, 0.394193, 0.394202, 0.394196, 1.064695, 0.394205, 2.404911, 0.394200, 1.064679, 0.394199, 2.404916, 1.064698, 1.064690, 2.227344],
    [0.808764, 1.012555, -0.026183, -0.026186, 1.012557, -0.409646, 1.396009, 1.012561, 0.808769, 1.012543, 1.012547, 1.012554, 1.012549, -0.026178, 1.012556, 1.094128, 1.012552, -0.026191, 1.012552, 1.094133, -0.026175, -0.026182, 1.396012],
    [1.185684, 1.267484, -0.768812, -0.768814, 1.267486, -0.147987, 0.646653, 1.267489, 1.185688, 1.267475, 1.267478, 1.267483, 1.267480, -0.768807, 1.267485, 0.086434, 1.267482, -0.768818, 1.267482, 0.086438, -0.768805, -0.768810, 0.646656]])


def test_chi_clustered_bundle_matches_cvxpy():
    n = CLUSTERED_BUNDLE.shape[0]
    a = np.zeros(CLUSTERED_BUNDLE.shape[1])
    ref = chi_cvxpy(CLUSTERED_BUNDLE, a, np.full(n, INF), np.full(n, INF))
    assert abs(chi_from_arrays(CLUSTERED_BUNDLE, a, np.full(n, INF), np.full(n, INF)).chi - ref) <= 1e-6


@pytest.mark.parametrize("seed", range(40))
def test_chi_near_duplicate_generators(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(2, 7)), int(rng.integers(2, 6))
    base = 5 * rng.normal(size=(n, k))
    G = np.hstack([base[:, [i]] + 1e-5 * rng.normal(size=(n, 6)) for i in range(k)])
    a = np.zeros(G.shape[1])
    inf = np.full(n, INF)
    assert abs(chi_from_arrays(G, a, inf, inf).chi - chi_cvxpy(G, a, inf, inf)) <= 1e-6
