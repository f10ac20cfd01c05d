import json
import warnings

import numpy as np
import pytest

from composite_dfo.errors import InvalidInputError, MissingPrerequisite
from composite_dfo.problems import (BenchmarkInstance, build_benchmark, get_problem, jacobian, make_bounds,
                                    suite)


def _fd_jacobian(F, x, eps=1e-6):
    cols = []
    for e in np.eye(x.size):
        h = eps * max(1.0, abs(float(x @ e)))
        cols.append((F(x + h * e) - F(x - h * e)) / (2 * h))
    return np.array(cols).T


def test_rosenbrock_root():
    prob = get_problem("rosen2")
    assert prob.n == prob.p == 2
    assert np.array_equal(prob.F(np.ones(2)), [0.0, 0.0])


def test_suite_dimensions():
    members = suite()
    assert len(members) >= 10 and len({m.name for m in members}) == len(members)
    for m in members:
        assert 2 <= m.n <= 12 and 2 <= m.p <= 65
    for m in suite(full=True):
        assert 2 <= m.n <= 12 and 2 <= m.p <= 65


@pytest.mark.parametrize("prob", suite(full=True), ids=lambda p: p.name)
def test_jacobian_matches_finite_differences(prob, rng):
    points = [prob.x0] + [prob.x0 + 0.1 * rng.normal(size=prob.n) for _ in range(20)]
    for x in points:
        J = jacobian(prob, x)
        fd = _fd_jacobian(prob.F, x)
        assert J.shape == (prob.p, prob.n)
        scale = max(1.0, np.abs(J).max())
        assert np.abs(J - fd).max() <= 1e-5 * scale
        assert np.isfinite(prob.F(x)).all()


def test_make_bounds_arithmetic():
    # x_mid = (0, 3) comes from x_tilde = 2 x_mid - x0
    lo, hi = make_bounds([1.0, 2.0], [-1.0, 4.0])
    assert np.array_equal(lo, [0.0, 1.0]) and np.array_equal(hi, [2.0, 3.0])


def test_make_bounds_degenerate():
    with pytest.warns(RuntimeWarning):
        lo, hi = make_bounds([1.0, 2.0], [1.0, 2.0])
    assert np.array_equal(lo, hi)


def test_make_bounds_random(rng):
    x0, xt = rng.normal(size=5), rng.normal(size=5)
    lo, hi = make_bounds(x0, xt)
    mid = 0.5 * (x0 + xt)
    assert np.allclose(0.5 * (lo + hi), x0)
    assert np.all(lo <= mid + 1e-15) and np.all(mid <= hi + 1e-15)
    assert np.all(lo < x0) and np.all(x0 < hi)
    on_face = np.isclose(mid, lo, rtol=0, atol=1e-14) | np.isclose(mid, hi, rtol=0, atol=1e-14)
    assert on_face.any()
    with pytest.raises(InvalidInputError):
        make_bounds(x0, xt[:3])


def test_benchmark_counts_and_determinism():
    a = build_benchmark(False, 0)
    b = build_benchmark(False, 0)
    assert len(a) == 40
    assert json.dumps([i.to_dict() for i in a]) == json.dumps([i.to_dict() for i in b])
    assert len({i.id for i in a}) == 40


def test_benchmark_roundtrip():
    for inst in build_benchmark(False, 3)[:8]:
        back = BenchmarkInstance.from_dict(json.loads(json.dumps(inst.to_dict())))
        Fx = inst.problem.F(inst.problem.x0)
        assert back.id == inst.id and back.h.value(Fx) == inst.h.value(Fx)


def test_constrained_build_needs_best_points():
    with pytest.raises(MissingPrerequisite):
        build_benchmark(True, 0)
    best = {f"{p.name}+{h}": p.x0 + 1.0 for p in suite() for h in ("h1", "h2", "h3", "h4")}
    cons = build_benchmark(True, 0, best_points=best)
    assert len(cons) == 40 and all(i.id.endswith("+c") for i in cons)
    for inst in cons:
        assert np.all(inst.problem.lower < inst.problem.x0) and np.all(inst.problem.x0 < inst.problem.upper)


def test_extended_suite_builds():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert len(build_benchmark(False, 0, problems=suite(full=True))) == 4 * len(suite(full=True))
