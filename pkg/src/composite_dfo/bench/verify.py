"""Fast self-checks of the main invariants, runnable without the test suite."""
from __future__ import annotations

import numpy as np

from ..history import History
from ..models import build_models
from ..problems import make_problem
from ..selections import (CensoredL1, MaxAffine, MaxSquares, MinSquares, PiecewiseQuadraticMax,
                          make_h3_instance, make_h4_instance)
from ..solvers import SUCCESSFUL, SolverConfig, run_msp
from ..subproblems import (BoundData, GeneratorSet, chi_from_arrays, solve_chi, solve_tr_subproblem,
                           verify_cauchy_decrease)
from .scoring import score_stationarity


def _selections(rng, p):
    return [MinSquares(p), MaxSquares(p), CensoredL1(make_h3_instance(p, int(rng.integers(1 << 30)))),
            PiecewiseQuadraticMax(make_h4_instance(p, 3, int(rng.integers(1 << 30))))]


def check_selection_gradients(cases: int, rng) -> bool:
    eps = 1e-6
    for _ in range(cases):
        p = int(rng.integers(1, 5))
        z = rng.normal(size=p)
        for h in _selections(rng, p):
            for j in list(h.active_indices(z))[:4]:
                g = h.selection_gradient(j, z)
                fd = np.array([(h.selection_value(j, z + eps * e) - h.selection_value(j, z - eps * e)) / (2 * eps)
                               for e in np.eye(p)])
                if not np.allclose(g, fd, rtol=1e-5, atol=1e-5):
                    return False
    return True


def check_chi_closed_forms(cases: int, rng) -> bool:
    ok = True
    for _ in range(cases):
        n = int(rng.integers(1, 4))
        g = rng.normal(size=n)
        res = chi_from_arrays(g[:, None], [0.0], np.full(n, np.inf), np.full(n, np.inf))
        ok &= abs(res.chi - np.linalg.norm(g)) <= 1e-8 * max(1.0, np.linalg.norm(g))
        res = chi_from_arrays(np.column_stack([g, -g]), [0.0, 0.0], np.full(n, np.inf), np.full(n, np.inf))
        ok &= res.chi <= 1e-8 * max(1.0, np.linalg.norm(g))
    # objective x at its lower bound: the bound multiplier absorbs the gradient
    res = chi_from_arrays(np.ones((1, 1)), [0.0], np.zeros(1), np.full(1, np.inf))
    return bool(ok and res.chi <= 1e-8)


def check_tr_contract(cases: int, rng) -> bool:
    for _ in range(cases):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        G = rng.normal(size=(n, m))
        fj = rng.normal(scale=0.1, size=m)
        gen = GeneratorSet.from_arrays(G, fj, float(fj.max()) if rng.random() < 0.5 else float(fj.min()))
        bounds = BoundData(rng.uniform(0, 1, n), rng.uniform(0, 1, n)) if rng.random() < 0.5 \
            else BoundData.unbounded(n)
        delta = float(rng.uniform(0.05, 1.0))
        sol = solve_tr_subproblem(gen, bounds, None, delta)
        s = sol.s
        if np.linalg.norm(s) > delta * (1 + 1e-9) or np.any(s < -bounds.lower_gap - 1e-9) \
                or np.any(s > bounds.upper_gap + 1e-9):
            return False
        if not verify_cauchy_decrease(sol, solve_chi(gen, bounds), delta, 1e-4):
            return False
    return True


def check_affine_models(rng) -> bool:
    n, p = 3, 4
    A = rng.normal(size=(p, n))
    b = rng.normal(size=p)
    prob = make_problem("affine", lambda x: A @ x + b, lambda x: A, np.zeros(n))
    hist = History(n, p, MinSquares(p), 100)
    M = build_models(hist, prob, np.zeros(n), 0.1)
    return bool(np.allclose(M.jacobian, A.T, atol=1e-10) and M.geometry_evals == n)


def check_kink_and_bound() -> bool:
    prob = make_problem("abs", lambda x: x.copy(), lambda x: np.eye(1), [0.5])
    h = MaxAffine(np.array([[1.0], [-1.0]]), np.zeros(2))
    tr = run_msp(prob, h, SolverConfig(eval_budget=50))
    x = tr.best_x
    ok = abs(x[0]) <= 1e-6 and score_stationarity(tr, prob, h, x, 0).chi_t <= 1e-5
    prob = make_problem("lin", lambda x: x.copy(), lambda x: np.eye(1), [0.5], lower=[0.0], upper=[np.inf])
    h = MaxAffine(np.array([[1.0]]), np.zeros(1))
    tr = run_msp(prob, h, SolverConfig(eval_budget=30))
    x = tr.best_x
    return bool(ok and x[0] <= 1e-8 and score_stationarity(tr, prob, h, x, 0).chi_t <= 1e-6)


def check_monotone_trace() -> bool:
    prob = make_problem("abs", lambda x: x.copy(), lambda x: np.eye(1), [0.5])
    h = MaxAffine(np.array([[1.0], [-1.0]]), np.zeros(2))
    tr = run_msp(prob, h, SolverConfig(eval_budget=40))
    fs = [it["f"] for it in tr.iterations]
    succ = [it["outcome"] == SUCCESSFUL for it in tr.iterations]
    for k in range(1, len(fs)):
        if fs[k] > fs[k - 1] or (succ[k - 1] and not fs[k] < fs[k - 1]):
            return False
    return not any(it["pass_cap_hit"] for it in tr.iterations)


def run_checks(quick: bool = False, seed: int = 0, out=print) -> bool:
    rng = np.random.default_rng(seed)
    cases = 20 if quick else 100
    checks = [
        ("selection gradients match finite differences", lambda: check_selection_gradients(cases, rng)),
        ("stationarity closed forms", lambda: check_chi_closed_forms(cases, rng)),
        ("trust-region steps feasible with Cauchy decrease", lambda: check_tr_contract(cases, rng)),
        ("affine F recovered exactly", lambda: check_affine_models(rng)),
        ("kink and bound test problems", check_kink_and_bound),
        ("accepted f nonincreasing", check_monotone_trace),
    ]
    ok_all = True
    for name, fn in checks:
        ok = bool(fn())
        ok_all &= ok
        out(f"{'PASS' if ok else 'FAIL'} {name}")
    return ok_all
