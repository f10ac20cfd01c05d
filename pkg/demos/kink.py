"""Manifold sampling on f(x) = |x| and on f(x) = x with a lower bound.

Run with ``python3 demos/kink.py``.  Prints the iterate history of MS-P and
the scored stationarity bundle at the final point.
"""
import numpy as np

from composite_dfo import MaxAffine, SolverConfig, make_problem, run_msp
from composite_dfo.bench.scoring import score_stationarity


def show(title, prob, h, budget):
    tr = run_msp(prob, h, SolverConfig(eval_budget=budget))
    print(f"== {title}")
    print(" it   outcome          f            delta")
    for k, it in enumerate(tr.iterations):
        print(f"{k:3d}   {it['outcome']:<15s}  {it['f']:.3e}   {it['delta']:.2e}")
    x = tr.best_x
    b = score_stationarity(tr, prob, h, x, seed=0)
    grads = sorted({round(float(g), 12) for g in b.D.ravel()})
    print(f"best x = {x[0]:.3e} after {len(tr.evals)} evaluations")
    print(f"scored chi_t = {b.chi_t:.3e}; bundle gradients {grads}\n")


if __name__ == "__main__":
    ident = make_problem("abs", lambda x: x.copy(), lambda x: np.eye(1), [0.5])
    show("|x| from 0.5", ident, MaxAffine(np.array([[1.0], [-1.0]]), np.zeros(2)), 50)
    bounded = make_problem("lin", lambda x: x.copy(), lambda x: np.eye(1), [0.5], lower=[0.0], upper=[np.inf])
    show("x on [0, inf) from 0.5", bounded, MaxAffine(np.array([[1.0]]), np.zeros(1)), 30)
