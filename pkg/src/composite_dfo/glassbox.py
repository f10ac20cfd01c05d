"""Direct minimization of h(M(x + s)) over the trust region and box.

h is known in closed form and M is affine, so the subproblem is cheap to
evaluate but nonsmooth.  A multistart projected-gradient method that follows
the active selection piece (and the minimum-norm element of the active
gradients at kinks) is used; no optimality certificate is claimed.
"""
from __future__ import annotations

import numpy as np

from .errors import SubproblemFailure
from .subproblems import BoundData, GeneratorSet, hull_weights, project_ball_box, solve_tr_subproblem

N_RANDOM_STARTS = 4
MAX_ITERS = 100
MAX_KINK_PIECES = 64


def min_norm_hull_point(V) -> np.ndarray:
    """Minimum-norm point of the convex hull of the rows of ``V``.

    Uses the classical reduction to nonnegative least squares.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    k, n = V.shape
    if k == 1:
        return V[0].copy()
    if k == 2:
        # nearest point of a segment in closed form
        d = V[1] - V[0]
        dd = d @ d
        t = 0.0 if dd == 0 else min(1.0, max(0.0, -(V[0] @ d) / dd))
        return V[0] + t * d
    return hull_weights(V) @ V


def uniform_ball_points(rng, n: int, radius: float, count: int) -> np.ndarray:
    d = rng.standard_normal((count, n))
    d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-300)
    r = radius * rng.random(count) ** (1.0 / n)
    return d * r[:, None]


class _Objective:
    def __init__(self, models, h):
        self.values = models.values
        self.J = models.jacobian
        self.h = h
        self.tol = h.activity_tol

    def z(self, s):
        return self.values + s @ self.J

    def __call__(self, s) -> float:
        return self.h.value(self.z(s))

    def descent_direction(self, s, fval, eps):
        """Minus the min-norm element of the eps-active piece gradients."""
        z = self.z(s)
        tol = max(self.tol, eps / (1.0 + abs(fval)))
        act = sorted(self.h.active_indices(z, tol))
        if len(act) > MAX_KINK_PIECES:
            act = act[:MAX_KINK_PIECES]
        grads = self.h.selection_gradients(act, z) @ self.J.T  # (k, n)
        if len(act) == 1:
            return -grads[0]
        return -min_norm_hull_point(grads)


def _descend(obj, s, fval, lo, hi, delta, max_iters, eps0):
    """Projected eps-steepest descent; eps shrinks by 10 whenever a step fails."""
    step = delta
    eps = eps0
    eps_min = obj.tol * (1.0 + abs(fval))
    for _ in range(max_iters):
        d = obj.descent_direction(s, fval, eps)
        nd = np.sqrt(d @ d)
        moved = False
        if nd > 0 and np.isfinite(nd):
            alpha = step / nd
            for _ in range(30):
                trial = project_ball_box(s + alpha * d, lo, hi, delta)
                diff = trial - s
                nrm2 = diff @ diff
                if nrm2 <= (1e-12 * delta) ** 2:
                    break
                ft = obj(trial)
                if ft < fval - 1e-4 * nrm2 / alpha:
                    moved = True
                    break
                alpha *= 0.5
        if not moved:
            if eps <= eps_min:
                break
            eps = max(0.1 * eps, eps_min)
            continue
        gain = fval - ft
        s, fval = trial, ft
        step = min(2.0 * alpha * nd, delta)
        if gain <= 1e-14 * (1.0 + abs(fval)):
            break
    return s, fval


def solve_glassbox(models, h, x, delta: float, bounds: BoundData, rng=None,
                   n_random: int = N_RANDOM_STARTS, max_iters: int = MAX_ITERS) -> np.ndarray:
    """Approximate minimizer of h(M(x + s)) subject to ||s|| <= delta and the box.

    Never returns a step worse than s = 0 on the model objective.
    """
    n = models.n
    lo = -bounds.lower_gap
    hi = bounds.upper_gap
    obj = _Objective(models, h)
    starts = [np.zeros(n)]
    z0 = models.values
    act = sorted(h.active_indices(z0))[:MAX_KINK_PIECES]
    G = models.jacobian @ h.selection_gradients(act, z0).T
    fj = np.asarray(h.selection_values(act, z0), dtype=float)
    gen = GeneratorSet.from_arrays(G, fj, h.value(z0), act)
    try:
        starts.append(solve_tr_subproblem(gen, bounds, None, delta).s)
    except SubproblemFailure:
        pass
    if rng is None:
        rng = np.random.default_rng(0)
    for y in uniform_ball_points(rng, n, delta, n_random):
        starts.append(project_ball_box(y, lo, hi, delta))

    best_s = np.zeros(n)
    best_f = obj(best_s)
    gscale = np.linalg.norm(G, axis=0).max() if G.size else 0.0
    eps0 = max(delta * gscale, 1e-300)
    for s0 in starts:
        s, fval = _descend(obj, s0, obj(s0), lo, hi, delta, max_iters, eps0)
        if fval < best_f:
            best_s, best_f = s, fval
    return best_s
