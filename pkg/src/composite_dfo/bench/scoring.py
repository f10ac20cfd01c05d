"""Post-hoc approximate stationarity of solver iterates.

Around a point x_t we draw a fixed pattern of points in a tiny ball, add any
points the method itself evaluated there, and collect the true gradients of
every active selection piece.  The stationarity value chi_t is the same
measure the solvers use, computed on these exact gradients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from ..glassbox import uniform_ball_points
from ..problems import jacobian
from ..subproblems import BoundData, chi_from_arrays

SAMPLE_RADIUS = 1e-5
N_SAMPLES = 50
MAX_PIECES_PER_POINT = 256


@dataclass(frozen=True)
class StationarityBundle:
    center: np.ndarray
    sample: np.ndarray  # (|S_t|, n), center first
    D: np.ndarray  # (n, m) gradients as columns
    a: np.ndarray  # h_j(F(s)) for each column
    offsets: np.ndarray  # max(0, f(x_t) - a)
    chi_t: float
    exact: bool = True  # False: chi_t is only a lower bound, see score_stationarity
    step: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.sample.shape[0]


def sample_pattern(n: int, seed: int, radius: float = SAMPLE_RADIUS, count: int = N_SAMPLES) -> np.ndarray:
    """Offsets shared by every method scored with the same seed."""
    return uniform_ball_points(np.random.default_rng(seed), n, radius, count)


def _bundle_columns(problem, h, points, f_t):
    """Distinct piece gradients over ``points``.

    Repeated gradients keep only the smallest offset, which dominates the
    others in the stationarity measure.
    """
    best = {}
    for y in points:
        Fy = np.asarray(problem.F(y), dtype=float)
        act = sorted(h.active_indices(Fy))[:MAX_PIECES_PER_POINT]
        grads = h.selection_gradients(act, Fy) @ jacobian(problem, y)  # (k, n)
        for g, v in zip(grads, h.selection_values(act, Fy)):
            key = g.tobytes()
            if key not in best or max(0.0, f_t - v) < max(0.0, f_t - best[key][1]):
                best[key] = (g, v)
    cols = [g for g, _ in best.values()]
    vals = np.array([v for _, v in best.values()])
    return np.array(cols).T, vals


def chi_lower_bound(D, offsets, lower_gap, upper_gap, s) -> float:
    """Lower bound on chi from any trial step ``s``.

    chi is minus the optimal value of min max_j(D_j's - offsets_j) over the
    unit ball and box, so every feasible s bounds it from below.  ``s`` is
    pulled into the box, which keeps it in the ball because 0 is feasible.
    """
    s = np.clip(np.asarray(s, dtype=float), -lower_gap, upper_gap)
    nrm = np.linalg.norm(s)
    if nrm > 1.0:
        s = s / nrm
    return float(-np.max(D.T @ s - offsets))


def score_stationarity(trace, problem, h, x_t, seed: int, nearby=None,
                       radius: float = SAMPLE_RADIUS, count: int = N_SAMPLES,
                       screen: float | None = None, hint=None) -> StationarityBundle:
    """Stationarity bundle and chi_t at ``x_t``.

    ``trace`` supplies the points the method evaluated (a RunTrace, an array
    of points, or None).  ``nearby`` may be passed instead to give the trace
    points within ``radius`` directly.

    With ``screen`` set, the exact solve is skipped when a cheap lower bound
    (from the step ``hint`` and the steepest-descent step of the center
    gradient) already exceeds it; the bundle is then marked ``exact=False``
    and chi_t holds that bound.
    """
    x_t = np.asarray(x_t, dtype=float)
    n = problem.n
    if x_t.shape != (n,):
        raise InvalidInputError("x_t has the wrong dimension")
    if nearby is None:
        X = _points_of(trace, n)
        nearby = X[np.linalg.norm(X - x_t, axis=1) <= radius] if X.size else np.empty((0, n))
    pts = [x_t]
    for off in sample_pattern(n, seed, radius, count):
        pts.append(np.clip(x_t + off, problem.lower, problem.upper))
    for y in np.atleast_2d(nearby):
        if y.size and np.max(np.abs(y - x_t)) > 0:
            pts.append(np.asarray(y, float))
    sample = np.array(pts)
    f_t = h.value(np.asarray(problem.F(x_t), dtype=float))
    D, a = _bundle_columns(problem, h, sample, f_t)
    offsets = np.maximum(0.0, f_t - a)
    bounds = BoundData.from_box(x_t, problem.lower, problem.upper)
    if screen is not None:
        g0 = D[:, 0]
        trials = [-g0 / max(np.linalg.norm(g0), 1e-300)]
        if hint is not None:
            trials.append(hint)
        lb = max(chi_lower_bound(D, offsets, bounds.lower_gap, bounds.upper_gap, s) for s in trials)
        # margin covers the solver tolerance of the exact value
        if lb > screen * (1 + 1e-6) + 1e-12:
            return StationarityBundle(x_t.copy(), sample, D, a, offsets, lb, exact=False)
    res = chi_from_arrays(D, offsets, bounds.lower_gap, bounds.upper_gap)
    return StationarityBundle(x_t.copy(), sample, D, a, offsets, float(max(res.chi, 0.0)), step=res.step)


def _points_of(trace, n):
    if trace is None:
        return np.empty((0, n))
    if hasattr(trace, "X"):
        X = trace.X
    else:
        X = np.asarray(trace, dtype=float)
    return X.reshape(-1, n) if X.size else np.empty((0, n))


def chi_profile(trace, problem, h, seed: int, stop_below: float | None = None,
                radius: float = SAMPLE_RADIUS, taus=None):
    """chi_t at every evaluation count where the scored set S_t changes.

    Returns a list of ``(t, chi_t)``; chi_t stays constant between entries.
    x_t is the incumbent by f among the first t evaluations.  Scoring stops
    early once chi_t <= ``stop_below``.

    Passing ``taus`` stops once every tau has been reached and lets entries
    above the largest unreached tau be lower bounds instead of exact values.
    First-solved counts read from the result are unchanged by this.
    """
    X = _points_of(trace, problem.n)
    f = np.array([e["f"] for e in trace.evals], dtype=float) if hasattr(trace, "evals") else None
    if f is None:
        f = np.array([h.value(np.asarray(problem.F(x), float)) for x in X])
    pending = None if taus is None else sorted(float(t) for t in taus)
    out = []
    best = None
    key = None
    hint = None
    for t in range(1, X.shape[0] + 1):
        if best is None or f[t - 1] < f[best]:
            best = t - 1
        near = np.flatnonzero(np.linalg.norm(X[:t] - X[best], axis=1) <= radius)
        new_key = (best, tuple(near))
        if new_key == key:
            continue
        key = new_key
        screen = pending[-1] if pending else None
        bundle = score_stationarity(None, problem, h, X[best], seed, nearby=X[near], radius=radius,
                                    screen=screen, hint=hint)
        if bundle.step is not None:
            hint = bundle.step
        out.append((t, bundle.chi_t))
        if stop_below is not None and bundle.chi_t <= stop_below:
            break
        if pending is not None:
            pending = [tau for tau in pending if bundle.chi_t > tau]
            if not pending:
                break
    return out


def first_solved_from_profile(profile, tau: float):
    if not tau > 0:
        raise InvalidInputError("tau must be positive")
    for t, chi in profile:
        if chi <= tau:
            return int(t)
    return None


def first_solved_eval(trace, scorer, tau: float):
    """Smallest t with chi_t(x_t) <= tau, or None.

    ``scorer`` is either a callable ``scorer(t) -> chi_t`` (evaluated for
    t = 1, 2, ... up to the trace length) or a precomputed
    :func:`chi_profile` list.
    """
    if not tau > 0:
        raise InvalidInputError("tau must be positive")
    if not callable(scorer):
        return first_solved_from_profile(scorer, tau)
    length = len(trace.evals) if hasattr(trace, "evals") else len(trace)
    for t in range(1, length + 1):
        if scorer(t) <= tau:
            return t
    return None
