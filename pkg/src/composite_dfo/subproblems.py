"""Generator sets, the primal trust-region subproblem and the stationarity measure.

Both convex subproblems reduce to one parametric program

    P(r) = min_{s, v}  v + 0.5 s^T H s
           s.t.      v >= g_j^T s - a_j   for every generator j,
                     lo <= s <= hi,  ||s|| <= r,

which is solved by a log-barrier interior-point Newton method written here.
The trust-region step is P(Delta) and, with H = 0, the stationarity measure is
chi = -P(1): its Lagrangian dual is exactly the minimization over simplex
weights and bound multipliers, so the barrier multipliers give a feasible
dual point whose objective value is reported as chi.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .errors import InvalidInputError, SubproblemFailure

DEFAULT_TOL = 1e-10
ZERO_GAP = 1e-12  # gaps below ZERO_GAP * radius count as active bounds
BARRIER_FACTOR = 50.0
MAX_NEWTON = 60
CENTER_TOL = 1e-1
CENTER_TOL_FINAL = 1e-14
MAX_OUTER = 60
CHI_ROUNDOFF = 1e-13  # relative to max_j ||g_j||


@dataclass(frozen=True)
class GeneratorSet:
    indices: tuple
    generators: np.ndarray  # (n, m), column j is g_j
    f_j_values: np.ndarray
    betas: np.ndarray
    offsets: np.ndarray
    f_center: float

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def index_set(self) -> frozenset:
        return frozenset(self.indices)

    @classmethod
    def from_arrays(cls, generators, f_j_values, f_center, indices=None) -> "GeneratorSet":
        """Build a generator set from raw generators and piece values."""
        G = np.atleast_2d(np.asarray(generators, dtype=float))
        fj = np.asarray(f_j_values, dtype=float).reshape(-1)
        if G.shape[1] != fj.size:
            raise InvalidInputError("need one piece value per generator column")
        f = float(f_center)
        betas = np.maximum(0.0, fj - f)
        offsets = f - fj + betas
        indices = tuple(range(fj.size)) if indices is None else tuple(int(j) for j in indices)
        return cls(indices, G, fj, betas, offsets, f)


def nonneg_lstsq(A, b, max_iter: int | None = None) -> np.ndarray:
    """argmin ||A x - b|| over x >= 0.

    scipy.optimize.nnls (1.15) returns non-stationary points on a few percent
    of small, nearly degenerate problems, so its answer is checked against the
    optimality conditions and redone by a plain Lawson-Hanson active-set
    method when they fail.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, k = A.shape
    tol = 10 * np.finfo(float).eps * max(m, k) * max(np.abs(A).sum(axis=0).max(initial=0.0), 1.0)
    try:
        x = nnls(A, b)[0]
        w = A.T @ (b - A @ x)
        kkt = 1e3 * tol * max(1.0, np.linalg.norm(b))
        if np.all(x >= 0) and np.all(w <= kkt) and np.all(np.abs(w[x > 0]) <= kkt):
            return x
    except RuntimeError:
        pass
    x = np.zeros(k)
    passive = np.zeros(k, dtype=bool)
    max_iter = 3 * k + 10 if max_iter is None else max_iter
    w = A.T @ (b - A @ x)
    it = 0
    while it < max_iter and (~passive).any() and np.max(np.where(passive, -np.inf, w)) > tol:
        passive[int(np.argmax(np.where(passive, -np.inf, w)))] = True
        while it < max_iter:
            it += 1
            z = np.zeros(k)
            z[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
            if np.all(z[passive] > 0):
                x = z
                break
            bad = passive & (z <= 0)
            alpha = np.min(x[bad] / (x[bad] - z[bad]))
            x = x + alpha * (z - x)
            passive &= x > tol
            x[~passive] = 0.0
        w = A.T @ (b - A @ x)
    return x


def hull_weights(V) -> np.ndarray:
    """Convex weights of the minimum-norm point in the hull of the rows of ``V``.

    Uses the classical reduction to nonnegative least squares:
    min ||[V^T; 1] u - e||, u >= 0, then normalizes u.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    k, n = V.shape
    scale = max(np.abs(V).max(), 1e-300)
    E = np.vstack([V.T / scale, np.ones((1, k))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    u = nonneg_lstsq(E, rhs)
    total = u.sum()
    if not total > 0:
        return np.full(k, 1.0 / k)
    return u / total


@dataclass(frozen=True)
class BoundData:
    lower_gap: np.ndarray
    upper_gap: np.ndarray

    @property
    def l_inf_mask(self) -> np.ndarray:
        return ~np.isfinite(self.lower_gap)

    @property
    def u_inf_mask(self) -> np.ndarray:
        return ~np.isfinite(self.upper_gap)

    @classmethod
    def from_box(cls, x, lower, upper) -> "BoundData":
        x = np.asarray(x, dtype=float)
        lg = x - np.asarray(lower, dtype=float)
        ug = np.asarray(upper, dtype=float) - x
        if np.any(lg < 0) or np.any(ug < 0):
            raise InvalidInputError("x lies outside its bounds")
        return cls(lg, ug)

    @classmethod
    def unbounded(cls, n: int) -> "BoundData":
        return cls(np.full(n, np.inf), np.full(n, np.inf))


@dataclass(frozen=True)
class SubproblemSolution:
    s: np.ndarray
    v: float
    predicted_decrease: float
    feasible: bool


@dataclass(frozen=True)
class ChiResult:
    chi: float
    lambda_a: np.ndarray
    lambda_l: np.ndarray
    lambda_u: np.ndarray
    g_agg: np.ndarray
    step: np.ndarray | None = None  # primal minimizer over the unit ball and box


# ---------------------------------------------------------------------------
# generator sets

def generator_indices(history, h, x, f_center: float, Fx, delta: float, c1: float, c2: float):
    """Index set and piece values selected by the generator-set rule."""
    x = np.asarray(x, dtype=float)
    radius = max(c1 * delta * delta, c2 * delta)
    nearest = {}
    for rec in history.points_within(x, radius):
        dist = float(np.linalg.norm(rec.x - x))
        for j in rec.active:
            if j not in nearest:
                nearest[j] = dist  # records arrive sorted by distance
    chosen = {}
    js = list(nearest)
    for j, fj in zip(js, h.selection_values(js, Fx) if js else []):
        fj = float(fj)
        dist = nearest[j]
        if (fj > f_center and dist <= c1 * delta * delta) or (fj <= f_center and dist <= c2 * delta):
            chosen[j] = fj
    return chosen


def build_generator_set(history, models, h, x, delta: float, c1: float, c2: float) -> GeneratorSet:
    if not delta > 0:
        raise InvalidInputError("delta must be positive")
    if c1 < 0 or c2 < 0:
        raise InvalidInputError("c1 and c2 must be nonnegative")
    rec = history.find(np.asarray(x, dtype=float))
    if rec is None:
        raise InvalidInputError("x has not been evaluated")
    chosen = generator_indices(history, h, rec.x, rec.f, rec.Fx, delta, c1, c2)
    # y = x always qualifies, so the center's own active set is included
    missing = sorted(set(rec.active) - set(chosen))
    if missing:
        chosen.update(zip(missing, (float(v) for v in h.selection_values(missing, rec.Fx))))
    idx = sorted(chosen)
    grads = h.selection_gradients(idx, rec.Fx)  # (m, p)
    G = models.jacobian @ grads.T
    return GeneratorSet.from_arrays(G, [chosen[j] for j in idx], rec.f, idx)


def evaluate_primal_model(gen: GeneratorSet, H, s) -> float:
    s = np.asarray(s, dtype=float)
    if s.shape != (gen.generators.shape[0],):
        raise InvalidInputError("step has the wrong dimension")
    vals = gen.f_j_values + gen.generators.T @ s - gen.betas
    quad = 0.0 if H is None else 0.5 * float(s @ (np.asarray(H, dtype=float) @ s))
    return float(np.max(vals)) + quad - gen.f_center


# ---------------------------------------------------------------------------
# the barrier solver

@dataclass
class _BarrierResult:
    s: np.ndarray
    value: float  # max_j(g_j^T s - a_j) + 0.5 s^T H s at the returned s
    lam: np.ndarray
    lam_l: np.ndarray
    lam_u: np.ndarray
    newton_steps: int


def _solve_barrier(G, a, lower_gap, upper_gap, radius, H=None, tol=DEFAULT_TOL,
                   want_dual: bool = True) -> _BarrierResult:
    """Solve P(radius) by a primal log-barrier method.

    ``tol`` bounds the duality gap relative to ``radius * max_j ||g_j||``.
    Multipliers are normalized so the simplex weights sum to one.
    """
    n, m = G.shape
    lg = np.asarray(lower_gap, dtype=float)
    ug = np.asarray(upper_gap, dtype=float)
    zero_l = lg <= ZERO_GAP * radius
    zero_u = ug <= ZERO_GAP * radius
    fixed = zero_l & zero_u
    free = np.flatnonzero(~fixed)
    nf = free.size
    s_full = np.zeros(n)
    lam_l = np.zeros(n)
    lam_u = np.zeros(n)
    gnorm = float(np.max(np.linalg.norm(G[free], axis=0))) if nf else 0.0
    Hf = None
    if H is not None:
        H = np.asarray(H, dtype=float)
        if np.any(H != 0):
            Hf = H[np.ix_(free, free)]
    if nf == 0 or (gnorm == 0.0 and Hf is None):
        lam = np.zeros(m)
        lam[int(np.argmin(a))] = 1.0
        _fix_bound_multipliers(G @ lam, fixed, lam_l, lam_u)
        return _BarrierResult(s_full, float(np.max(-a)), lam, lam_l, lam_u, 0)

    scale = max(radius * gnorm, np.finfo(float).tiny)
    Gs = (G[free].T * (radius / scale))  # (m, nf) rows g'_j
    As = a / scale
    Hs = None if Hf is None else Hf * (radius * radius / scale)
    lo = np.where(zero_l[free], 0.0, -lg[free] / radius)
    hi = np.where(zero_u[free], 0.0, ug[free] / radius)
    has_lo = np.isfinite(lo)
    has_hi = np.isfinite(hi)
    r0 = 0.5 / np.sqrt(nf)
    sig = 0.5 * (np.maximum(np.where(has_lo, lo, -r0), -r0) + np.minimum(np.where(has_hi, hi, r0), r0))
    v = float(np.max(Gs @ sig - As)) + 1.0
    n_con = m + int(has_lo.sum()) + int(has_hi.sum()) + 1
    t = 1.0
    gap_target = tol
    steps = 0
    best = None

    def slacks(sig, v):
        c = v - Gs @ sig + As
        dl = sig[has_lo] - lo[has_lo]
        du = hi[has_hi] - sig[has_hi]
        q = 1.0 - sig @ sig
        return c, dl, du, q

    def phi(sig, v, t):
        c, dl, du, q = slacks(sig, v)
        if c.min() <= 0 or (dl.size and dl.min() <= 0) or (du.size and du.min() <= 0) or q <= 0:
            return np.inf
        obj = v if Hs is None else v + 0.5 * sig @ (Hs @ sig)
        return t * obj - np.log(c).sum() - np.log(dl).sum() - np.log(du).sum() - np.log(q)

    eye = np.eye(nf)
    lo_idx = np.flatnonzero(has_lo)
    hi_idx = np.flatnonzero(has_hi)
    for _ in range(MAX_OUTER):
        final = n_con / t <= gap_target
        prev_dec = np.inf
        for _ in range(MAX_NEWTON):
            c, dl, du, q = slacks(sig, v)
            w = 1.0 / c
            w2 = w * w
            grad_s = Gs.T @ w + (2.0 / q) * sig
            grad_s[lo_idx] -= 1.0 / dl
            grad_s[hi_idx] += 1.0 / du
            K = np.empty((nf + 1, nf + 1))
            hess = (Gs.T * w2) @ Gs + (2.0 / q) * eye + (4.0 / (q * q)) * np.outer(sig, sig)
            hess[lo_idx, lo_idx] += 1.0 / (dl * dl)
            hess[hi_idx, hi_idx] += 1.0 / (du * du)
            if Hs is not None:
                grad_s += t * (Hs @ sig)
                hess += t * Hs
            K[:nf, :nf] = hess
            K[:nf, nf] = K[nf, :nf] = -(Gs.T @ w2)
            K[nf, nf] = w2.sum()
            grad = np.empty(nf + 1)
            grad[:nf] = grad_s
            grad[nf] = t - w.sum()
            step = _newton_direction(K, grad)
            dec = float(-grad @ step)
            steps += 1
            if not np.isfinite(dec):
                raise SubproblemFailure("barrier Newton step is not finite")
            if dec < 0:
                step = -grad / max(np.abs(np.diag(K)).max(), 1.0)
                dec = float(grad @ grad) / max(np.abs(np.diag(K)).max(), 1.0)
            if 0.5 * dec <= (CENTER_TOL_FINAL if final else CENTER_TOL):
                break
            if dec < 1e-6 and dec > 0.5 * prev_dec:
                break  # rounding floor
            prev_dec = dec
            ds, dv = step[:nf], step[nf]
            alpha = _max_step(c, dv - Gs @ ds, dl, ds[lo_idx], du, -ds[hi_idx], sig, ds, q)
            alpha = min(1.0, 0.99 * alpha)
            if dec < 0.1:
                # inside the quadratic-convergence region the damped test is
                # unnecessary, and at large t it is lost in rounding anyway
                sig, v = sig + alpha * ds, v + alpha * dv
                continue
            phi0 = phi(sig, v, t)
            while alpha > 1e-16:
                new_sig = sig + alpha * ds
                new_v = v + alpha * dv
                if phi(new_sig, new_v, t) <= phi0 - 0.25 * alpha * dec:
                    break
                alpha *= 0.5
            else:
                break
            sig, v = new_sig, new_v
        if want_dual:
            c = v - Gs @ sig + As
            w = 1.0 / c
            lam = w / w.sum()
            dual = _chi_given_weights(Gs.T @ lam, lam @ As, -lo, hi)[0]
            if best is None or dual < best[0]:
                best = (dual, lam)
        if final:
            break
        t = min(t * BARRIER_FACTOR, n_con / gap_target)

    s_full[free] = radius * sig
    value = float(np.max(G.T @ s_full - a))
    if H is not None:
        value += 0.5 * float(s_full @ (H @ s_full))
    if not want_dual:
        return _BarrierResult(s_full, value, None, None, None, steps)
    # every simplex weight vector gives a dual feasible point; keep the best one
    # seen and pair it with its optimal bound multipliers.  The min-norm hull
    # weights do not depend on the central path, which can stall against the
    # ball when zero lies on the boundary of the hull.
    if m > 1:
        mn = hull_weights(Gs)
        dual = _chi_given_weights(Gs.T @ mn, mn @ As, -lo, hi)[0]
        if dual < best[0]:
            best = (dual, mn)
    lam = best[1]
    for strict in (False, True):
        polished = _kkt_weights(Gs, As, sig, lo, hi, best[1], strict)
        if polished is not None:
            dual = _chi_given_weights(Gs.T @ polished, polished @ As, -lo, hi)[0]
            if dual < best[0]:
                best = (dual, polished)
                lam = polished
    _, wf = _chi_given_weights((G[free] @ lam), lam @ a, lg[free], ug[free])
    lam_l[free] = np.maximum(wf, 0.0)
    lam_u[free] = np.maximum(-wf, 0.0)
    _fix_bound_multipliers(G @ lam, fixed, lam_l, lam_u)
    return _BarrierResult(s_full, value, lam, lam_l, lam_u, steps)


def _chi_given_weights(y, lam_a_term, lower_gap, upper_gap):
    """Best bound multipliers for a fixed aggregate ``y = G lambda``.

    Returns ``(value, w)`` where ``w = lambda_l - lambda_u`` minimizes
    ``||y - w|| + sum(max(w, 0) * lower_gap + max(-w, 0) * upper_gap)`` and
    ``value`` adds ``lam_a_term``.  This equals ``lam_a_term - min y^T s`` over
    the unit ball intersected with the box, whose minimizer is
    ``clip(-y / mu)`` for the multiplier ``mu`` found from sorted breakpoints.
    """
    y = np.asarray(y, dtype=float)
    # bound each coordinate runs into when following -y
    b = np.where(y > 0, lower_gap, upper_gap)
    b = np.where(y == 0, 0.0, b)
    ay = np.abs(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(b == 0, np.inf, np.where(np.isinf(b), 0.0, ay / b))
    order = np.argsort(kappa)
    ks = kappa[order]
    y2 = (ay * ay)[order]
    b2 = np.where(np.isinf(b), 0.0, b * b)[order]
    n = y.size
    Y = np.concatenate([[0.0], np.cumsum(y2)])           # free mass of the first m
    B = np.concatenate([np.cumsum(b2[::-1])[::-1], [0.0]])  # clipped mass of the rest
    mu = 0.0
    if B[0] > 1.0 or np.any(ks == 0.0):
        for m in range(1, n + 1):
            rest = 1.0 - B[m]
            if rest <= 0:
                continue
            cand = np.sqrt(Y[m] / rest)
            hi_k = ks[m] if m < n else np.inf
            if ks[m - 1] <= cand <= hi_k or m == n:
                mu = cand
                break
    if mu > 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.clip(-y / mu, -lower_gap, upper_gap)
    else:
        s = np.where(y > 0, -lower_gap, np.where(y < 0, upper_gap, 0.0))
    s = np.where(np.isfinite(s), s, 0.0)
    w = y + mu * s
    w = np.where(np.abs(s) >= np.where(y > 0, lower_gap, upper_gap), w, 0.0)
    gap_cost = np.maximum(w, 0.0) @ np.where(np.isfinite(lower_gap), lower_gap, 0.0) \
        - np.minimum(w, 0.0) @ np.where(np.isfinite(upper_gap), upper_gap, 0.0)
    return float(np.linalg.norm(y - w) + gap_cost + lam_a_term), w


def _kkt_weights(Gs, As, sig, lo, hi, lam, strict: bool = False):
    """Simplex weights from the stationarity conditions at the primal solution.

    Pieces, bounds and the ball that are (nearly) active at ``sig`` enter a
    nonnegative least-squares fit of  sum_j lam_j g_j - l + u + mu sig = 0,
    sum_j lam_j = 1.  ``strict`` keeps only pieces active to rounding level,
    which helps when tiny weights on pieces with small offsets linger.
    Returns None when nothing sensible comes out.
    """
    vals = Gs @ sig - As
    top = vals.max()
    if strict:
        pieces = np.flatnonzero(top - vals <= 1e-9)
    else:
        pieces = np.flatnonzero((top - vals <= 1e-7) | (lam >= 1e-6))
    nf = sig.size
    eye = np.eye(nf)
    cols = [Gs[pieces].T]
    at_lo = np.flatnonzero(np.isfinite(lo) & (sig - lo <= 1e-7))
    at_hi = np.flatnonzero(np.isfinite(hi) & (hi - sig <= 1e-7))
    cols.append(-eye[:, at_lo])
    cols.append(eye[:, at_hi])
    if sig @ sig >= 1.0 - 1e-7:
        cols.append(sig[:, None])
    A = np.hstack(cols)
    k = pieces.size
    row = np.zeros(A.shape[1])
    row[:k] = 1.0
    A = np.vstack([A, row])
    rhs = np.zeros(nf + 1)
    rhs[-1] = 1.0
    x = nonneg_lstsq(A, rhs)
    weights = x[:k]
    total = weights.sum()
    if not total > 0:
        return None
    out = np.zeros_like(lam)
    out[pieces] = weights / total
    return out


def _max_step(c, dc, dl, ddl, du, ddu, sig, ds, q) -> float:
    """Largest step keeping every barrier slack positive (linear ones exactly, ball by its root)."""
    alpha = np.inf
    for val, rate in ((c, dc), (dl, ddl), (du, ddu)):
        neg = rate < 0
        if neg.any():
            alpha = min(alpha, float(np.min(-val[neg] / rate[neg])))
    a = ds @ ds
    if a > 0:
        b = sig @ ds
        alpha = min(alpha, (-b + np.sqrt(b * b + a * q)) / a)
    return alpha


def _newton_direction(K, grad):
    try:
        step = np.linalg.solve(K, -grad)
        if step @ grad < 0:
            return step
        raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        # indefinite (nonconvex H) or numerically singular: regularize
        shift = 1e-8 * max(1.0, np.abs(np.diag(K)).max())
        eye = np.eye(K.shape[0])
        for _ in range(40):
            try:
                L = np.linalg.cholesky(K + shift * eye)
                y = np.linalg.solve(L, -grad)
                return np.linalg.solve(L.T, y)
            except np.linalg.LinAlgError:
                shift *= 10.0
        return -grad


def _fix_bound_multipliers(gl, fixed, lam_l, lam_u):
    """On coordinates pinned by zero gaps the bound multipliers cancel G lambda for free."""
    lam_l[fixed] = np.maximum(0.0, gl[fixed])
    lam_u[fixed] = np.maximum(0.0, -gl[fixed])


def _check_inputs(gen, bounds, tol):
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    n = gen.generators.shape[0]
    if bounds.lower_gap.shape != (n,) or bounds.upper_gap.shape != (n,):
        raise InvalidInputError("bound data has the wrong dimension")
    if np.any(bounds.lower_gap < 0) or np.any(bounds.upper_gap < 0):
        raise InvalidInputError("bound gaps must be nonnegative")
    if gen.size == 0:
        raise InvalidInputError("empty generator set")


# ---------------------------------------------------------------------------
# public subproblem interface

def solution_from_step(gen: GeneratorSet, H, s, bounds: BoundData | None = None,
                       delta: float | None = None, tol: float = 1e-9) -> SubproblemSolution:
    """Wrap a step with the tightest epigraph value and its feasibility flag."""
    s = np.asarray(s, dtype=float)
    v = gen.f_center + float(np.max(gen.generators.T @ s - gen.offsets))
    quad = 0.0 if H is None else 0.5 * float(s @ (np.asarray(H, float) @ s))
    feasible = True
    if delta is not None:
        feasible &= bool(np.linalg.norm(s) <= delta * (1 + tol))
    if bounds is not None:
        feasible &= bool(np.all(s >= -bounds.lower_gap - tol) and np.all(s <= bounds.upper_gap + tol))
    return SubproblemSolution(s, v, gen.f_center - v - quad, feasible)


def solve_tr_subproblem(gen: GeneratorSet, bounds: BoundData, H, delta: float,
                        tol: float = DEFAULT_TOL) -> SubproblemSolution:
    """Minimize the primal model over the trust region intersected with the box.

    ``tol`` is relative to ``delta * max_j ||g_j||``.
    """
    _check_inputs(gen, bounds, tol)
    if not delta > 0:
        raise InvalidInputError("delta must be positive")
    res = _solve_barrier(gen.generators, gen.offsets, bounds.lower_gap, bounds.upper_gap,
                         float(delta), H, tol, want_dual=False)
    sol = solution_from_step(gen, H, res.s, bounds, delta)
    if not sol.feasible:
        raise SubproblemFailure("barrier iterate left the feasible region")
    # never worse than the null step
    if sol.predicted_decrease < 0:
        sol = solution_from_step(gen, H, np.zeros_like(res.s), bounds, delta)
    return sol


def solve_chi(gen: GeneratorSet, bounds: BoundData, tol: float = DEFAULT_TOL) -> ChiResult:
    """Stationarity measure: min over simplex weights and bound multipliers of
    ||G lambda - lambda_l + lambda_u|| + lambda^T a + lambda_l^T (x - l) + lambda_u^T (u - x).

    ``tol`` is relative to ``max_j ||g_j||``.
    """
    _check_inputs(gen, bounds, tol)
    return chi_from_arrays(gen.generators, gen.offsets, bounds.lower_gap, bounds.upper_gap, tol)


def chi_from_arrays(G, a, lower_gap, upper_gap, tol: float = DEFAULT_TOL) -> ChiResult:
    G = np.asarray(G, dtype=float)
    a = np.asarray(a, dtype=float)
    res = _solve_barrier(G, a, lower_gap, upper_gap, 1.0, None, tol)
    g_agg = G @ res.lam - res.lam_l + res.lam_u
    lg = np.where(np.isfinite(lower_gap), lower_gap, 0.0)
    ug = np.where(np.isfinite(upper_gap), upper_gap, 0.0)
    chi = float(np.linalg.norm(g_agg) + res.lam @ a + res.lam_l @ lg + res.lam_u @ ug)
    # values at rounding level are a certificate of stationarity, not a measurement
    gscale = float(np.linalg.norm(G, axis=0).max()) if G.size else 0.0
    if chi <= CHI_ROUNDOFF * gscale:
        chi = 0.0
    return ChiResult(chi, res.lam, res.lam_l, res.lam_u, g_agg, res.s)


def verify_cauchy_decrease(sol: SubproblemSolution, chi: ChiResult, delta: float,
                           kappa_fcd: float = 1e-4, kappa_H: float = 0.0) -> bool:
    """Fraction-of-Cauchy-decrease test; chi / kappa_H counts as +inf when kappa_H = 0."""
    if not 0 < kappa_fcd < 1:
        raise InvalidInputError("kappa_fcd must lie in (0, 1)")
    c = chi.chi
    bound = min(delta, 1.0) if kappa_H == 0 else min(c / kappa_H, delta, 1.0)
    return bool(sol.predicted_decrease >= kappa_fcd * c * bound)


def project_ball_box(y, lo, hi, radius: float, iters: int = 80) -> np.ndarray:
    """Euclidean projection onto {s : ||s|| <= radius, lo <= s <= hi} (lo <= 0 <= hi)."""
    y = np.asarray(y, dtype=float)
    s = np.clip(y, lo, hi)
    ns = np.sqrt(s @ s)
    if ns <= radius:
        return s
    # the ball projection is the answer whenever it already lies in the box
    radial = y * (radius / np.sqrt(y @ y))
    if np.all(radial >= lo) and np.all(radial <= hi):
        return radial
    # s(mu) = clip(y / (1 + mu)) shrinks monotonically toward 0 as mu grows
    left, right = 0.0, 1.0
    while np.linalg.norm(np.clip(y / (1 + right), lo, hi)) > radius:
        right *= 2.0
    for _ in range(iters):
        if right - left <= 1e-15 * (1.0 + right):
            break
        mid = 0.5 * (left + right)
        if np.linalg.norm(np.clip(y / (1 + mid), lo, hi)) > radius:
            left = mid
        else:
            right = mid
    s = np.clip(y / (1 + right), lo, hi)
    return s


def cauchy_step(chi: ChiResult, bounds: BoundData, delta: float) -> np.ndarray:
    """Step of length min(delta, 1) along -g_agg, projected onto ball and box."""
    g = chi.g_agg
    ng = np.linalg.norm(g)
    if ng <= CHI_ROUNDOFF * max(chi.chi, 1.0):
        return np.zeros_like(g)
    y = -min(delta, 1.0) * g / ng
    return project_ball_box(y, -bounds.lower_gap, bounds.upper_gap, delta)


@dataclass(frozen=True)
class StepResult:
    solution: SubproblemSolution
    chi: ChiResult
    cauchy_ok: bool
    used_cauchy: bool


def solve_step(gen: GeneratorSet, bounds: BoundData, delta: float, H=None, kappa_fcd: float = 1e-4,
               kappa_H: float = 0.0, tol: float = DEFAULT_TOL) -> StepResult:
    """Trust-region step and chi, with the Cauchy step as a safeguard."""
    chi = solve_chi(gen, bounds, tol)
    sol = solve_tr_subproblem(gen, bounds, H, delta, tol)
    ok = verify_cauchy_decrease(sol, chi, delta, kappa_fcd, kappa_H)
    used = False
    if not ok:
        alt = solution_from_step(gen, H, cauchy_step(chi, bounds, delta), bounds, delta)
        if alt.predicted_decrease > sol.predicted_decrease:
            sol, used = alt, True
            ok = verify_cauchy_decrease(sol, chi, delta, kappa_fcd, kappa_H)
    return StepResult(sol, chi, ok, used)
