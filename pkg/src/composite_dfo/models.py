"""Affine models of the components of F built from evaluated points.

Points are chosen in the style of POUNDERS: candidates near the center are
screened greedily by how much of their (scaled) displacement lies outside the
span of the points already taken.  Directions that remain uncovered are filled
by evaluating F at new points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SubproblemFailure

C_GEO = 2.0
PIVOT_TOL = 1e-3


@dataclass(frozen=True)
class ComponentModel:
    center: np.ndarray
    value_at_center: float
    gradient: np.ndarray
    radius: float

    def __call__(self, y) -> float:
        return float(self.value_at_center + self.gradient @ (np.asarray(y, float) - self.center))


@dataclass(frozen=True)
class ModelJacobian:
    """Models of all p components at ``center``.

    ``jacobian`` is the n-by-p matrix whose column i is the gradient of the
    model of F_i.  ``interpolation`` is True when exactly n displacements were
    used (so the models interpolate F on them); ``poised`` is False only when
    the box left no room to sample some direction, in which case the model
    gradient has no component along that direction.
    """

    center: np.ndarray
    values: np.ndarray
    jacobian: np.ndarray
    radius: float
    interpolation: bool = True
    poised: bool = True
    points_used: tuple = ()
    geometry_evals: int = 0

    @property
    def n(self) -> int:
        return self.jacobian.shape[0]

    @property
    def p(self) -> int:
        return self.jacobian.shape[1]

    def predict(self, s) -> np.ndarray:
        """M(center + s)."""
        return self.values + np.asarray(s, float) @ self.jacobian

    def component(self, i: int) -> ComponentModel:
        return ComponentModel(self.center, float(self.values[i]), self.jacobian[:, i].copy(), self.radius)

    @property
    def components(self) -> list[ComponentModel]:
        return [self.component(i) for i in range(self.p)]


def _feasible_step(x, u, length, lower, upper) -> float:
    """Largest t in [0, length] with lower <= x + t u <= upper."""
    t = length
    pos = u > 0
    neg = u < 0
    if pos.any():
        t = min(t, float(np.min((upper[pos] - x[pos]) / u[pos])))
    if neg.any():
        t = min(t, float(np.min((lower[neg] - x[neg]) / u[neg])))
    return max(t, 0.0)


class _Basis:
    """Greedy orthonormal basis of accepted scaled displacements."""

    def __init__(self, dim: int, tol: float):
        self.Q = np.zeros((dim, 0))
        self.tol = tol

    @property
    def size(self) -> int:
        return self.Q.shape[1]

    def _residual(self, d):
        r = d - self.Q @ (self.Q.T @ d)
        # second Gram-Schmidt pass for stability
        return r - self.Q @ (self.Q.T @ r)

    def can_add(self, d) -> bool:
        return np.linalg.norm(self._residual(d)) >= self.tol

    def try_add(self, d) -> bool:
        r = self._residual(d)
        nr = np.linalg.norm(r)
        if nr < self.tol:
            return False
        self.Q = np.column_stack([self.Q, r / nr])
        return True

    def complement(self) -> np.ndarray:
        dim = self.Q.shape[0]
        if self.size == 0:
            return np.eye(dim)
        if self.size == dim:
            return np.zeros((dim, 0))
        full, _ = np.linalg.qr(np.column_stack([self.Q, np.eye(dim)]))
        return full[:, self.size:dim]


def build_models(history, problem, center, radius: float, c_geo: float = C_GEO,
                 pivot_tol: float = PIVOT_TOL, max_points: int | None = None) -> ModelJacobian:
    """Gradient-accurate affine models of F on B(center; radius).

    May spend up to n evaluations of F on geometry points; a
    :class:`~composite_dfo.errors.BudgetExhausted` raised by the history
    propagates to the caller.
    """
    x = np.asarray(center, dtype=float)
    if not radius > 0:
        raise InvalidInputError("radius must be positive")
    n = x.size
    lower, upper = problem.lower, problem.upper
    if np.any(x < lower) or np.any(x > upper):
        raise InvalidInputError("model center must be feasible")
    base = history.evaluate(problem, x)
    scale = c_geo * radius
    free = np.flatnonzero(upper - lower > 0)
    nf = free.size
    max_points = 2 * n if max_points is None else int(max_points)

    basis = _Basis(nf, pivot_tol)
    chosen = []
    near = history.points_within(x, scale)
    for rec in near:
        if basis.size == nf:
            break
        if rec is base:
            continue
        if basis.try_add((rec.x - x)[free] / scale):
            chosen.append(rec)

    geometry = 0
    if basis.size < nf:
        dirs = [basis.complement()[:, k] for k in range(nf - basis.size)]
        dirs += [np.eye(nf)[:, i] for i in range(nf)]
        for w in dirs:
            if basis.size == nf:
                break
            u = np.zeros(n)
            u[free] = w
            t_plus = _feasible_step(x, u, radius, lower, upper)
            t_minus = _feasible_step(x, -u, radius, lower, upper)
            t = t_plus if (t_plus >= 0.5 * radius or t_plus >= t_minus) else -t_minus
            if t == 0.0:
                continue
            y = np.clip(x + t * u, lower, upper)
            if not basis.can_add((y - x)[free] / scale):
                continue
            before = history.evals_used
            rec = history.evaluate(problem, y)
            geometry += history.evals_used - before
            # a cache hit may return a neighbouring point; test what we got
            if basis.try_add((rec.x - x)[free] / scale):
                chosen.append(rec)
    poised = basis.size == nf

    interpolation = True
    if len(chosen) < max_points:
        picked = {id(r) for r in chosen}
        for rec in near:
            if len(chosen) >= max_points:
                break
            if rec is base or id(rec) in picked or np.linalg.norm(rec.x - x) > radius:
                continue
            chosen.append(rec)
            interpolation = False

    jac = np.zeros((n, problem.p))
    if chosen and nf:
        D = np.array([(r.x - x)[free] for r in chosen]) / radius
        R = np.array([r.Fx - base.Fx for r in chosen])
        sol, _, rank, _ = np.linalg.lstsq(D, R, rcond=None)
        if poised and rank < nf:
            raise SubproblemFailure("model regression matrix is singular after geometry repair")
        jac[free] = sol / radius
    if not np.isfinite(jac).all():
        raise SubproblemFailure("non-finite model gradient")
    return ModelJacobian(
        center=x.copy(),
        values=base.Fx.copy(),
        jacobian=jac,
        radius=float(radius),
        interpolation=interpolation and len(chosen) == nf,
        poised=poised,
        points_used=tuple(r.eval_index for r in chosen),
        geometry_evals=geometry,
    )
