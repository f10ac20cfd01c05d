"""Benchmark inner mappings F, bound generation and benchmark instances.

The mappings come from the More-Garbow-Hillstrom / More-Wild test-set
literature.  Each has a closed-form Jacobian, which is kept behind
:func:`jacobian` so that solvers (which only call ``problem.F``) never see it.
"""
from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import InvalidInputError, MissingPrerequisite, UnsupportedProblem
from .selections import (
    CensoredL1,
    MaxSquares,
    MinSquares,
    PiecewiseQuadraticMax,
    SelectionStructure,
    make_h3_instance,
    make_h4_instance,
    selection_from_dict,
)

H_KINDS = ("h1", "h2", "h3", "h4")
H4_PIECES = 3


@dataclass(frozen=True)
class ProblemInstance:
    name: str
    n: int
    p: int
    F: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    _jacobian: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    @property
    def bounded(self) -> bool:
        return bool(np.isfinite(self.lower).any() or np.isfinite(self.upper).any())

    def with_bounds(self, lower, upper) -> "ProblemInstance":
        return replace(self, lower=np.asarray(lower, float), upper=np.asarray(upper, float))


def jacobian(problem: ProblemInstance, x) -> np.ndarray:
    """Analytic p-by-n Jacobian of ``problem.F`` (benchmark scoring only)."""
    if problem._jacobian is None:
        raise UnsupportedProblem(f"{problem.name} has no analytic Jacobian")
    return np.asarray(problem._jacobian(np.asarray(x, dtype=float)), dtype=float)


def make_problem(name, F, J, x0, p=None, lower=None, upper=None) -> ProblemInstance:
    """Wrap callables into an unconstrained-by-default ProblemInstance."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    if p is None:
        p = np.asarray(F(x0)).size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    return ProblemInstance(name, n, int(p), F, x0, lower, upper, J)


# ---------------------------------------------------------------------------
# data vectors
BARD_Y = np.array([0.14, 0.18, 0.22, 0.25, 0.29, 0.32, 0.35, 0.39,
                   0.37, 0.58, 0.73, 0.96, 1.34, 2.10, 4.39])
KOWOSB_U = np.array([4.0, 2.0, 1.0, 0.5, 0.25, 0.167, 0.125, 0.1, 0.0833, 0.0714, 0.0625])
KOWOSB_Y = np.array([0.1957, 0.1947, 0.1735, 0.1600, 0.0844, 0.0627,
                     0.0456, 0.0342, 0.0323, 0.0235, 0.0246])
OSB1_Y = np.array([0.844, 0.908, 0.932, 0.936, 0.925, 0.908, 0.881, 0.850, 0.818, 0.784,
                   0.751, 0.718, 0.685, 0.658, 0.628, 0.603, 0.580, 0.558, 0.538, 0.522,
                   0.506, 0.490, 0.478, 0.467, 0.457, 0.448, 0.438, 0.431, 0.424, 0.420,
                   0.414, 0.411, 0.406])
OSB2_Y = np.array([1.366, 1.191, 1.112, 1.013, 0.991, 0.885, 0.831, 0.847, 0.786, 0.725,
                   0.746, 0.679, 0.608, 0.655, 0.616, 0.606, 0.602, 0.626, 0.651, 0.724,
                   0.649, 0.649, 0.694, 0.644, 0.624, 0.661, 0.612, 0.558, 0.533, 0.495,
                   0.500, 0.423, 0.395, 0.375, 0.372, 0.391, 0.396, 0.405, 0.428, 0.429,
                   0.523, 0.562, 0.607, 0.653, 0.672, 0.708, 0.633, 0.668, 0.645, 0.632,
                   0.591, 0.559, 0.597, 0.625, 0.739, 0.710, 0.729, 0.720, 0.636, 0.581,
                   0.428, 0.292, 0.162, 0.098, 0.054])


# ---------------------------------------------------------------------------
# mappings and Jacobians

def rosenbrock(x):
    return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])


def rosenbrock_jac(x):
    return np.array([[-20.0 * x[0], 10.0], [-1.0, 0.0]])


def freudenstein_roth(x):
    return np.array([
        -13.0 + x[0] + ((5.0 - x[1]) * x[1] - 2.0) * x[1],
        -29.0 + x[0] + ((1.0 + x[1]) * x[1] - 14.0) * x[1],
    ])


def freudenstein_roth_jac(x):
    return np.array([
        [1.0, 10.0 * x[1] - 3.0 * x[1] ** 2 - 2.0],
        [1.0, 3.0 * x[1] ** 2 + 2.0 * x[1] - 14.0],
    ])


def jennrich_sampson(x, m=10):
    i = np.arange(1, m + 1)
    return 2.0 + 2.0 * i - np.exp(i * x[0]) - np.exp(i * x[1])


def jennrich_sampson_jac(x, m=10):
    i = np.arange(1, m + 1)
    return np.column_stack([-i * np.exp(i * x[0]), -i * np.exp(i * x[1])])


def _bard_parts():
    u = np.arange(1, 16, dtype=float)
    v = 16.0 - u
    w = np.minimum(u, v)
    return u, v, w


def bard(x):
    u, v, w = _bard_parts()
    return BARD_Y - (x[0] + u / (x[1] * v + x[2] * w))


def bard_jac(x):
    u, v, w = _bard_parts()
    den2 = (x[1] * v + x[2] * w) ** 2
    return np.column_stack([-np.ones(15), u * v / den2, u * w / den2])


def box3d(x, m=10):
    t = 0.1 * np.arange(1, m + 1)
    i = np.arange(1, m + 1)
    return np.exp(-t * x[0]) - np.exp(-t * x[1]) + (np.exp(-i) - np.exp(-t)) * x[2]


def box3d_jac(x, m=10):
    t = 0.1 * np.arange(1, m + 1)
    i = np.arange(1, m + 1)
    return np.column_stack([-t * np.exp(-t * x[0]), t * np.exp(-t * x[1]), np.exp(-i) - np.exp(-t)])


def powell_singular(x):
    return np.array([
        x[0] + 10.0 * x[1],
        np.sqrt(5.0) * (x[2] - x[3]),
        (x[1] - 2.0 * x[2]) ** 2,
        np.sqrt(10.0) * (x[0] - x[3]) ** 2,
    ])


def powell_singular_jac(x):
    a = 2.0 * (x[1] - 2.0 * x[2])
    b = 2.0 * np.sqrt(10.0) * (x[0] - x[3])
    r5 = np.sqrt(5.0)
    return np.array([
        [1.0, 10.0, 0.0, 0.0],
        [0.0, 0.0, r5, -r5],
        [0.0, a, -2.0 * a, 0.0],
        [b, 0.0, 0.0, -b],
    ])


def kowalik_osborne(x):
    u = KOWOSB_U
    return KOWOSB_Y - x[0] * (u * u + u * x[1]) / (u * u + u * x[2] + x[3])


def kowalik_osborne_jac(x):
    u = KOWOSB_U
    num = u * u + u * x[1]
    den = u * u + u * x[2] + x[3]
    return np.column_stack([
        -num / den,
        -x[0] * u / den,
        x[0] * num * u / den ** 2,
        x[0] * num / den ** 2,
    ])


def brown_dennis(x, m=20):
    t = np.arange(1, m + 1) / 5.0
    a = x[0] + t * x[1] - np.exp(t)
    b = x[2] + np.sin(t) * x[3] - np.cos(t)
    return a * a + b * b


def brown_dennis_jac(x, m=20):
    t = np.arange(1, m + 1) / 5.0
    a = x[0] + t * x[1] - np.exp(t)
    b = x[2] + np.sin(t) * x[3] - np.cos(t)
    return np.column_stack([2 * a, 2 * a * t, 2 * b, 2 * b * np.sin(t)])


def osborne1(x):
    t = 10.0 * np.arange(33)
    return OSB1_Y - (x[0] + x[1] * np.exp(-t * x[3]) + x[2] * np.exp(-t * x[4]))


def osborne1_jac(x):
    t = 10.0 * np.arange(33)
    e4 = np.exp(-t * x[3])
    e5 = np.exp(-t * x[4])
    return np.column_stack([-np.ones(33), -e4, -e5, t * x[1] * e4, t * x[2] * e5])


def watson(x):
    n = x.size
    t = np.arange(1, 30) / 29.0
    j = np.arange(n)
    powers = t[:, None] ** j[None, :]  # t^(j)
    sum2 = powers @ x
    sum1 = (powers[:, : n - 1] * (j[1:] * x[1:])[None, :]).sum(axis=1)
    out = np.empty(31)
    out[:29] = sum1 - sum2 ** 2 - 1.0
    out[29] = x[0]
    out[30] = x[1] - x[0] ** 2 - 1.0
    return out


def watson_jac(x):
    n = x.size
    t = np.arange(1, 30) / 29.0
    j = np.arange(n)
    powers = t[:, None] ** j[None, :]
    sum2 = powers @ x
    J = np.zeros((31, n))
    J[:29, 1:] = j[1:][None, :] * powers[:, : n - 1]
    J[:29] -= 2.0 * sum2[:, None] * powers
    J[29, 0] = 1.0
    J[30, 0] = -2.0 * x[0]
    J[30, 1] = 1.0
    return J


def linear_full_rank(x, m=45):
    out = np.full(m, -(2.0 * x.sum() / m + 1.0))
    out[: x.size] += x
    return out


def linear_full_rank_jac(x, m=45):
    J = np.full((m, x.size), -2.0 / m)
    J[: x.size] += np.eye(x.size)
    return J


def linear_rank_one(x, m=35):
    return np.arange(1, m + 1) * (np.arange(1, x.size + 1) @ x) - 1.0


def linear_rank_one_jac(x, m=35):
    return np.outer(np.arange(1, m + 1), np.arange(1, x.size + 1)).astype(float)


def _chebyshev_tables(x, m):
    # T_k(y) and T_k'(y) for y = 2x - 1, k = 1..m
    y = 2.0 * x - 1.0
    T = np.zeros((m + 1, x.size))
    dT = np.zeros((m + 1, x.size))
    T[0] = 1.0
    T[1] = y
    dT[1] = 1.0
    for k in range(2, m + 1):
        T[k] = 2.0 * y * T[k - 1] - T[k - 2]
        dT[k] = 2.0 * T[k - 1] + 2.0 * y * dT[k - 1] - dT[k - 2]
    return T[1:], dT[1:]


def chebyquad(x, m=None):
    m = x.size if m is None else m
    T, _ = _chebyshev_tables(x, m)
    out = T.mean(axis=1)
    k = np.arange(1, m + 1)
    even = k % 2 == 0
    out[even] += 1.0 / (k[even] ** 2 - 1.0)
    return out


def chebyquad_jac(x, m=None):
    m = x.size if m is None else m
    _, dT = _chebyshev_tables(x, m)
    return 2.0 * dT / x.size


def brown_almost_linear(x):
    n = x.size
    out = x + x.sum() - (n + 1.0)
    out[-1] = np.prod(x) - 1.0
    return out


def brown_almost_linear_jac(x):
    n = x.size
    J = np.eye(n) + 1.0
    J[-1] = [np.prod(np.delete(x, j)) for j in range(n)]
    return J


def osborne2(x):
    t = np.arange(65) / 10.0
    e1 = np.exp(-t * x[4])
    e2 = np.exp(-((t - x[8]) ** 2) * x[5])
    e3 = np.exp(-((t - x[9]) ** 2) * x[6])
    e4 = np.exp(-((t - x[10]) ** 2) * x[7])
    return OSB2_Y - (x[0] * e1 + x[1] * e2 + x[2] * e3 + x[3] * e4)


def osborne2_jac(x):
    t = np.arange(65) / 10.0
    d9, d10, d11 = t - x[8], t - x[9], t - x[10]
    e1 = np.exp(-t * x[4])
    e2 = np.exp(-(d9 ** 2) * x[5])
    e3 = np.exp(-(d10 ** 2) * x[6])
    e4 = np.exp(-(d11 ** 2) * x[7])
    return np.column_stack([
        -e1, -e2, -e3, -e4,
        t * x[0] * e1,
        x[1] * d9 ** 2 * e2,
        x[2] * d10 ** 2 * e3,
        x[3] * d11 ** 2 * e4,
        -2.0 * x[1] * x[5] * d9 * e2,
        -2.0 * x[2] * x[6] * d10 * e3,
        -2.0 * x[3] * x[7] * d11 * e4,
    ])


def bdqrtic(x):
    n = x.size
    out = np.empty(2 * (n - 4))
    out[: n - 4] = -4.0 * x[: n - 4] + 3.0
    out[n - 4:] = (x[: n - 4] ** 2 + 2 * x[1: n - 3] ** 2 + 3 * x[2: n - 2] ** 2
                   + 4 * x[3: n - 1] ** 2 + 5 * x[-1] ** 2)
    return out


def bdqrtic_jac(x):
    n = x.size
    J = np.zeros((2 * (n - 4), n))
    for i in range(n - 4):
        J[i, i] = -4.0
        row = n - 4 + i
        for k, coef in enumerate((1, 2, 3, 4)):
            J[row, i + k] += 2 * coef * x[i + k]
        J[row, n - 1] += 10 * x[-1]
    return J


def cube(x):
    out = 10.0 * (x - np.roll(x, 1) ** 3)
    out[0] = x[0] - 1.0
    return out


def cube_jac(x):
    n = x.size
    J = 10.0 * np.eye(n)
    J[0, 0] = 1.0
    for i in range(1, n):
        J[i, i - 1] = -30.0 * x[i - 1] ** 2
    return J


# name -> (F, J, x0); order is the suite order
_CATALOG = {
    "rosen2": (rosenbrock, rosenbrock_jac, [-1.2, 1.0]),
    "froth2": (freudenstein_roth, freudenstein_roth_jac, [0.5, -2.0]),
    "jensam2": (jennrich_sampson, jennrich_sampson_jac, [0.3, 0.4]),
    "bard3": (bard, bard_jac, [1.0, 1.0, 1.0]),
    "box3": (box3d, box3d_jac, [0.0, 10.0, 20.0]),
    "powsing4": (powell_singular, powell_singular_jac, [3.0, -1.0, 0.0, 1.0]),
    "kowosb4": (kowalik_osborne, kowalik_osborne_jac, [0.25, 0.39, 0.415, 0.39]),
    "osb1_5": (osborne1, osborne1_jac, [0.5, 1.5, -1.0, 0.01, 0.02]),
    "watson6": (watson, watson_jac, [0.5] * 6),
    "brden4": (brown_dennis, brown_dennis_jac, [25.0, 5.0, -5.0, -1.0]),
    # extended members
    "cheby6": (chebyquad, chebyquad_jac, list(np.arange(1, 7) / 7.0)),
    "linr1_7": (linear_rank_one, linear_rank_one_jac, [1.0] * 7),
    "cube8": (cube, cube_jac, [0.5] * 8),
    "bdqrtic8": (bdqrtic, bdqrtic_jac, [1.0] * 8),
    "cheby8": (chebyquad, chebyquad_jac, list(np.arange(1, 9) / 9.0)),
    "lin9": (linear_full_rank, linear_full_rank_jac, [1.0] * 9),
    "brownal10": (brown_almost_linear, brown_almost_linear_jac, [0.5] * 10),
    "osb2_11": (osborne2, osborne2_jac, [1.3, 0.65, 0.65, 0.7, 0.6, 3.0, 5.0, 7.0, 2.0, 4.5, 5.5]),
}
DESK_SUITE = tuple(list(_CATALOG)[:10])


def get_problem(name: str) -> ProblemInstance:
    try:
        F, J, x0 = _CATALOG[name]
    except KeyError:
        raise InvalidInputError(f"unknown problem {name!r}") from None
    return make_problem(name, F, J, x0)


def suite(full: bool = False) -> list[ProblemInstance]:
    """Benchmark mappings in a fixed order; ``full`` adds the extended members."""
    names = list(_CATALOG) if full else list(DESK_SUITE)
    return [get_problem(name) for name in names]


def make_bounds(x0, x_tilde):
    """Box centered at ``x0`` whose boundary passes through the midpoint of [x0, x_tilde]."""
    x0 = np.asarray(x0, dtype=float)
    x_tilde = np.asarray(x_tilde, dtype=float)
    if x0.shape != x_tilde.shape:
        raise InvalidInputError("x0 and x_tilde must have the same shape")
    x_mid = 0.5 * (x0 + x_tilde)
    half = np.maximum(x0 - x_mid, x_mid - x0)
    if not np.any(half > 0):
        warnings.warn("x0 == x_tilde: the generated box has zero width", RuntimeWarning, stacklevel=2)
    return x0 - half, x0 + half


# ---------------------------------------------------------------------------
# benchmark instances

def instance_seed(name: str, h_kind: str, seed: int) -> int:
    return zlib.crc32(f"{name}|{h_kind}|{seed}".encode())


def make_selection(h_kind: str, problem: ProblemInstance, seed: int) -> SelectionStructure:
    p = problem.p
    if h_kind == "h1":
        return MinSquares(p)
    if h_kind == "h2":
        return MaxSquares(p)
    Fx0 = np.asarray(problem.F(problem.x0), dtype=float)
    if h_kind == "h3":
        return CensoredL1(make_h3_instance(p, seed, center=Fx0))
    if h_kind == "h4":
        return PiecewiseQuadraticMax(make_h4_instance(p, H4_PIECES, seed, center=Fx0))
    raise InvalidInputError(f"unknown h kind {h_kind!r}")


@dataclass(frozen=True)
class BenchmarkInstance:
    problem: ProblemInstance
    h_kind: str
    h: SelectionStructure
    constrained: bool
    seed: int

    @property
    def id(self) -> str:
        base = f"{self.problem.name}+{self.h_kind}"
        return base + "+c" if self.constrained else base

    @property
    def unconstrained_id(self) -> str:
        return f"{self.problem.name}+{self.h_kind}"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "problem": self.problem.name,
            "n": self.problem.n,
            "p": self.problem.p,
            "h_kind": self.h_kind,
            "h": self.h.to_dict(),
            "constrained": self.constrained,
            "seed": self.seed,
            "lower": [float(v) for v in self.problem.lower],
            "upper": [float(v) for v in self.problem.upper],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchmarkInstance":
        problem = get_problem(doc["problem"]).with_bounds(doc["lower"], doc["upper"])
        return cls(problem, doc["h_kind"], selection_from_dict(doc["h"]), bool(doc["constrained"]), int(doc["seed"]))


def build_benchmark(constrained: bool, seed: int, problems=None, best_points=None,
                    h_kinds=H_KINDS) -> list[BenchmarkInstance]:
    """Cross product of problems and outer functions in one setting.

    For ``constrained=True``, ``best_points`` maps unconstrained instance ids
    (``"<problem>+<h>"``) to the best point found there; bounds follow
    :func:`make_bounds` from ``x0`` and that point.
    """
    problems = suite() if problems is None else list(problems)
    if constrained and best_points is None:
        raise MissingPrerequisite("constrained benchmark needs the unconstrained best points")
    out = []
    for problem in problems:
        for h_kind in h_kinds:
            iseed = instance_seed(problem.name, h_kind, seed)
            h = make_selection(h_kind, problem, iseed)
            prob = problem
            if constrained:
                key = f"{problem.name}+{h_kind}"
                if key not in best_points:
                    raise MissingPrerequisite(f"no unconstrained result for {key}")
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    lower, upper = make_bounds(problem.x0, best_points[key])
                prob = problem.with_bounds(lower, upper)
            out.append(BenchmarkInstance(prob, h_kind, h, constrained, iseed))
    return out
