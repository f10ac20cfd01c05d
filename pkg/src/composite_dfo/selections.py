"""Outer functions h written as continuous selections.

A continuous selection is a continuous ``h`` that agrees at every point with one
of finitely many smooth selection functions ``h_j``.  Each class here exposes the
value of ``h``, the individual ``h_j`` and their gradients, and the set of
essentially active indices at a point.  Selection indices are 0-based integers.

Four benchmark mappings are provided:

* ``MinSquares``            h1(z) = min_i z_i^2
* ``MaxSquares``            h2(z) = max_i z_i^2
* ``CensoredL1``            h3(z) = sum_i |d_i - max(z_i, c_i)|
* ``PiecewiseQuadraticMax`` h4(z) = max_i (z - z_i)^T Q_i (z - z_i) + b_i

plus ``MaxAffine`` (a pointwise max of affine pieces), which is handy for small
hand-checkable problems such as ``|x| = max(x, -x)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

DEFAULT_ACTIVITY_TOL = 1e-8
MAX_H3_ACTIVE = 512  # cap on listed censored-L1 pieces at heavy ties


class SelectionStructure:
    """Base class for continuous selections.

    Subclasses implement ``_pieces`` (all selection values, for small
    ``n_sel``) or override ``value``/``selection_value``/``active_indices``.
    Instances are immutable after construction.
    """

    kind = "abstract"

    def __init__(self, p: int, activity_tol: float = DEFAULT_ACTIVITY_TOL):
        if int(p) < 1:
            raise InvalidInputError("p must be positive")
        self.p = int(p)
        self.activity_tol = float(activity_tol)

    # -- input checking -------------------------------------------------
    def _check_z(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.p,):
            raise InvalidInputError(f"expected z of shape ({self.p},), got {z.shape}")
        if np.isnan(z).any():
            raise InvalidInputError("z contains NaN")
        return z

    def _check_index(self, j) -> int:
        j = int(j)
        if not 0 <= j < self.n_sel:
            raise InvalidInputError(f"selection index {j} out of range [0, {self.n_sel})")
        return j

    # -- generic implementations over an explicit piece list ---------------
    @property
    def n_sel(self) -> int:
        raise NotImplementedError

    def _pieces(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _reduce(self, pieces: np.ndarray) -> float:
        raise NotImplementedError

    def value(self, z) -> float:
        return float(self._reduce(self._pieces(self._check_z(z))))

    def selection_value(self, j, z) -> float:
        return float(self._pieces(self._check_z(z))[self._check_index(j)])

    def selection_values(self, js, z) -> np.ndarray:
        z = self._check_z(z)
        pieces = self._pieces(z)
        return np.array([pieces[self._check_index(j)] for j in js], dtype=float)

    def selection_gradient(self, j, z) -> np.ndarray:
        raise NotImplementedError

    def selection_gradients(self, js, z) -> np.ndarray:
        """Stacked gradients, shape ``(len(js), p)``."""
        z = self._check_z(z)
        out = np.empty((len(js), self.p))
        for row, j in enumerate(js):
            out[row] = self.selection_gradient(j, z)
        return out

    def active_indices(self, z, tol: float | None = None) -> frozenset:
        tol = self.activity_tol if tol is None else float(tol)
        pieces = self._pieces(self._check_z(z))
        val = self._reduce(pieces)
        slack = tol * (1.0 + abs(val))
        return frozenset(int(j) for j in np.flatnonzero(np.abs(pieces - val) <= slack))

    def evaluate(self, z, tol: float | None = None):
        """Return ``(h(z), Act(z))``."""
        z = self._check_z(z)
        return self.value(z), self.active_indices(z, tol)

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        raise NotImplementedError


class MinSquares(SelectionStructure):
    """h1(z) = min_i z_i^2; selection j is z_j^2."""

    kind = "h1"

    @property
    def n_sel(self):
        return self.p

    def _pieces(self, z):
        return z * z

    def _reduce(self, pieces):
        return pieces.min()

    def selection_gradient(self, j, z):
        z = self._check_z(z)
        g = np.zeros(self.p)
        j = self._check_index(j)
        g[j] = 2.0 * z[j]
        return g

    def to_dict(self):
        return {"kind": self.kind, "p": self.p, "activity_tol": self.activity_tol}


class MaxSquares(MinSquares):
    """h2(z) = max_i z_i^2; selection j is z_j^2."""

    kind = "h2"

    def _reduce(self, pieces):
        return pieces.max()


class MaxAffine(SelectionStructure):
    """h(z) = max_j (A_j . z + b_j)."""

    kind = "max_affine"

    def __init__(self, A, b, activity_tol: float = DEFAULT_ACTIVITY_TOL):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise InvalidInputError("A and b disagree on the number of pieces")
        super().__init__(A.shape[1], activity_tol)
        self.A = A
        self.b = b

    @property
    def n_sel(self):
        return self.A.shape[0]

    def _pieces(self, z):
        return self.A @ z + self.b

    def _reduce(self, pieces):
        return pieces.max()

    def selection_gradient(self, j, z):
        self._check_z(z)
        return self.A[self._check_index(j)].copy()

    def to_dict(self):
        return {
            "kind": self.kind,
            "p": self.p,
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "activity_tol": self.activity_tol,
        }


@dataclass(frozen=True)
class CensoredL1Instance:
    c: np.ndarray
    d: np.ndarray
    seed: int | None = None


class CensoredL1(SelectionStructure):
    """h3(z) = sum_i |d_i - max(z_i, c_i)|.

    The 4**p selection pieces are never enumerated.  Piece ``j`` is written in
    base 4, one digit per coordinate: bit 0 says whether the coordinate uses
    ``z_i`` (0) or the censor ``c_i`` (1), bit 1 gives the sign of the
    absolute value (0 for ``d_i - m_i``, 1 for ``m_i - d_i``).
    """

    kind = "h3"

    def __init__(self, instance: CensoredL1Instance, activity_tol: float = DEFAULT_ACTIVITY_TOL):
        c = np.asarray(instance.c, dtype=float)
        d = np.asarray(instance.d, dtype=float)
        if c.shape != d.shape or c.ndim != 1:
            raise InvalidInputError("c and d must be vectors of equal length")
        if not (np.isfinite(c).all() and np.isfinite(d).all()):
            raise InvalidInputError("c and d must be finite")
        super().__init__(c.size, activity_tol)
        self.c = c
        self.d = d
        self.seed = instance.seed

    @property
    def n_sel(self):
        return 4**self.p

    def _digits(self, j: int):
        j = self._check_index(j)
        codes = np.empty(self.p, dtype=np.int64)
        for i in range(self.p):
            j, codes[i] = divmod(j, 4)
        use_censor = (codes & 1).astype(bool)
        sign = np.where(codes & 2, -1.0, 1.0)
        return use_censor, sign

    def value(self, z):
        z = self._check_z(z)
        return float(np.sum(np.abs(self.d - np.maximum(z, self.c))))

    def selection_value(self, j, z):
        z = self._check_z(z)
        use_censor, sign = self._digits(j)
        m = np.where(use_censor, self.c, z)
        return float(np.sum(sign * (self.d - m)))

    def _digit_table(self, js):
        """Base-4 digits of many indices at once, shape ``(len(js), p)``."""
        js = [self._check_index(j) for j in js]
        if self.p <= 31:
            # 4**31 still fits in int64
            return (np.array(js, dtype=np.int64)[:, None] // 4 ** np.arange(self.p, dtype=np.int64)) % 4
        powers = np.array([4**i for i in range(self.p)], dtype=object)
        return ((np.array(js, dtype=object)[:, None] // powers) % 4).astype(np.int64)

    def selection_values(self, js, z):
        z = self._check_z(z)
        if len(js) == 0:
            return np.empty(0)
        codes = self._digit_table(js)
        m = np.where(codes & 1, self.c, z)
        sign = np.where(codes & 2, -1.0, 1.0)
        return np.sum(sign * (self.d - m), axis=1)

    def selection_gradient(self, j, z):
        self._check_z(z)
        use_censor, sign = self._digits(j)
        return np.where(use_censor, 0.0, -sign)

    def selection_gradients(self, js, z):
        self._check_z(z)
        if len(js) == 0:
            return np.empty((0, self.p))
        codes = self._digit_table(js)
        return np.where(codes & 1, 0.0, np.where(codes & 2, 1.0, -1.0))

    def active_indices(self, z, tol=None):
        z = self._check_z(z)
        tol = self.activity_tol if tol is None else float(tol)
        val = self.value(z)
        # per-coordinate slack keeps the summed deviation within tol*(1+|h|)
        slack = tol * (1.0 + abs(val)) / (3.0 * self.p)
        primary = []
        alternatives = []
        for zi, ci, di in zip(z, self.c, self.d):
            m = max(zi, ci)
            first = (1 if zi < ci else 0) + (2 if di - m < 0 else 0)
            opts = []
            branches = []
            if zi >= ci - slack:
                branches.append((0, zi))
            if zi <= ci + slack:
                branches.append((1, ci))
            for censor_bit, mi in branches:
                r = di - mi
                if r >= -slack:
                    opts.append(censor_bit)
                if r <= slack:
                    opts.append(censor_bit + 2)
            primary.append(first)
            alternatives.append([o for o in opts if o != first])
        # ties can make the active set exponentially large; list pieces by how
        # many coordinates leave the branch realized at z and stop at the cap
        tied = [i for i, alt in enumerate(alternatives) if alt]
        active = set()
        for r in range(len(tied) + 1):
            for subset in itertools.combinations(tied, r):
                for choice in itertools.product(*(alternatives[i] for i in subset)):
                    codes = list(primary)
                    for i, code in zip(subset, choice):
                        codes[i] = code
                    j = 0
                    for code in reversed(codes):
                        j = 4 * j + code
                    active.add(j)
                    if len(active) >= MAX_H3_ACTIVE:
                        return frozenset(active)
        return frozenset(active)

    def to_dict(self):
        return {
            "kind": self.kind,
            "p": self.p,
            "seed": self.seed,
            "c": self.c.tolist(),
            "d": self.d.tolist(),
            "activity_tol": self.activity_tol,
        }


@dataclass(frozen=True)
class PiecewiseQuadraticInstance:
    Q: np.ndarray  # (l, p, p)
    centers: np.ndarray  # (l, p)
    b: np.ndarray  # (l,)
    seed: int | None = None

    @property
    def count(self) -> int:
        return int(self.b.shape[0])


class PiecewiseQuadraticMax(SelectionStructure):
    """h4(z) = max_i (z - z_i)^T Q_i (z - z_i) + b_i; selection j is quadratic j."""

    kind = "h4"

    def __init__(self, instance: PiecewiseQuadraticInstance, activity_tol: float = DEFAULT_ACTIVITY_TOL):
        Q = np.asarray(instance.Q, dtype=float)
        centers = np.atleast_2d(np.asarray(instance.centers, dtype=float))
        b = np.asarray(instance.b, dtype=float).reshape(-1)
        if Q.ndim != 3 or Q.shape[1] != Q.shape[2] or Q.shape[0] != b.size:
            raise InvalidInputError("Q must have shape (l, p, p) matching b")
        if centers.shape != Q.shape[:2]:
            raise InvalidInputError("centers must have shape (l, p)")
        super().__init__(Q.shape[1], activity_tol)
        self.Q = Q
        self.centers = centers
        self.b = b
        self.seed = instance.seed

    @property
    def n_sel(self):
        return self.b.size

    def _piece(self, j: int, z: np.ndarray) -> float:
        w = z - self.centers[j]
        return float(w @ (self.Q[j] @ w) + self.b[j])

    def _pieces(self, z):
        W = z - self.centers
        return np.einsum("lp,lpq,lq->l", W, self.Q, W) + self.b

    def _reduce(self, pieces):
        return pieces.max()

    def selection_gradients(self, js, z):
        z = self._check_z(z)
        js = [self._check_index(j) for j in js]
        if not js:
            return np.empty((0, self.p))
        return 2.0 * np.einsum("lpq,lq->lp", self.Q[js], z - self.centers[js])

    def selection_gradient(self, j, z):
        z = self._check_z(z)
        j = self._check_index(j)
        # Q_j symmetric by construction
        return 2.0 * (self.Q[j] @ (z - self.centers[j]))

    def to_dict(self):
        return {
            "kind": self.kind,
            "p": self.p,
            "seed": self.seed,
            "Q": self.Q.tolist(),
            "centers": self.centers.tolist(),
            "b": self.b.tolist(),
            "activity_tol": self.activity_tol,
        }


def evaluate_h(h: SelectionStructure, z, tol: float | None = None):
    """Value of ``h`` at ``z`` and its essentially active indices."""
    return h.evaluate(z, tol)


def selection_gradient(h: SelectionStructure, j, z) -> np.ndarray:
    return h.selection_gradient(j, z)


def make_h3_instance(p: int, seed: int, center=None) -> CensoredL1Instance:
    """Random censored-L1 data.

    ``center`` is typically ``F(x0)``.  Censors are ``U(-1, 1) * max(1, |center_i|)``
    and targets are ``center_i + U(-0.5, 0.5)``, so kinks sit near the start.
    """
    if int(p) < 1:
        raise InvalidInputError("p must be positive")
    p = int(p)
    center = np.zeros(p) if center is None else np.asarray(center, dtype=float)
    if center.shape != (p,):
        raise InvalidInputError("center must have length p")
    rng = np.random.default_rng(seed)
    scale = np.maximum(1.0, np.abs(center))
    c = rng.uniform(-1.0, 1.0, p) * scale
    d = center + rng.uniform(-0.5, 0.5, p)
    return CensoredL1Instance(c=c, d=d, seed=seed)


def make_h4_instance(p: int, l: int, seed: int, center=None) -> PiecewiseQuadraticInstance:
    """Random max-of-quadratics data.

    Centers are ``center + N(0, sigma^2)`` with ``sigma = 0.1 max(1, ||center||_inf)``,
    ``Q_i = A^T A / p + 0.1 I`` with Gaussian ``A``, and the offsets ``b_i`` make
    every piece equal to zero at ``center``.
    """
    if int(p) < 1 or int(l) < 1:
        raise InvalidInputError("p and l must be positive")
    p, l = int(p), int(l)
    center = np.zeros(p) if center is None else np.asarray(center, dtype=float)
    if center.shape != (p,):
        raise InvalidInputError("center must have length p")
    rng = np.random.default_rng(seed)
    sigma = 0.1 * max(1.0, float(np.max(np.abs(center))))
    centers = center + sigma * rng.standard_normal((l, p))
    Q = np.empty((l, p, p))
    b = np.empty(l)
    for i in range(l):
        A = rng.standard_normal((p, p))
        Qi = A.T @ A / p + 0.1 * np.eye(p)
        Q[i] = 0.5 * (Qi + Qi.T)
        w = center - centers[i]
        b[i] = -(w @ Q[i] @ w)
    return PiecewiseQuadraticInstance(Q=Q, centers=centers, b=b, seed=seed)


def selection_from_dict(doc: dict) -> SelectionStructure:
    kind = doc["kind"]
    tol = doc.get("activity_tol", DEFAULT_ACTIVITY_TOL)
    if kind == "h1":
        return MinSquares(doc["p"], tol)
    if kind == "h2":
        return MaxSquares(doc["p"], tol)
    if kind == "h3":
        inst = CensoredL1Instance(np.array(doc["c"]), np.array(doc["d"]), doc.get("seed"))
        return CensoredL1(inst, tol)
    if kind == "h4":
        inst = PiecewiseQuadraticInstance(
            np.array(doc["Q"]), np.array(doc["centers"]), np.array(doc["b"]), doc.get("seed")
        )
        return PiecewiseQuadraticMax(inst, tol)
    if kind == "max_affine":
        return MaxAffine(doc["A"], doc["b"], tol)
    raise InvalidInputError(f"unknown selection kind {kind!r}")
