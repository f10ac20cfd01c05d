"""Budgeted cache of evaluations of the expensive mapping F."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExhausted, EvaluationFailure, InvalidInputError
from .selections import SelectionStructure

DUPLICATE_TOL = 1e-14


@dataclass(frozen=True)
class EvaluationRecord:
    x: np.ndarray
    Fx: np.ndarray
    f: float
    active: frozenset
    eval_index: int  # 1-based: number of F calls made once this record existed

    def to_dict(self) -> dict:
        return {
            "eval_index": self.eval_index,
            "x": self.x.tolist(),
            "Fx": self.Fx.tolist(),
            "f": self.f,
            "active": sorted(self.active),
        }

    @classmethod
    def from_dict(cls, doc) -> "EvaluationRecord":
        return cls(np.array(doc["x"], float), np.array(doc["Fx"], float), float(doc["f"]),
                   frozenset(doc["active"]), int(doc["eval_index"]))


class History:
    """The set Y of evaluated points together with F, f and active indices.

    Re-querying a point already in the history (max-norm distance at most
    ``DUPLICATE_TOL``) returns the cached record and costs no budget.
    """

    def __init__(self, n: int, p: int, h: SelectionStructure, eval_budget: int,
                 activity_tol: float | None = None, on_new=None):
        self.n = int(n)
        self.p = int(p)
        self.h = h
        self.eval_budget = int(eval_budget)
        self.activity_tol = h.activity_tol if activity_tol is None else float(activity_tol)
        self.records: list[EvaluationRecord] = []
        self.evals_used = 0
        self.on_new = on_new
        self._X = np.empty((16, self.n))

    def __len__(self):
        return len(self.records)

    @property
    def X(self) -> np.ndarray:
        return self._X[: len(self.records)]

    @property
    def remaining(self) -> int:
        return max(0, self.eval_budget - self.evals_used)

    def find(self, x) -> EvaluationRecord | None:
        if not self.records:
            return None
        gaps = np.max(np.abs(self.X - x), axis=1)
        k = int(np.argmin(gaps))
        return self.records[k] if gaps[k] <= DUPLICATE_TOL else None

    def evaluate(self, problem, x, initial: bool = False) -> EvaluationRecord:
        """Evaluate F at ``x`` unless cached.

        ``initial=True`` lets the very first evaluation (the starting point)
        through even when the budget is zero.
        """
        x = np.array(x, dtype=float)
        if x.shape != (self.n,) or not np.isfinite(x).all():
            raise InvalidInputError("evaluation point must be a finite vector of length n")
        cached = self.find(x)
        if cached is not None:
            return cached
        if self.evals_used >= self.eval_budget and not (initial and not self.records):
            raise BudgetExhausted(f"evaluation budget of {self.eval_budget} exhausted")
        Fx = np.array(problem.F(x), dtype=float).reshape(-1)
        self.evals_used += 1
        if Fx.shape != (self.p,) or not np.isfinite(Fx).all():
            raise EvaluationFailure(x, Fx)
        f, active = self.h.evaluate(Fx, self.activity_tol)
        rec = EvaluationRecord(x, Fx, f, active, self.evals_used)
        self._append(rec)
        if self.on_new is not None:
            self.on_new(rec)
        return rec

    def _append(self, rec: EvaluationRecord):
        k = len(self.records)
        if k == self._X.shape[0]:
            self._X = np.vstack([self._X, np.empty_like(self._X)])
        self._X[k] = rec.x
        self.records.append(rec)

    def distances(self, center) -> np.ndarray:
        return np.linalg.norm(self.X - np.asarray(center, dtype=float), axis=1)

    def points_within(self, center, radius: float) -> list[EvaluationRecord]:
        """Records with Euclidean distance to ``center`` at most ``radius``, nearest first."""
        if not self.records:
            return []
        dist = self.distances(center)
        idx = np.flatnonzero(dist <= radius)
        idx = idx[np.argsort(dist[idx], kind="stable")]
        return [self.records[k] for k in idx]

    def best(self) -> EvaluationRecord:
        return min(self.records, key=lambda r: (r.f, r.eval_index))

    # -- JSONL --------------------------------------------------------------
    def dump_jsonl(self, fh):
        for rec in self.records:
            fh.write(json.dumps(rec.to_dict()) + "\n")

    @classmethod
    def load_jsonl(cls, fh, h: SelectionStructure, eval_budget: int | None = None) -> "History":
        recs = [EvaluationRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
        if not recs:
            raise InvalidInputError("empty history file")
        hist = cls(recs[0].x.size, recs[0].Fx.size, h,
                   eval_budget if eval_budget is not None else len(recs))
        for rec in recs:
            hist._append(rec)
        hist.evals_used = max(r.eval_index for r in recs)
        return hist
