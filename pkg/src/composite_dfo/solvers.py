"""Manifold sampling (primal) and the glassbox variant GOOMBAH.

All three drivers share the budgeted :class:`~composite_dfo.history.History`
and write a :class:`RunTrace` with one row per evaluation and one row per
iteration.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import BudgetExhausted, InvalidInputError, SubproblemFailure
from .glassbox import solve_glassbox
from .history import History
from .models import C_GEO, build_models
from .subproblems import BoundData, build_generator_set, solve_step

SUCCESSFUL = "successful"
UNSUCCESSFUL = "unsuccessful"
EARLY_ABORT = "early-abort"
BUDGET = "budget-exhausted"
MAX_LOOP_PASSES = 1000
DELTA_FLOOR = 1e-12  # relative to max(1, ||x0||_inf); keeps steps above the duplicate tolerance
SNAP_TOL = 1e-8  # relative to delta
SOLVERS = ("msp", "goombah", "goombah-norecourse")


@dataclass(frozen=True)
class SolverConfig:
    """Algorithm parameters.  ``None`` entries are filled by :meth:`resolve`."""

    delta0: float | None = None
    delta_max: float | None = None
    gamma_d: float = 0.5
    gamma_i: float = 2.0
    eta1: float = 1e-4
    eta2: float = math.inf
    eta1_tilde: float = 1e-4
    omega: float = 1.0
    c1: float = 1.0 + 1e-8
    c2: float = 1.0 + 1e-8
    kappa_H: float = 0.0
    kappa_fcd: float = 1e-4
    eval_budget: int | None = None
    chi_stop: float = 0.0
    delta_stop: float = 0.0
    seed: int = 0
    c_geo: float = C_GEO
    delta_floor: float | None = None

    def validate(self):
        if not 0 < self.gamma_d < 1 <= self.gamma_i:
            raise InvalidInputError("need 0 < gamma_d < 1 <= gamma_i")
        if not (self.eta1 > 0 and self.eta1_tilde > 0 and self.omega > 0 and self.eta2 > 0):
            raise InvalidInputError("eta1, eta1_tilde, eta2 and omega must be positive")
        if self.kappa_H < 0 or (self.kappa_H > 0 and self.eta2 > 1.0 / self.kappa_H):
            raise InvalidInputError("need kappa_H >= 0 and eta2 <= 1/kappa_H")
        if self.c1 < 0 or self.c2 < 0:
            raise InvalidInputError("c1 and c2 must be nonnegative")
        if not 0 < self.kappa_fcd < 1:
            raise InvalidInputError("kappa_fcd must lie in (0, 1)")
        if self.eval_budget is not None and self.eval_budget < 0:
            raise InvalidInputError("eval_budget must be nonnegative")
        for name in ("delta0", "delta_max"):
            val = getattr(self, name)
            if val is not None and not (val > 0 and math.isfinite(val)):
                raise InvalidInputError(f"{name} must be positive and finite")
        return self

    def resolve(self, problem) -> "SolverConfig":
        """Concrete configuration for ``problem`` with every default filled in."""
        self.validate()
        scale = max(1.0, float(np.max(np.abs(problem.x0))))
        delta0 = 0.1 * scale if self.delta0 is None else self.delta0
        out = replace(
            self,
            delta0=delta0,
            delta_max=1e3 * delta0 if self.delta_max is None else self.delta_max,
            eval_budget=100 * (problem.n + 1) if self.eval_budget is None else self.eval_budget,
            delta_floor=DELTA_FLOOR * scale if self.delta_floor is None else self.delta_floor,
        )
        if out.delta0 > out.delta_max:
            raise InvalidInputError("delta0 exceeds delta_max")
        return out

    def to_dict(self) -> dict:
        return {k: (None if v is None else (str(v) if isinstance(v, float) and not math.isfinite(v) else v))
                for k, v in asdict(self).items()}


@dataclass
class IterationOutcome:
    kind: str
    x_next: np.ndarray
    delta_next: float
    rho: float | None = None
    chi: float | None = None
    gen_size: int = 0
    loop_passes: int = 0
    delta_bar: float = 0.0
    cauchy_ok: bool | None = None
    used_cauchy: bool = False
    pass_cap_hit: bool = False
    capped: bool = False


def _json_float(v):
    if v is None:
        return None
    v = float(v)
    if math.isfinite(v):
        return v
    return "inf" if v > 0 else ("-inf" if v < 0 else "nan")


@dataclass
class RunTrace:
    """Per-evaluation and per-iteration record of one solver run."""

    header: dict
    evals: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    purpose: str = "start"

    # filled by the history callback
    def record_eval(self, rec):
        best = rec.f if not self.evals else min(rec.f, self.evals[-1]["best_f"])
        self.evals.append({
            "type": "eval",
            "eval_index": rec.eval_index,
            "purpose": self.purpose,
            "x": rec.x.tolist(),
            "Fx": rec.Fx.tolist(),
            "f": rec.f,
            "best_f": best,
        })

    def record_iteration(self, k, delta, f, out: IterationOutcome, step: str, evals_used: int):
        self.iterations.append({
            "type": "iter",
            "k": k,
            "step": step,
            "delta": delta,
            "delta_bar": out.delta_bar,
            "delta_next": out.delta_next,
            "f": f,
            "outcome": out.kind,
            "chi": _json_float(out.chi),
            "rho": _json_float(out.rho),
            "gen_size": out.gen_size,
            "loop_passes": out.loop_passes,
            "cauchy_ok": out.cauchy_ok,
            "used_cauchy": out.used_cauchy,
            "pass_cap_hit": out.pass_cap_hit,
            "capped": out.capped,
            "evals_used": evals_used,
        })

    @property
    def X(self) -> np.ndarray:
        return np.array([e["x"] for e in self.evals], dtype=float)

    @property
    def fvals(self) -> np.ndarray:
        return np.array([e["f"] for e in self.evals], dtype=float)

    @property
    def best_f(self) -> float:
        return self.evals[-1]["best_f"] if self.evals else math.inf

    @property
    def best_x(self) -> np.ndarray:
        k = int(np.argmin(self.fvals))
        return np.array(self.evals[k]["x"])

    def rows(self):
        yield {"type": "header", **self.header}
        # interleave by evaluation count so the file reads chronologically
        it = iter(self.iterations)
        pending = next(it, None)
        for row in self.evals:
            while pending is not None and pending["evals_used"] < row["eval_index"]:
                yield pending
                pending = next(it, None)
            yield row
        while pending is not None:
            yield pending
            pending = next(it, None)
        yield {"type": "final", **self.final}

    def dumps(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.rows())

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "RunTrace":
        trace = cls(header={})
        for line in text.splitlines():
            if not line.strip():
                continue
            row = json.loads(line)
            kind = row.get("type")
            if kind == "header":
                trace.header = {k: v for k, v in row.items() if k != "type"}
            elif kind == "eval":
                trace.evals.append(row)
            elif kind == "iter":
                trace.iterations.append(row)
            elif kind == "final":
                trace.final = {k: v for k, v in row.items() if k != "type"}
        return trace

    @classmethod
    def read(cls, path) -> "RunTrace":
        with open(path) as fh:
            return cls.loads(fh.read())


# ---------------------------------------------------------------------------
# the MS-P loop

def _bounds_at(problem, x) -> BoundData:
    return BoundData.from_box(x, problem.lower, problem.upper)


def _trial_point(problem, x, s, delta):
    """x + s clipped to the box, with near-bound coordinates snapped onto it.

    The interior-point step stops a hair short of active bounds; snapping
    lets iterates land exactly on them.
    """
    y = np.clip(x + s, problem.lower, problem.upper)
    tol = SNAP_TOL * delta
    y = np.where(y - problem.lower <= tol, problem.lower, y)
    return np.where(problem.upper - y <= tol, problem.upper, y)


def _cap(config, delta):
    capped = delta > config.delta_max
    return min(delta, config.delta_max), capped


def msp_loop(x, delta: float, history: History, config: SolverConfig, problem, h,
             trace: RunTrace | None = None) -> IterationOutcome:
    """One iteration of manifold sampling: grow the generator set, shrink the
    radius, or return a successful/unsuccessful classification.

    ``config`` must already be resolved.  BudgetExhausted propagates.
    """
    x = np.asarray(x, dtype=float)
    delta_bar = float(delta)
    delta = float(delta)
    center = history.find(x)
    if center is None:
        raise InvalidInputError("msp_loop needs an evaluated center")
    f = center.f
    bounds = _bounds_at(problem, x)
    passes = 0
    gen = None
    while True:
        passes += 1
        if passes > MAX_LOOP_PASSES or delta < config.delta_floor:
            nxt, capped = _cap(config, config.gamma_d * delta_bar)
            return IterationOutcome(UNSUCCESSFUL, x, nxt, None, None, 0 if gen is None else gen.size,
                                    passes - 1, delta_bar, pass_cap_hit=passes > MAX_LOOP_PASSES,
                                    capped=capped)
        if trace is not None:
            trace.purpose = "model"
        models = build_models(history, problem, x, delta, c_geo=config.c_geo)
        gen = build_generator_set(history, models, h, x, delta, config.c1, config.c2)
        try:
            res = solve_step(gen, bounds, delta, None, config.kappa_fcd, config.kappa_H)
        except SubproblemFailure:
            nxt, capped = _cap(config, config.gamma_d * delta_bar)
            return IterationOutcome(UNSUCCESSFUL, x, nxt, None, None, gen.size, passes, delta_bar,
                                    capped=capped)
        chi = res.chi.chi
        base = dict(chi=chi, gen_size=gen.size, loop_passes=passes, delta_bar=delta_bar,
                    cauchy_ok=res.cauchy_ok, used_cauchy=res.used_cauchy)
        if delta > config.eta2 * chi:
            nxt, capped = _cap(config, config.gamma_d * delta_bar)
            return IterationOutcome(EARLY_ABORT, x, nxt, capped=capped, **base)
        y = _trial_point(problem, x, res.solution.s, delta)
        if trace is not None:
            trace.purpose = "step"
        rec = history.evaluate(problem, y)
        pred = res.solution.predicted_decrease
        rho = (f - rec.f) / pred if pred > 0 else -math.inf
        if rho >= config.eta1:
            nxt, capped = _cap(config, config.gamma_i * delta_bar)
            return IterationOutcome(SUCCESSFUL, rec.x, nxt, rho, capped=capped, **base)
        gen_bar = build_generator_set(history, models, h, x, delta, config.c1, config.c2)
        if gen_bar.index_set == gen.index_set:
            if gen.index_set & rec.active:
                nxt, capped = _cap(config, config.gamma_d * delta_bar)
                return IterationOutcome(UNSUCCESSFUL, x, nxt, rho, capped=capped, **base)
            delta *= config.gamma_d
        # otherwise the enlarged generator set is used on the next pass


# ---------------------------------------------------------------------------
# drivers

def _start(problem, h, config, solver: str, instance_id: str | None):
    if problem.p != h.p:
        raise InvalidInputError("problem and selection disagree on p")
    cfg = (config or SolverConfig()).resolve(problem)
    x0 = np.asarray(problem.x0, dtype=float)
    if np.any(x0 < problem.lower) or np.any(x0 > problem.upper):
        raise InvalidInputError("x0 violates the bounds")
    header = {
        "solver": solver,
        "problem": problem.name,
        "instance": instance_id or problem.name,
        "n": problem.n,
        "p": problem.p,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
    }
    trace = RunTrace(header)
    history = History(problem.n, problem.p, h, cfg.eval_budget, on_new=trace.record_eval)
    trace.purpose = "start"
    history.evaluate(problem, x0, initial=True)
    return cfg, trace, history, x0


def _finish(trace, history, reason, k):
    best = history.best()
    trace.final = {
        "reason": reason,
        "iterations": k,
        "evals_used": history.evals_used,
        "best_f": best.f,
        "best_x": best.x.tolist(),
    }
    return trace


def _stop_reason(cfg, history, delta, chi):
    if history.evals_used >= cfg.eval_budget:
        return "budget"
    if delta < max(cfg.delta_stop, cfg.delta_floor):
        return "delta"
    if chi is not None and chi < cfg.chi_stop:
        return "chi"
    return None


def run_msp(problem, h, config: SolverConfig | None = None, instance_id: str | None = None) -> RunTrace:
    """Manifold sampling (primal) from ``problem.x0`` until the budget is spent."""
    cfg, trace, history, x = _start(problem, h, config, "msp", instance_id)
    delta = cfg.delta0
    k = 0
    reason = _stop_reason(cfg, history, delta, None)
    while reason is None:
        f = history.find(x).f
        try:
            out = msp_loop(x, delta, history, cfg, problem, h, trace)
        except BudgetExhausted:
            trace.record_iteration(k, delta, f, IterationOutcome(BUDGET, x, delta, delta_bar=delta),
                                   "msp", history.evals_used)
            reason = "budget"
            break
        trace.record_iteration(k, delta, f, out, "msp", history.evals_used)
        x, delta = out.x_next, out.delta_next
        k += 1
        reason = _stop_reason(cfg, history, delta, out.chi)
    return _finish(trace, history, reason, k)


def run_goombah(problem, h, config: SolverConfig | None = None, recourse: bool = True,
                instance_id: str | None = None) -> RunTrace:
    """GOOMBAH: glassbox trust-region steps, with optional manifold-sampling recourse."""
    name = "goombah" if recourse else "goombah-norecourse"
    cfg, trace, history, x = _start(problem, h, config, name, instance_id)
    rng = np.random.default_rng(cfg.seed)
    delta = cfg.delta0
    k = 0
    reason = _stop_reason(cfg, history, delta, None)
    while reason is None:
        center = history.find(x)
        f = center.f
        out = None
        try:
            trace.purpose = "model"
            models = build_models(history, problem, x, delta, c_geo=cfg.c_geo)
            bounds = _bounds_at(problem, x)
            s = solve_glassbox(models, h, x, delta, bounds, rng)
            y = _trial_point(problem, x, s, delta)
            step = "glassbox"
            if recourse:
                if history.find(y) is None:
                    trace.purpose = "glassbox"
                    rec = history.evaluate(problem, y)
                    rho = (f - rec.f) / delta ** (1.0 + cfg.omega)
                    if rho > cfg.eta1_tilde:
                        nxt, capped = _cap(cfg, cfg.gamma_i * delta)
                        out = IterationOutcome(SUCCESSFUL, rec.x, nxt, rho, delta_bar=delta, capped=capped)
                if out is None:
                    step = "msp"
                    out = msp_loop(x, delta, history, cfg, problem, h, trace)
            else:
                pred = f - h.value(models.predict(y - x))
                rho = None
                if history.find(y) is None and pred > 0:
                    trace.purpose = "glassbox"
                    rec = history.evaluate(problem, y)
                    rho = (f - rec.f) / pred
                if rho is not None and rho > cfg.eta1:
                    nxt, capped = _cap(cfg, cfg.gamma_i * delta)
                    out = IterationOutcome(SUCCESSFUL, rec.x, nxt, rho, delta_bar=delta, capped=capped)
                else:
                    nxt, capped = _cap(cfg, cfg.gamma_d * delta)
                    out = IterationOutcome(UNSUCCESSFUL, x, nxt, rho, delta_bar=delta, capped=capped)
        except BudgetExhausted:
            trace.record_iteration(k, delta, f, IterationOutcome(BUDGET, x, delta, delta_bar=delta),
                                   "glassbox", history.evals_used)
            reason = "budget"
            break
        trace.record_iteration(k, delta, f, out, step, history.evals_used)
        x, delta = out.x_next, out.delta_next
        k += 1
        reason = _stop_reason(cfg, history, delta, out.chi)
    return _finish(trace, history, reason, k)


def run_solver(name: str, problem, h, config: SolverConfig | None = None,
               instance_id: str | None = None) -> RunTrace:
    if name == "msp":
        return run_msp(problem, h, config, instance_id)
    if name == "goombah":
        return run_goombah(problem, h, config, True, instance_id)
    if name == "goombah-norecourse":
        return run_goombah(problem, h, config, False, instance_id)
    raise InvalidInputError(f"unknown solver {name!r}; choose from {SOLVERS}")
