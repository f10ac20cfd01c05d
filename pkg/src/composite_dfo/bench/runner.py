"""Suite orchestration and the results directory.

Layout under a results directory::

    instances.json
    suite.json                       solvers, seed and budget multiplier
    traces/<method>/<instance>.jsonl
    scores/<method>.csv              instance, tau, first_solved_t
    profiles/profile_tau=<tau>.csv|.svg
    best_points.jsonl                best point per instance (feeds the bounded suite)
"""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError, MissingPrerequisite
from ..problems import BenchmarkInstance, build_benchmark, get_problem
from ..solvers import SOLVERS, RunTrace, SolverConfig, run_solver
from .profiles import DEFAULT_TAUS, data_profile, profile_csv, profile_svg
from .scoring import chi_profile, first_solved_from_profile

DEFAULT_BUDGET_MULTIPLIER = 100


def tau_label(tau: float) -> str:
    return f"{tau:g}"


def run_one(instance: BenchmarkInstance, solver: str, seed: int = 0,
            budget_multiplier: int = DEFAULT_BUDGET_MULTIPLIER) -> RunTrace:
    cfg = SolverConfig(seed=seed, eval_budget=int(budget_multiplier) * (instance.problem.n + 1))
    return run_solver(solver, instance.problem, instance.h, cfg, instance_id=instance.id)


def _run_job(args):
    doc, solver, seed, mult = args
    inst = BenchmarkInstance.from_dict(doc)
    return doc["id"], solver, run_one(inst, solver, seed, mult).dumps()


def _map(fn, jobs_list, jobs: int):
    if jobs <= 1 or len(jobs_list) <= 1:
        return [fn(j) for j in jobs_list]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, jobs_list, chunksize=1))


def load_instances(outdir) -> list[BenchmarkInstance]:
    path = Path(outdir) / "instances.json"
    if not path.exists():
        raise MissingPrerequisite(f"{path} not found; run the suite first")
    return [BenchmarkInstance.from_dict(d) for d in json.loads(path.read_text())]


def read_best_points(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                out[row["instance"]] = np.array(row["x"], dtype=float)
    return out


def run_suite(outdir, solvers=SOLVERS, seed: int = 0, budget_multiplier: int = DEFAULT_BUDGET_MULTIPLIER,
              constrained: bool = False, jobs: int = 1, problems=None, best_points=None,
              instances=None) -> list[BenchmarkInstance]:
    """Run every solver on every instance and write traces plus best points.

    The bounded setting needs the best points of an earlier unbounded
    suite, passed as a mapping or a path to its ``best_points.jsonl``.
    """
    out = Path(outdir)
    for s in solvers:
        if s not in SOLVERS:
            raise InvalidInputError(f"unknown solver {s!r}")
    if instances is None:
        if problems is not None:
            problems = [get_problem(p) if isinstance(p, str) else p for p in problems]
        if constrained and best_points is not None and not isinstance(best_points, dict):
            best_points = read_best_points(best_points)
        instances = build_benchmark(constrained, seed, problems=problems, best_points=best_points)
    out.mkdir(parents=True, exist_ok=True)
    (out / "instances.json").write_text(json.dumps([i.to_dict() for i in instances], indent=1, sort_keys=True))
    meta = {"solvers": list(solvers), "seed": seed, "budget_multiplier": budget_multiplier,
            "constrained": constrained}
    (out / "suite.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    jobs_list = [(inst.to_dict(), s, seed, budget_multiplier) for s in solvers for inst in instances]
    results = _map(_run_job, jobs_list, jobs)
    best = {}
    for iid, solver, text in results:
        d = out / "traces" / solver
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{iid}.jsonl").write_text(text)
        tr = RunTrace.loads(text)
        if iid not in best or tr.best_f < best[iid][0]:
            best[iid] = (tr.best_f, tr.best_x.tolist())
    with open(out / "best_points.jsonl", "w") as fh:
        for inst in instances:
            f, x = best[inst.id]
            fh.write(json.dumps({"instance": inst.unconstrained_id, "f": f, "x": x}) + "\n")
    return instances


def _score_job(args):
    doc, trace_text, taus = args
    inst = BenchmarkInstance.from_dict(doc)
    tr = RunTrace.loads(trace_text)
    prof = chi_profile(tr, inst.problem, inst.h, inst.seed, taus=taus)
    return doc["id"], [first_solved_from_profile(prof, t) for t in taus]


def score_results(outdir, taus=DEFAULT_TAUS, jobs: int = 1, methods=None) -> dict:
    """Write ``scores/<method>.csv`` and return {method: {instance: [t per tau]}}."""
    out = Path(outdir)
    instances = load_instances(out)
    tdir = out / "traces"
    if methods is None:
        methods = sorted(p.name for p in tdir.iterdir() if p.is_dir()) if tdir.exists() else []
    if not methods:
        raise MissingPrerequisite("no traces to score")
    taus = [float(t) for t in taus]
    scores = {}
    (out / "scores").mkdir(parents=True, exist_ok=True)
    for m in methods:
        jobs_list = []
        for inst in instances:
            path = tdir / m / f"{inst.id}.jsonl"
            if not path.exists():
                raise MissingPrerequisite(f"missing trace {path}")
            jobs_list.append((inst.to_dict(), path.read_text(), taus))
        res = dict(_map(_score_job, jobs_list, jobs))
        scores[m] = res
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["instance", "tau", "first_solved_t"])
        for inst in instances:
            for tau, t in zip(taus, res[inst.id]):
                w.writerow([inst.id, tau_label(tau), "" if t is None else t])
        (out / "scores" / f"{m}.csv").write_text(buf.getvalue())
    return scores


def read_scores(outdir) -> dict:
    """{method: {tau_label: {instance: t or None}}} from ``scores/*.csv``."""
    sdir = Path(outdir) / "scores"
    if not sdir.exists():
        raise MissingPrerequisite("no scores; run score first")
    out = {}
    for path in sorted(sdir.glob("*.csv")):
        table = {}
        with open(path) as fh:
            for row in csv.DictReader(fh):
                t = row["first_solved_t"]
                table.setdefault(row["tau"], {})[row["instance"]] = int(t) if t else None
        out[path.stem] = table
    return out


def make_profiles(outdir, taus=DEFAULT_TAUS, methods=None) -> dict:
    """Write data-profile CSV and SVG files for each tau; return the curves."""
    out = Path(outdir)
    instances = load_instances(out)
    dims = {i.id: i.problem.n for i in instances}
    scores = read_scores(out)
    methods = sorted(scores) if methods is None else list(methods)
    (out / "profiles").mkdir(parents=True, exist_ok=True)
    meta = out / "suite.json"
    x_max = json.loads(meta.read_text())["budget_multiplier"] if meta.exists() else 0
    curves_by_tau = {}
    for tau in taus:
        label = tau_label(float(tau))
        results = {}
        for m in methods:
            if label not in scores.get(m, {}):
                raise MissingPrerequisite(f"method {m!r} was not scored at tau={label}")
            results[m] = scores[m][label]
        curves = data_profile(results, dims, methods, tau=float(tau))
        stem = f"profile_tau={label}"
        (out / "profiles" / f"{stem}.csv").write_text(profile_csv(curves))
        top = max([u for c in curves for u, _ in c.points] + [float(x_max)])
        (out / "profiles" / f"{stem}.svg").write_text(profile_svg(curves, x_max=top, title=f"tau = {label}"))
        curves_by_tau[label] = curves
    return curves_by_tau


def default_jobs() -> int:
    return max(1, (os.cpu_count() or 1))
