"""Command-line driver: ``composite-dfo {run,suite,score,profile,verify}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import InvalidInputError, MissingPrerequisite, UnsupportedProblem
from ..problems import H_KINDS, build_benchmark, get_problem
from ..solvers import SOLVERS
from . import runner
from .profiles import DEFAULT_TAUS


def _positive_float(text):
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not val > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return val


def _nonneg_int(text):
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if val < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return val


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="composite-dfo", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--budget-multiplier", type=_nonneg_int, default=runner.DEFAULT_BUDGET_MULTIPLIER,
                       help="evaluation budget per instance is this times (n + 1)")
        p.add_argument("--constrained", action="store_true", help="use the bounded benchmark setting")
        p.add_argument("--best-points", type=Path, default=None,
                       help="best_points.jsonl of an unbounded suite (required with --constrained)")

    p = sub.add_parser("run", help="one solver on one instance; writes a JSONL trace")
    p.add_argument("--solver", choices=SOLVERS, required=True)
    p.add_argument("--instance", required=True, help="instance id such as rosen2+h2")
    p.add_argument("--out", type=Path, default=None, help="trace path (default: stdout)")
    common(p)

    p = sub.add_parser("suite", help="all solvers on all instances; writes a results directory")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--solver", choices=SOLVERS, action="append", default=None,
                   help="restrict to this solver (repeatable)")
    p.add_argument("--problems", nargs="*", default=None, help="restrict to these problem names")
    p.add_argument("--jobs", type=int, default=runner.default_jobs())
    common(p)

    p = sub.add_parser("score", help="stationarity scoring of the traces in a results directory")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--tau", type=_positive_float, action="append", default=None)
    p.add_argument("--solver", choices=SOLVERS, action="append", default=None)
    p.add_argument("--jobs", type=int, default=runner.default_jobs())

    p = sub.add_parser("profile", help="data-profile CSV and SVG files from the scores")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--tau", type=_positive_float, action="append", default=None)
    p.add_argument("--solver", choices=SOLVERS, action="append", default=None)

    p = sub.add_parser("verify", help="run the built-in invariant checks")
    p.add_argument("--quick", action="store_true", help="fewer random cases")
    return ap


def _instance(args):
    if "+" not in args.instance:
        raise InvalidInputError(f"instance id must look like <problem>+<h>, got {args.instance!r}")
    parts = args.instance.split("+")
    name, h_kind = parts[0], parts[1]
    constrained = args.constrained or (len(parts) > 2 and parts[2] == "c")
    if h_kind not in H_KINDS or len(parts) > 3 or (len(parts) == 3 and parts[2] != "c"):
        raise InvalidInputError(f"malformed instance id {args.instance!r}")
    best = None
    if constrained:
        if args.best_points is None:
            raise MissingPrerequisite("--constrained needs --best-points")
        best = runner.read_best_points(args.best_points)
    (inst,) = build_benchmark(constrained, args.seed, problems=[get_problem(name)], best_points=best,
                              h_kinds=(h_kind,))
    return inst


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "run":
            inst = _instance(args)
            text = runner.run_one(inst, args.solver, args.seed, args.budget_multiplier).dumps()
            if args.out is None:
                sys.stdout.write(text)
            else:
                args.out.parent.mkdir(parents=True, exist_ok=True)
                args.out.write_text(text)
        elif args.command == "suite":
            if args.constrained and args.best_points is None:
                raise MissingPrerequisite("--constrained needs --best-points")
            insts = runner.run_suite(args.out, solvers=tuple(args.solver or SOLVERS), seed=args.seed,
                                     budget_multiplier=args.budget_multiplier, constrained=args.constrained,
                                     jobs=args.jobs, problems=args.problems, best_points=args.best_points)
            print(f"ran {len(insts)} instances into {args.out}")
        elif args.command == "score":
            taus = args.tau or DEFAULT_TAUS
            scores = runner.score_results(args.out, taus, jobs=args.jobs, methods=args.solver)
            for m, res in scores.items():
                solved = [sum(v[k] is not None for v in res.values()) for k in range(len(taus))]
                summary = ", ".join(f"tau={runner.tau_label(t)}: {s}/{len(res)}" for t, s in zip(taus, solved))
                print(f"{m}: {summary}")
        elif args.command == "profile":
            curves = runner.make_profiles(args.out, args.tau or DEFAULT_TAUS, methods=args.solver)
            for label in curves:
                print(f"wrote {args.out / 'profiles' / f'profile_tau={label}'}.csv|.svg")
        elif args.command == "verify":
            from .verify import run_checks
            return 0 if run_checks(quick=args.quick) else 1
    except (InvalidInputError, MissingPrerequisite, UnsupportedProblem, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, (InvalidInputError, KeyError)) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
