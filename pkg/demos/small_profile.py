"""Run all three solvers on a few benchmark problems and print data profiles.

Usage: ``python3 demos/small_profile.py [outdir]``.  The results directory
(traces, scores, profile CSV/SVG) is kept for inspection.  Takes a few
minutes on one core.
"""
import sys
import tempfile
import time
from pathlib import Path

from composite_dfo.bench import runner

PROBLEMS = ["rosen2", "froth2", "bard3"]
TAUS = (1e-1, 1e-3, 1e-5)

if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="cdfo_"))
    t0 = time.perf_counter()
    insts = runner.run_suite(out, problems=PROBLEMS, budget_multiplier=50, jobs=runner.default_jobs())
    print(f"{len(insts)} instances x 3 solvers in {time.perf_counter() - t0:.1f}s")
    runner.score_results(out, TAUS, jobs=runner.default_jobs())
    curves = runner.make_profiles(out, TAUS)
    for label, cs in curves.items():
        print(f"tau = {label}")
        for c in cs:
            steps = ", ".join(f"({u:g}, {fr:.3f})" for u, fr in c.points)
            print(f"  {c.method:<20s} {steps}")
    print(f"results in {out}; see {out / 'profiles'}")
