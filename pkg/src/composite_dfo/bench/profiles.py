"""Data profiles: fraction of instances solved versus budget in units of n+1."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from xml.sax.saxutils import escape

from ..errors import InvalidInputError

DEFAULT_TAUS = (1e-1, 1e-3, 1e-5)


@dataclass(frozen=True)
class ProfileCurve:
    method: str
    tau: float
    points: tuple  # ((budget_units, fraction), ...) starting at (0, 0)
    n_instances: int

    def fraction_at(self, units: float) -> float:
        frac = 0.0
        for u, fr in self.points:
            if u <= units:
                frac = fr
        return frac


def data_profile(results: dict, dims: dict, methods=None, tau: float = float("nan")) -> list[ProfileCurve]:
    """Step curves from first-solved evaluation counts.

    ``results[method][instance]`` is the first t at which the instance was
    solved, or None.  ``dims[instance]`` is the dimension n_p.  Each solve
    adds 1/N at t/(n_p + 1).
    """
    methods = list(results) if methods is None else list(methods)
    if not methods:
        raise InvalidInputError("no methods given")
    names = set(dims)
    for m in methods:
        if m not in results:
            raise InvalidInputError(f"no results for method {m!r}")
        if set(results[m]) != names:
            raise InvalidInputError(f"instance set for {m!r} differs from the others")
    N = len(names)
    if N == 0:
        raise InvalidInputError("no instances")
    curves = []
    for m in methods:
        # exact rational budget units so ties between instances merge cleanly
        units = sorted(Fraction(int(t), int(dims[i]) + 1) for i, t in results[m].items() if t is not None)
        pts = [(0.0, 0.0)]
        count = 0
        for k, u in enumerate(units):
            count += 1
            if k + 1 < len(units) and units[k + 1] == u:
                continue
            pts.append((float(u), count / N))
        curves.append(ProfileCurve(m, tau, tuple(pts), N))
    return curves


def profile_csv(curves) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "tau", "budget_units", "fraction_solved"])
    for c in curves:
        for u, fr in c.points:
            w.writerow([c.method, repr(float(c.tau)), repr(u), repr(fr)])
    return buf.getvalue()


def read_profile_csv(text: str) -> list[ProfileCurve]:
    rows = list(csv.DictReader(io.StringIO(text)))
    order, pts, taus = [], {}, {}
    for r in rows:
        m = r["method"]
        if m not in pts:
            order.append(m)
            pts[m] = []
            taus[m] = float(r["tau"])
        pts[m].append((float(r["budget_units"]), float(r["fraction_solved"])))
    return [ProfileCurve(m, taus[m], tuple(pts[m]), 0) for m in order]


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def profile_svg(curves, x_max: float | None = None, title: str = "") -> str:
    """Stand-alone SVG of step curves with axes and a legend."""
    W, H = 640, 420
    left, right, top, bottom = 60, 20, 30, 50
    pw, ph = W - left - right, H - top - bottom
    if x_max is None:
        x_max = max([u for c in curves for u, _ in c.points] + [1.0])
    x_max = float(x_max)

    def px(u):
        return left + pw * min(u, x_max) / x_max

    def py(fr):
        return top + ph * (1.0 - fr)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for k in range(6):
        fr = k / 5
        y = py(fr)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" font-size="11" text-anchor="end">{fr:.1f}</text>')
    for k in range(6):
        u = x_max * k / 5
        x = px(u)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 18}" font-size="11" text-anchor="middle">{u:g}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{H - 12}" font-size="12" text-anchor="middle">'
               'evaluations / (n + 1)</text>')
    out.append(f'<text x="16" y="{top + ph / 2}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2})">fraction solved</text>')
    if title:
        out.append(f'<text x="{left + pw / 2}" y="18" font-size="13" text-anchor="middle">{escape(title)}</text>')
    for k, c in enumerate(curves):
        color = _COLORS[k % len(_COLORS)]
        path = []
        prev = 0.0
        for u, fr in c.points:
            path.append(f"{px(u):.2f},{py(prev):.2f}")
            path.append(f"{px(u):.2f},{py(fr):.2f}")
            prev = fr
        path.append(f"{px(x_max):.2f},{py(prev):.2f}")
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{" ".join(path)}"/>')
        ly = top + 16 + 16 * k
        out.append(f'<line x1="{left + 10}" y1="{ly}" x2="{left + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + 36}" y="{ly + 4}" font-size="11">{escape(c.method)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
