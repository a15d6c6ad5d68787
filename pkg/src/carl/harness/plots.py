"""Minimal deterministic SVG charts (no plotting dependency).

Numbers are written with fixed precision so equal inputs give byte-identical
files.  Non-finite points are skipped.
"""
from __future__ import annotations

import math
import warnings
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

W, H = 640, 400
PAD_L, PAD_R, PAD_T, PAD_B = 64, 140, 40, 48
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _f(x: float) -> str:
    return f"{x:.2f}"


def _range(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=float)
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _frame(title: str, xlabel: str, ylabel: str, xr, yr) -> list[str]:
    x0, x1, y0, y1 = PAD_L, W - PAD_R, H - PAD_B, PAD_T
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.0f}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.0f}" y="{H - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="16" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.0f})">{escape(ylabel)}</text>',
    ]
    for i in range(5):
        fy = yr[0] + (yr[1] - yr[0]) * i / 4
        py = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{x0 - 6}" y="{_f(py + 4)}" text-anchor="end" font-size="10">{fy:.3g}</text>')
        if xr is not None:
            fx = xr[0] + (xr[1] - xr[0]) * i / 4
            px = x0 + (x1 - x0) * i / 4
            out.append(f'<text x="{_f(px)}" y="{y0 + 16}" text-anchor="middle" font-size="10">{fx:.3g}</text>')
    return out


def _legend(names) -> list[str]:
    out = []
    for i, name in enumerate(names):
        y = PAD_T + 16 * i + 8
        x = W - PAD_R + 12
        out.append(f'<rect x="{x}" y="{y - 8}" width="10" height="10" fill="{COLORS[i % len(COLORS)]}"/>')
        out.append(f'<text x="{x + 16}" y="{y + 1}" font-size="11">{escape(name)}</text>')
    return out


def line_chart(series, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """``series`` is a list of ``(name, xs, ys)``; returns SVG text."""
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    xr, yr = _range(xs_all), _range(ys_all)
    out = _frame(title, xlabel, ylabel, xr, yr)
    sx = lambda x: PAD_L + (x - xr[0]) / (xr[1] - xr[0]) * (W - PAD_R - PAD_L)
    sy = lambda y: H - PAD_B - (y - yr[0]) / (yr[1] - yr[0]) * (H - PAD_B - PAD_T)
    for i, (name, xs, ys) in enumerate(series):
        pts = [f"{_f(sx(x))},{_f(sy(y))}" for x, y in zip(xs, ys)
               if math.isfinite(x) and math.isfinite(y)]
        out.append(f'<polyline class="series" data-name="{escape(name)}" fill="none" '
                   f'stroke="{COLORS[i % len(COLORS)]}" stroke-width="2" points="{" ".join(pts)}"/>')
    out += _legend([name for name, _, _ in series])
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bar_chart(labels, values, errors=None, title: str = "", ylabel: str = "") -> str:
    vals = [float(v) for v in values]
    errs = [0.0] * len(vals) if errors is None else [float(e) for e in errors]
    lo, hi = _range([v - e for v, e in zip(vals, errs)] + [v + e for v, e in zip(vals, errs)] + [0.0])
    out = _frame(title, "", ylabel, None, (lo, hi))
    sy = lambda y: H - PAD_B - (y - lo) / (hi - lo) * (H - PAD_B - PAD_T)
    n = max(len(vals), 1)
    slot = (W - PAD_R - PAD_L) / n
    for i, (lab, v, e) in enumerate(zip(labels, vals, errs)):
        x = PAD_L + slot * i + slot * 0.2
        top, base = sy(max(v, 0.0)), sy(min(v, 0.0))
        out.append(f'<rect class="bar" x="{_f(x)}" y="{_f(top)}" width="{_f(slot * 0.6)}" '
                   f'height="{_f(base - top)}" fill="{COLORS[i % len(COLORS)]}"/>')
        cx = x + slot * 0.3
        if e > 0:
            out.append(f'<line x1="{_f(cx)}" y1="{_f(sy(v - e))}" x2="{_f(cx)}" y2="{_f(sy(v + e))}" stroke="black"/>')
        out.append(f'<text x="{_f(cx)}" y="{H - PAD_B + 16}" text-anchor="middle" font-size="11">{escape(str(lab))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plots(report, out_dir, qps_curve=None) -> list[Path]:
    """Write the value-curve, method-bar and (optionally) load charts.

    ``qps_curve`` is ``(tod, qps, cached_fraction)`` arrays.  Returns the
    paths written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def write(name, text):
        p = out_dir / name
        p.write_text(text)
        written.append(p)

    if qps_curve is not None:
        tod, qps, frac = (np.asarray(x, dtype=float) for x in qps_curve)
        peak = np.max(qps) if len(qps) else 1.0
        write("load.svg", line_chart(
            [("QPS / peak", 24 * tod, qps / peak), ("cached fraction", 24 * tod, frac)],
            "Platform load and cached share", "hour of day", "fraction"))

    method = next((m for m in ("CARL-EL", "CARL-DL") if m in report.methods), None)
    q0 = q1 = np.zeros(0)
    if method is not None:
        c0 = [report.runs[(method, s)].q0_curve for s in report.seeds]
        c1 = [report.runs[(method, s)].q1_curve for s in report.seeds]
        if all(c is not None for c in c0 + c1):
            with warnings.catch_warnings():  # buckets never visited stay NaN
                warnings.simplefilter("ignore", RuntimeWarning)
                q0, q1 = np.nanmean(np.stack(c0), axis=0), np.nanmean(np.stack(c1), axis=0)
    hours = np.arange(len(q0), dtype=float)
    write("q_curves.svg", line_chart([("Q0 real-time", hours, q0), ("Q1 cached", hours, q1)],
                                     f"Value by hour ({method or 'none'})", "hour of day", "value"))

    means = [float(np.mean(report.metric(m, "session_watch"))) for m in report.methods]
    stds = [float(np.std(report.metric(m, "session_watch"))) for m in report.methods]
    write("session_watch.svg", bar_chart(report.methods, means, stds,
                                         "Mean session watch time", "seconds"))
    return written
