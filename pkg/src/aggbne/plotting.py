"""Small deterministic SVG line charts for convergence traces."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=150, top=30, bottom=50)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _fmt(v):
    return f"{v:.2f}"


def _ticks(lo, hi, count=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, count))


def line_chart(series, path, *, xlabel="t", ylabel="value", title="", log_y=False) -> None:
    """Write one polyline per ``(label, x, y)`` entry of ``series``.

    With ``log_y`` non-positive values are dropped and the axis is log10.
    """
    if not series or all(len(x) == 0 for _, x, _ in series):
        raise ValueError("nothing to plot: the trace is empty")
    prepared = []
    for label, x, y in series:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        keep = np.isfinite(x) & np.isfinite(y)
        if log_y:
            keep &= y > 0
        x, y = x[keep], y[keep]
        prepared.append((label, x, np.log10(y) if log_y else y))
    xs = np.concatenate([p[1] for p in prepared])
    ys = np.concatenate([p[2] for p in prepared])
    if xs.size == 0:
        raise ValueError("nothing to plot: no finite points")
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    if log_y:
        y_lo, y_hi = math.floor(y_lo), math.ceil(y_hi)

    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(v):
        return MARGIN["left"] + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return MARGIN["top"] + (1.0 - (v - y_lo) / (y_hi - y_lo)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    x0, y0 = MARGIN["left"], MARGIN["top"] + ph
    out.append(f'<rect x="{x0}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')

    for v in _ticks(x_lo, x_hi):
        out.append(f'<line x1="{_fmt(sx(v))}" y1="{y0}" x2="{_fmt(sx(v))}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(sx(v))}" y="{y0 + 18}" text-anchor="middle">{v:.4g}</text>')
    y_ticks = range(int(y_lo), int(y_hi) + 1) if log_y else _ticks(y_lo, y_hi)
    for v in y_ticks:
        label = f"1e{int(v)}" if log_y else f"{v:.4g}"
        out.append(f'<line x1="{x0 - 5}" y1="{_fmt(sy(v))}" x2="{x0}" y2="{_fmt(sy(v))}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{_fmt(sy(v) + 4)}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{x0 + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.1f})">{escape(ylabel)}</text>'
    )

    for j, (label, x, y) in enumerate(prepared):
        color = PALETTE[j % len(PALETTE)]
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, y))
        out.append(f'<polyline data-label="{escape(label)}" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN["top"] + 12 + 16 * j
        lx = MARGIN["left"] + pw + 10
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 22}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def emit_convergence_svg(trace, path) -> None:
    """Probe trajectories against t, one polyline per ``probe_<i>_<k>`` column."""
    if len(trace) == 0:
        raise ValueError("trace is empty")
    probes = [c for c in trace.columns if c.startswith("probe_")]
    if not probes:
        raise ValueError("trace has no probe columns")
    t = trace.column("t")
    series = []
    for c in probes:
        _, i, k = c.split("_")
        series.append((f"player{i}/type{k}", t, trace.column(c)))
    line_chart(series, path, ylabel="strategy value", title="Strategies at probed types")


LOG_FLOOR = 1e-17


def emit_consensus_svg(trace, path) -> None:
    """Consensus residual (and oracle distance, if recorded) on a log axis.

    Exact zeros are drawn at ``LOG_FLOOR``.
    """
    if len(trace) == 0:
        raise ValueError("trace is empty")
    t = trace.column("t")
    series = [("consensus residual", t, np.maximum(trace.column("consensus_residual"), LOG_FLOOR))]
    dist = trace.column("oracle_distance")
    if np.any(np.isfinite(dist)):
        series.append(("oracle distance", t, np.maximum(dist, LOG_FLOOR)))
    line_chart(series, path, ylabel="log10 scale", title="Consensus and oracle distance", log_y=True)
