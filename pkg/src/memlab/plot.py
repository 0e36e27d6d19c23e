"""Minimal deterministic SVG scatter plot of two CSV columns.

Hand-written SVG rather than a plotting library so that identical input
yields byte-identical output (no timestamps, ids or font metrics).
"""

import csv
import math
from collections import defaultdict
from xml.sax.saxutils import escape

__all__ = ["emit_plot", "read_columns"]

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 30, 50


def read_columns(path, x_col, y_col):
    """Numeric ``(x, y)`` pairs from a CSV, skipping rows marked with an error."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (x_col, y_col):
            if col not in header:
                raise ValueError(f"column {col!r} not found in {path}")
        pairs = []
        for lineno, rec in enumerate(reader, start=2):
            if rec.get("error"):
                continue
            vals = []
            for col in (x_col, y_col):
                try:
                    v = float(rec[col])
                except (TypeError, ValueError):
                    raise ValueError(
                        f"column {col!r} is not numeric (line {lineno}: {rec[col]!r})"
                    ) from None
                if not math.isfinite(v):
                    raise ValueError(f"column {col!r} has a non-finite value on line {lineno}")
                vals.append(v)
            pairs.append(tuple(vals))
    return pairs


def _ticks(lo, hi, n=5):
    if lo == hi:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step) * step
    out = []
    k = 0
    while first + k * step <= hi + 1e-9 * step:
        out.append(first + k * step)
        k += 1
    return out


def _span(vals):
    lo, hi = min(vals), max(vals)
    if lo == hi:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def emit_plot(csv_path, x_col, y_col, out_path):
    """Scatter every row and draw the per-x mean as a line; writes ``out_path``."""
    pairs = read_columns(csv_path, x_col, y_col)
    if not pairs:
        raise ValueError(f"no plottable rows in {csv_path}")
    xs = [p[0] for p in pairs]
    ys = [p[1] for p in pairs]
    x0, x1 = _span(xs)
    y0, y1 = _span(ys)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return TOP + (y1 - y) / (y1 - y0) * ph

    groups = defaultdict(list)
    for x, y in pairs:
        groups[x].append(y)
    means = [(x, sum(v) / len(v)) for x, v in sorted(groups.items())]

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        X = sx(t)
        out.append(f'<line x1="{X:.2f}" y1="{TOP + ph}" x2="{X:.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        Y = sy(t)
        out.append(f'<line x1="{LEFT - 5}" y1="{Y:.2f}" x2="{LEFT}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{Y + 4:.2f}" text-anchor="end">{t:g}</text>')
    out.append(
        f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(x_col)}</text>'
    )
    out.append(
        f'<text x="15" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 15 {TOP + ph / 2:.2f})">{escape(y_col)}</text>'
    )
    if len(means) > 1:
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in means)
        out.append(f'<polyline class="mean" points="{pts}" fill="none" stroke="#c0392b" stroke-width="2"/>')
    for x, y in pairs:
        out.append(
            f'<circle class="point" cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" '
            'fill="#2c3e50" fill-opacity="0.6"/>'
        )
    if len(means) > 1:
        for x, y in means:
            out.append(f'<circle class="mean" cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="4" fill="#c0392b"/>')
    out.append("</svg>")
    with open(out_path, "w", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
    return out_path
