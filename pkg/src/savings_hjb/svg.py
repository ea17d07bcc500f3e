"""Minimal deterministic SVG line charts from long-format CSV files."""

from __future__ import annotations

import csv
from collections import OrderedDict
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf")
WIDTH, HEIGHT = 720, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 30, 50


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def emit_svg(csv_path, columns, out_path, group_by=(), title: str = "") -> str:
    """Write a line chart of ``columns = (x, y)`` with one series per ``group_by`` value tuple.

    Returns the SVG text.  A missing column raises KeyError naming it.
    """
    xcol, ycol = columns
    group_by = tuple([group_by] if isinstance(group_by, str) else group_by)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (xcol, ycol) + group_by:
            if col not in header:
                raise KeyError(f"column {col!r} not found in {csv_path}")
        series: "OrderedDict[tuple, list]" = OrderedDict()
        for row in reader:
            key = tuple(row[g] for g in group_by)
            series.setdefault(key, []).append((float(row[xcol]), float(row[ycol])))
    pts = [p for s in series.values() for p in s]
    if not pts:
        raise ValueError(f"{csv_path} has no data rows")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return TOP + ph - (v - y0) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{LEFT + pw / 2:.2f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for v in _ticks(x0, x1):
        out.append(f'<text x="{_fmt(sx(v))}" y="{TOP + ph + 18}" text-anchor="middle" font-size="11">{v:.4g}</text>')
    for v in _ticks(y0, y1):
        out.append(f'<text x="{LEFT - 6}" y="{_fmt(sy(v) + 4)}" text-anchor="end" font-size="11">{v:.4g}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">'
               f'{escape(xcol)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.2f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.2f})">{escape(ycol)}</text>')
    for k, (key, s) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        coords = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in s)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        label = ", ".join(f"{g}={v}" for g, v in zip(group_by, key)) or ycol
        ly = TOP + 14 + 16 * k
        out.append(f'<line x1="{LEFT + pw + 10}" y1="{ly - 4}" x2="{LEFT + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 34}" y="{ly}" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text
