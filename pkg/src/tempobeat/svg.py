"""Minimal deterministic SVG charts (line, grouped bar).

Coordinates are printed with two decimals so output is byte-stable; every
data point also carries ``data-x``/``data-y`` (or ``data-value``) attributes
so tests can read values back without parsing geometry.
"""
from __future__ import annotations

import math
from html import escape

WIDTH, HEIGHT = 640, 360
MARGIN = {"left": 60, "right": 20, "top": 36, "bottom": 48}
PALETTE = ("#1f2937", "#c0392b", "#2563eb", "#d4a017", "#16a34a", "#7c3aed")


def _f(x):
    return f"{x:.2f}"


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12:
        out.append(round(v, 10))
        v += step
    return out


def _frame(title, xlabel, ylabel, body, legend):
    w, h = WIDTH, HEIGHT
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" '
        f'font-family="sans-serif" font-size="11">',
        f'<text class="title" x="{w / 2:.0f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text class="xlabel" x="{w / 2:.0f}" y="{h - 8}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text class="ylabel" x="14" y="{h / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {h / 2:.0f})">{escape(ylabel)}</text>',
    ]
    parts.extend(body)
    for i, (label, color) in enumerate(legend):
        y = MARGIN["top"] + 4 + 14 * i
        x = w - MARGIN["right"] - 130
        parts.append(f'<rect class="legend" x="{x}" y="{y}" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{x + 14}" y="{y + 9}">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _axes(x0, x1, y0, y1, xticks, yticks, sx, sy, xfmt=str):
    out = []
    left, bottom = MARGIN["left"], HEIGHT - MARGIN["bottom"]
    out.append(f'<line class="axis" x1="{left}" y1="{bottom}" x2="{WIDTH - MARGIN["right"]}" y2="{bottom}" stroke="#000"/>')
    out.append(f'<line class="axis" x1="{left}" y1="{MARGIN["top"]}" x2="{left}" y2="{bottom}" stroke="#000"/>')
    for t in yticks:
        y = sy(t)
        out.append(f'<line x1="{left - 4}" y1="{_f(y)}" x2="{left}" y2="{_f(y)}" stroke="#000"/>')
        out.append(f'<text x="{left - 6}" y="{_f(y + 4)}" text-anchor="end">{t:g}</text>')
    for t, label in xticks:
        x = sx(t)
        out.append(f'<line x1="{_f(x)}" y1="{bottom}" x2="{_f(x)}" y2="{bottom + 4}" stroke="#000"/>')
        out.append(f'<text x="{_f(x)}" y="{bottom + 16}" text-anchor="middle">{escape(xfmt(label))}</text>')
    return out


def line_chart(series, title="", xlabel="", ylabel="", ylim=None, zero_line=True):
    """``series``: list of (label, xs, ys).  One polyline and one marker per point."""
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys if y is not None and math.isfinite(y)]
    x0, x1 = (min(xs_all), max(xs_all)) if xs_all else (0, 1)
    if x1 == x0:
        x1 = x0 + 1
    if ylim is None:
        y0, y1 = (min(ys_all + [0.0]), max(ys_all + [0.0])) if ys_all else (0.0, 1.0)
        pad = 0.05 * (y1 - y0 or 1.0)
        y0, y1 = y0 - pad, y1 + pad
    else:
        y0, y1 = ylim
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN["top"] + (y1 - y) / (y1 - y0) * ph

    xt = [(t, f"{t:g}") for t in _ticks(x0, x1, 8)]
    body = _axes(x0, x1, y0, y1, xt, _ticks(y0, y1, 5), sx, sy)
    if zero_line and y0 < 0 < y1:
        body.append(f'<line class="zero" x1="{MARGIN["left"]}" y1="{_f(sy(0))}" '
                    f'x2="{WIDTH - MARGIN["right"]}" y2="{_f(sy(0))}" stroke="#999" stroke-dasharray="3,3"/>')
    legend = []
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        legend.append((label, color))
        pts = [(x, y) for x, y in zip(xs, ys) if y is not None and math.isfinite(y)]
        body.append(f'<polyline class="series" data-label="{escape(label)}" fill="none" stroke="{color}" '
                    f'stroke-width="1.5" points="{" ".join(f"{_f(sx(x))},{_f(sy(y))}" for x, y in pts)}"/>')
        for x, y in pts:
            body.append(f'<circle class="point" data-series="{escape(label)}" data-x="{x:g}" data-y="{y:.6g}" '
                        f'cx="{_f(sx(x))}" cy="{_f(sy(y))}" r="1.8" fill="{color}"/>')
    return _frame(title, xlabel, ylabel, body, legend)


def bar_chart(categories, series, title="", xlabel="", ylabel=""):
    """Grouped bars: ``series`` is a list of (label, values aligned with categories)."""
    vals = [v for _, vs in series for v in vs if v is not None and math.isfinite(v)]
    y0 = min(0.0, min(vals)) if vals else 0.0
    y1 = max(vals) * 1.05 if vals and max(vals) > 0 else 1.0
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    n = max(len(categories), 1)
    group_w = pw / n
    bar_w = group_w * 0.8 / max(len(series), 1)

    def sx(i):
        return MARGIN["left"] + (i + 0.5) * group_w

    def sy(y):
        return MARGIN["top"] + (y1 - y) / (y1 - y0) * ph

    xt = [(i, str(c)) for i, c in enumerate(categories)]
    body = _axes(0, n, y0, y1, xt, _ticks(y0, y1, 5), sx, sy)
    legend = []
    for k, (label, values) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        legend.append((label, color))
        for i, v in enumerate(values):
            if v is None or not math.isfinite(v):
                continue
            x = MARGIN["left"] + i * group_w + group_w * 0.1 + k * bar_w
            top, base = sy(max(v, 0.0)), sy(min(v, 0.0))
            body.append(f'<rect class="bar" data-series="{escape(label)}" data-category="{escape(str(categories[i]))}" '
                        f'data-value="{v:.6g}" x="{_f(x)}" y="{_f(top)}" width="{_f(bar_w)}" '
                        f'height="{_f(max(base - top, 0.0))}" fill="{color}"/>')
    return _frame(title, xlabel, ylabel, body, legend)
