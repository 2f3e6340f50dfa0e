"""Byte-stable SVG charts: scatter + line + band, polylines, dendrograms.

Output depends only on the data (fixed number formatting, no timestamps), so
identical inputs give identical files.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = 50


def _fmt(v):
    return f"{v:.2f}"


class _Frame:
    def __init__(self, x, ys, title, xlabel="", ylabel=""):
        x = np.asarray(x, dtype=float)
        allv = np.concatenate([np.asarray(y, dtype=float).ravel() for y in ys if y is not None])
        self.x0, self.x1 = _span(x)
        self.y0, self.y1 = _span(allv)
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH // 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
            f'y2="{HEIGHT - MARGIN}" stroke="black"/>',
            f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
            f'<text x="{WIDTH // 2}" y="{HEIGHT - 10}" text-anchor="middle" font-size="11">'
            f'{escape(xlabel)}</text>',
            f'<text x="12" y="{HEIGHT // 2}" font-size="11" transform="rotate(-90 12 {HEIGHT // 2})">'
            f'{escape(ylabel)}</text>',
            f'<text x="{MARGIN}" y="{HEIGHT - MARGIN + 14}" font-size="9">{self.x0:.3g}</text>',
            f'<text x="{WIDTH - MARGIN}" y="{HEIGHT - MARGIN + 14}" font-size="9" '
            f'text-anchor="end">{self.x1:.3g}</text>',
            f'<text x="{MARGIN - 4}" y="{HEIGHT - MARGIN}" font-size="9" text-anchor="end">'
            f'{self.y0:.3g}</text>',
            f'<text x="{MARGIN - 4}" y="{MARGIN + 4}" font-size="9" text-anchor="end">{self.y1:.3g}</text>',
        ]

    def px(self, x):
        return MARGIN + (np.asarray(x, float) - self.x0) / (self.x1 - self.x0) * (WIDTH - 2 * MARGIN)

    def py(self, y):
        return HEIGHT - MARGIN - (np.asarray(y, float) - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2 * MARGIN)

    def band(self, x, lo, hi, color="#9ecae1"):
        xs, ls, hs = self.px(x), self.py(lo), self.py(hi)
        pts = [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(xs, hs)]
        pts += [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(xs[::-1], ls[::-1])]
        self.parts.append(f'<polygon class="band" points="{" ".join(pts)}" fill="{color}" '
                          'fill-opacity="0.5" stroke="none"/>')

    def points(self, x, y, color="black", r=2):
        for a, b in zip(self.px(x), self.py(y)):
            self.parts.append(f'<circle class="obs" cx="{_fmt(a)}" cy="{_fmt(b)}" r="{r}" fill="{color}"/>')

    def line(self, x, y, color="red", label=None, width=1.5):
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(self.px(x), self.py(y)))
        self.parts.append(f'<polyline class="fit" points="{pts}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}"/>')
        if label:
            k = sum(p.startswith("<polyline") for p in self.parts)
            self.parts.append(f'<text x="{WIDTH - MARGIN - 4}" y="{MARGIN + 14 * k}" font-size="11" '
                              f'text-anchor="end" fill="{color}">{escape(label)}</text>')

    def write(self, path):
        Path(path).write_text("\n".join(self.parts + ["</svg>"]) + "\n")


def _span(v):
    v = v[np.isfinite(v)]
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.03 * (hi - lo)
    return lo - pad, hi + pad


def prediction_plot(path, x, observed, lines, band=None, title="", xlabel="", ylabel=""):
    """Observed dots, one or more prediction lines, optional (lower, upper) band.

    ``lines`` maps a label to a y-vector aligned with ``x``.
    """
    colors = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"]
    ys = [observed] + list(lines.values())
    if band is not None:
        ys += [band[0], band[1]]
    fr = _Frame(x, ys, title, xlabel, ylabel)
    if band is not None:
        fr.band(x, band[0], band[1])
    fr.points(x, observed)
    for (label, y), c in zip(lines.items(), colors):
        fr.line(x, y, c, label)
    fr.write(path)


def curve_plot(path, x, series, title="", xlabel="", ylabel="", mark=None):
    """Polylines over a shared x; ``mark`` highlights one x position."""
    fr = _Frame(x, list(series.values()), title, xlabel, ylabel)
    for (label, y), c in zip(series.items(), ["#1f77b4", "#d62728", "#2ca02c"]):
        fr.line(x, y, c, label)
        fr.points(x, y, c, r=3)
    if mark is not None:
        xm = fr.px(mark)
        fr.parts.append(f'<line x1="{_fmt(xm)}" y1="{MARGIN}" x2="{_fmt(xm)}" y2="{HEIGHT - MARGIN}" '
                        'stroke="gray" stroke-dasharray="4,3"/>')
    fr.write(path)


def dendrogram(path, merges, heights, labels, title="Dendrogram", cut_height=None):
    """Draw a merge tree (scipy-style child ids: leaves 0..n-1, merge i is n+i)."""
    n = len(labels)
    order = _leaf_order(merges, n)
    xpos = {leaf: i for i, leaf in enumerate(order)}
    top = max(float(np.max(heights)) if len(heights) else 1.0, 1e-9)
    width = max(WIDTH, 14 * n + 2 * MARGIN)
    height = HEIGHT + 120
    base = height - 130

    def X(v):
        return MARGIN + (v + 0.5) / n * (width - 2 * MARGIN)

    def Y(h):
        return base - h / top * (base - MARGIN)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>']
    pos = {i: (X(xpos[i]), 0.0) for i in range(n)}
    for k, ((a, b), h) in enumerate(zip(merges, heights)):
        (xa, ha), (xb, hb) = pos[int(a)], pos[int(b)]
        parts.append(f'<polyline class="merge" points="{_fmt(xa)},{_fmt(Y(ha))} {_fmt(xa)},{_fmt(Y(h))} '
                     f'{_fmt(xb)},{_fmt(Y(h))} {_fmt(xb)},{_fmt(Y(hb))}" fill="none" stroke="black"/>')
        pos[n + k] = ((xa + xb) / 2, float(h))
    if cut_height is not None:
        parts.append(f'<line x1="{MARGIN}" y1="{_fmt(Y(cut_height))}" x2="{width - MARGIN}" '
                     f'y2="{_fmt(Y(cut_height))}" stroke="red" stroke-dasharray="4,3"/>')
    for leaf in order:
        x = X(xpos[leaf])
        parts.append(f'<text x="{_fmt(x)}" y="{base + 8}" font-size="9" '
                     f'transform="rotate(60 {_fmt(x)} {base + 8})">{escape(str(labels[leaf]))}</text>')
    Path(path).write_text("\n".join(parts + ["</svg>"]) + "\n")


def _leaf_order(merges, n):
    if n == 1:
        return [0]
    children = {n + k: (int(a), int(b)) for k, (a, b) in enumerate(merges)}
    out, stack = [], [n + len(merges) - 1]
    while stack:
        v = stack.pop()
        if v < n:
            out.append(v)
        else:
            a, b = children[v]
            stack.extend([b, a])
    return out
