"""Minimal deterministic SVG writer for phase portraits and pull-in diagrams.

Output depends only on the input numbers, so identical runs give identical files.
"""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .integrate import wrap_display

WIDTH, HEIGHT = 640, 480
MARGIN = 56
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


class _Axes:
    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            pad = max(abs(self.y0), 1.0) * 0.5
            self.y0, self.y1 = self.y0 - pad, self.y1 + pad

    def px(self, x, y):
        u = MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2 * MARGIN)
        v = HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2 * MARGIN)
        return u, v


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _polyline(ax, xs, ys, color, dash=None, width=1.2):
    pts = " ".join(f"{_fmt(u)},{_fmt(v)}" for u, v in (ax.px(x, y) for x, y in zip(xs, ys)))
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{extra}/>')


def _frame(ax, xlabel, ylabel, title, xticks, yticks):
    out = [f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" '
           f'height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="black"/>']
    for val, label in xticks:
        u, _ = ax.px(val, ax.y0)
        out.append(f'<text x="{_fmt(u)}" y="{HEIGHT - MARGIN + 16}" font-size="11" '
                   f'text-anchor="middle">{escape(label)}</text>')
    for val, label in yticks:
        _, v = ax.px(ax.x0, val)
        out.append(f'<text x="{MARGIN - 6}" y="{_fmt(v + 4)}" font-size="11" '
                   f'text-anchor="end">{escape(label)}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" font-size="13" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{HEIGHT / 2}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 16 {HEIGHT / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="{MARGIN - 16}" font-size="14" '
                   f'text-anchor="middle">{escape(title)}</text>')
    return out


def _ticks(lo, hi, n=5):
    return [(v, f"{v:.3g}") for v in np.linspace(lo, hi, n)]


def _document(body):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def _wrapped_pieces(theta, x):
    """Split a trajectory where the displayed phase wraps around."""
    w = wrap_display(np.asarray(theta))
    cut = np.nonzero(np.abs(np.diff(w)) > math.pi / 2)[0] + 1
    return [(w[a:b], x[a:b]) for a, b in zip(np.r_[0, cut], np.r_[cut, len(w)]) if b - a > 1]


def _decimate(theta, x, limit=4000):
    step = max(1, len(theta) // limit)
    return theta[::step], x[::step]


def portrait_svg(trajectories, equilibria=(), cycles=(), title: str = "") -> str:
    """Phase portrait on ``[-pi/2, pi/2) x R``.

    ``trajectories`` is a list of ``(theta, x)`` arrays; ``equilibria`` a list
    of ``(theta, x, stable)``; ``cycles`` a list of ``(theta, x, stable)``
    orbits.  Stable cycles are drawn solid, unstable ones dashed.
    """
    curves = [(np.asarray(t, float), np.asarray(x, float)) for t, x in trajectories]
    orbits = [(np.asarray(t, float), np.asarray(x, float), s) for t, x, s in cycles]
    ys = [x for _, x in curves] + [x for _, x, _ in orbits] + [np.array([e[1] for e in equilibria])]
    ys = np.concatenate([y[np.isfinite(y)] for y in ys if len(y)] or [np.zeros(1)])
    lo, hi = float(ys.min()), float(ys.max())
    pad = 0.05 * (hi - lo) if hi > lo else 0.0
    ax = _Axes((-math.pi / 2, math.pi / 2), (lo - pad, hi + pad))
    body = _frame(ax, "phase error (rad, wrapped)", "filter state", title,
                  [(v, f"{v:.2f}") for v in np.linspace(-math.pi / 2, math.pi / 2, 5)],
                  _ticks(ax.y0, ax.y1))
    for i, (th, x) in enumerate(curves):
        th, x = _decimate(th, x)
        for pt, px in _wrapped_pieces(th, x):
            body.append(_polyline(ax, pt, px, PALETTE[i % len(PALETTE)], width=0.9))
    for th, x, stable in orbits:
        for pt, px in _wrapped_pieces(th, x):
            body.append(_polyline(ax, pt, px, "black", None if stable else "6,4", width=2.0))
    for th, x, stable in equilibria:
        u, v = ax.px(float(wrap_display(th)), x)
        fill = "black" if stable else "white"
        body.append(f'<circle cx="{_fmt(u)}" cy="{_fmt(v)}" r="4" fill="{fill}" stroke="black"/>')
    return _document(body)


def diagram_svg(rows, title: str = "") -> str:
    """Normalized pull-in frequency against loop gain, one curve per ``a``."""
    good = [r for r in rows if math.isfinite(r.normalized)]
    Ks = [r.K_vco for r in good] or [1.0]
    ns = [r.normalized for r in good] or [0.0]
    log = min(Ks) > 0 and max(Ks) / min(Ks) > 20
    tx = (lambda k: math.log10(k)) if log else (lambda k: k)
    ax = _Axes((tx(min(Ks)), tx(max(Ks))), (0.0, max(ns) * 1.05 if max(ns) > 0 else 1.0))
    xt = [(v, f"{10 ** v:.3g}" if log else f"{v:.3g}") for v in np.linspace(ax.x0, ax.x1, 5)]
    body = _frame(ax, "loop gain K_vco" + (" (log)" if log else ""),
                  "pull-in frequency / K_vco", title, xt, _ticks(ax.y0, ax.y1))
    a_values = []
    for r in rows:
        if r.a not in a_values:
            a_values.append(r.a)
    for i, a in enumerate(a_values):
        pts = sorted((r.K_vco, r.normalized) for r in good if r.a == a)
        color = PALETTE[i % len(PALETTE)]
        if len(pts) > 1:
            body.append(_polyline(ax, [tx(k) for k, _ in pts], [n for _, n in pts], color, width=1.6))
        for k, n in pts:
            u, v = ax.px(tx(k), n)
            body.append(f'<circle cx="{_fmt(u)}" cy="{_fmt(v)}" r="2.5" fill="{color}"/>')
        body.append(f'<text x="{WIDTH - MARGIN - 4}" y="{MARGIN + 16 + 14 * i}" font-size="11" '
                    f'text-anchor="end" fill="{color}">a = {a:g}</text>')
    return _document(body)
