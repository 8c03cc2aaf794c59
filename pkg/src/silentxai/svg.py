"""Minimal hand-written SVG charts for the report. CSV stays the canonical output."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H = 640, 420
PAD_L, PAD_R, PAD_T, PAD_B = 70, 30, 30, 50


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class Canvas:
    def __init__(self, width=W, height=H, title=""):
        self.width, self.height = width, height
        self.parts = [f'<rect width="{width}" height="{height}" fill="white"/>']
        if title:
            self.text(width / 2, 18, title, size=14, anchor="middle")

    def line(self, x1, y1, x2, y2, stroke="black", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
                          f'stroke="{stroke}" stroke-width="{width}"{d}/>')

    def circle(self, x, y, r, fill, opacity=0.7):
        self.parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{r}" fill="{fill}" fill-opacity="{opacity}"/>')

    def rect(self, x, y, w, h, fill):
        self.parts.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(max(w, 0))}" height="{_fmt(max(h, 0))}" fill="{fill}"/>')

    def polyline(self, pts, stroke, width=2.0):
        s = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        self.parts.append(f'<polyline points="{s}" fill="none" stroke="{stroke}" stroke-width="{width}"/>')

    def text(self, x, y, s, size=11, anchor="start", rotate=None):
        r = f' transform="rotate({rotate} {_fmt(x)} {_fmt(y)})"' if rotate is not None else ""
        self.parts.append(f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-family="sans-serif" font-size="{size}" '
                          f'text-anchor="{anchor}"{r}>{escape(str(s))}</text>')

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">\n{body}\n</svg>\n')


def _scale(lo, hi, a, b):
    if hi == lo:
        hi = lo + 1.0
    return lambda v: a + (v - lo) * (b - a) / (hi - lo)


def _lerp_color(t: float) -> str:
    # blue (low) -> red (high)
    t = min(max(t, 0.0), 1.0)
    r, g, b = int(30 + 200 * t), int(80 - 40 * t), int(220 - 190 * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def _axes(c: Canvas, xs, ys, xlabel, ylabel, x0, x1, y0, y1):
    c.line(PAD_L, c.height - PAD_B, c.width - PAD_R, c.height - PAD_B)
    c.line(PAD_L, PAD_T, PAD_L, c.height - PAD_B)
    for k in range(5):
        vx = x0 + (x1 - x0) * k / 4
        vy = y0 + (y1 - y0) * k / 4
        c.text(xs(vx), c.height - PAD_B + 15, f"{vx:.2f}", size=9, anchor="middle")
        c.text(PAD_L - 5, ys(vy) + 3, f"{vy:.2f}", size=9, anchor="end")
    c.text((PAD_L + c.width - PAD_R) / 2, c.height - 10, xlabel, anchor="middle")
    c.text(15, (PAD_T + c.height - PAD_B) / 2, ylabel, anchor="middle", rotate=-90)


def beeswarm(rows, title="SHAP values of the top features") -> str:
    """``rows``: (feature, rank, shap_value, bit). One horizontal band per feature, coloured by bit."""
    feats = sorted({(r[1], r[0]) for r in rows})
    c = Canvas(height=max(H, 40 * len(feats) + PAD_T + PAD_B), title=title)
    vals = [r[2] for r in rows] or [0.0]
    lo, hi = min(vals + [0.0]), max(vals + [0.0])
    xs = _scale(lo, hi, PAD_L + 40, c.width - PAD_R)
    band = (c.height - PAD_T - PAD_B) / max(len(feats), 1)
    ypos = {f: PAD_T + band * (i + 0.5) for i, (_, f) in enumerate(feats)}
    c.line(xs(0), PAD_T, xs(0), c.height - PAD_B, stroke="#888", dash="4,3")
    for _, f in feats:
        c.text(PAD_L + 35, ypos[f] + 4, f, anchor="end")
    # deterministic jitter so stacked points stay visible
    for i, (f, _, v, bit) in enumerate(rows):
        jitter = ((i * 2654435761) % 1000 / 1000 - 0.5) * band * 0.6
        c.circle(xs(v), ypos[f] + jitter, 2, "#d62728" if bit else "#1f77b4", 0.5)
    c.text((PAD_L + c.width - PAD_R) / 2, c.height - 10, "SHAP value (red: feature set, blue: unset)", anchor="middle")
    return c.render()


def scatter(rows, title="Silent ratio vs combined SHAP") -> str:
    """``rows``: (combined_shap, silent_ratio, log10_support)."""
    c = Canvas(title=title)
    xs_ = [r[0] for r in rows] or [0.0]
    ys_ = [r[1] for r in rows] or [0.0]
    x0, x1 = min(xs_), max(xs_)
    xs = _scale(x0, x1, PAD_L, c.width - PAD_R)
    ys = _scale(0.0, 1.0, c.height - PAD_B, PAD_T)
    _axes(c, xs, ys, "combined SHAP", "silent ratio", x0, x1, 0.0, 1.0)
    sups = [r[2] for r in rows] or [0.0]
    s0, s1 = min(sups), max(sups)
    for x, y, s in rows:
        t = 0.5 if s1 == s0 else (s - s0) / (s1 - s0)
        c.circle(xs(x), ys(y), 3, _lerp_color(t))
    c.text(c.width - PAD_R, PAD_T + 10, f"colour: log10 support {s0:.2f}..{s1:.2f}", size=9, anchor="end")
    return c.render()


def grouped_bars(groups, title="Per-feature contribution") -> str:
    """``groups``: list of (label, [(feature, value), ...])."""
    c = Canvas(width=max(W, 60 * len(groups) + PAD_L + PAD_R), title=title)
    vals = [v for _, items in groups for _, v in items] or [0.0]
    lo, hi = min(vals + [0.0]), max(vals + [0.0])
    ys = _scale(lo, hi, c.height - PAD_B, PAD_T)
    palette = ["#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd"]
    feats = []
    for _, items in groups:
        for f, _ in items:
            if f not in feats:
                feats.append(f)
    gw = (c.width - PAD_L - PAD_R) / max(len(groups), 1)
    c.line(PAD_L, ys(0), c.width - PAD_R, ys(0))
    c.line(PAD_L, PAD_T, PAD_L, c.height - PAD_B)
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        c.text(PAD_L - 5, ys(v) + 3, f"{v:.2f}", size=9, anchor="end")
    for g, (label, items) in enumerate(groups):
        bw = gw * 0.8 / max(len(items), 1)
        for j, (f, v) in enumerate(items):
            x = PAD_L + g * gw + gw * 0.1 + j * bw
            top, bottom = (ys(v), ys(0)) if v >= 0 else (ys(0), ys(v))
            c.rect(x, top, bw * 0.9, bottom - top, palette[feats.index(f) % len(palette)])
        c.text(PAD_L + g * gw + gw / 2, c.height - PAD_B + 14, label, size=8, anchor="middle")
    for i, f in enumerate(feats):
        c.rect(c.width - PAD_R - 80, PAD_T + 14 * i, 10, 10, palette[i % len(palette)])
        c.text(c.width - PAD_R - 65, PAD_T + 14 * i + 9, f, size=10)
    return c.render()


def curves(x, series, xlabel, ylabel, title="") -> str:
    """``series``: list of (name, values) sharing the ``x`` grid."""
    c = Canvas(title=title)
    allv = [v for _, vs in series for v in vs] or [0.0]
    y0, y1 = min(allv + [0.0]), max(allv)
    if not math.isfinite(y1) or y1 == y0:
        y1 = y0 + 1.0
    xs = _scale(min(x), max(x), PAD_L, c.width - PAD_R)
    ys = _scale(y0, y1, c.height - PAD_B, PAD_T)
    _axes(c, xs, ys, xlabel, ylabel, min(x), max(x), y0, y1)
    palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"]
    for i, (name, vs) in enumerate(series):
        col = palette[i % len(palette)]
        c.polyline([(xs(a), ys(b)) for a, b in zip(x, vs)], col)
        c.rect(PAD_L + 10, PAD_T + 14 * i, 10, 10, col)
        c.text(PAD_L + 25, PAD_T + 14 * i + 9, name, size=10)
    return c.render()
