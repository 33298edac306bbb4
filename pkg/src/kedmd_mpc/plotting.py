"""Minimal native SVG line plots with a logarithmic y axis.

Enough for ``||x(k)||`` against ``k`` curves; no plotting dependency.
"""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def _log_ticks(lo_exp: int, hi_exp: int, max_ticks=8):
    span = hi_exp - lo_exp
    stride = max(1, math.ceil(span / max_ticks))
    return list(range(lo_exp, hi_exp + 1, stride))


def _linear_ticks(lo, hi, target=6):
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw)) if raw > 0 else 1.0
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=mag)
    first = math.ceil(lo / step) * step
    return list(np.arange(first, hi + 0.5 * step, step))


def semilogy_svg(curves, title="", xlabel="k", ylabel="||x(k)||", width=720, height=440) -> str:
    """Render ``curves`` (a list of ``(label, x, y)``) as an SVG document.

    Nonpositive y values cannot be shown on a log axis and are dropped.
    """
    if not curves:
        raise ValueError("nothing to plot")
    ml, mr, mt, mb = 80, 20, 40, 60
    pw, ph = width - ml - mr, height - mt - mb
    cleaned = []
    for label, xs, ys in curves:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        keep = np.isfinite(ys) & (ys > 0)
        cleaned.append((label, xs[keep], ys[keep]))
    allx = np.concatenate([c[1] for c in cleaned])
    ally = np.concatenate([c[2] for c in cleaned])
    if ally.size == 0:
        raise ValueError("no positive values to plot")
    x0, x1 = float(allx.min()), float(allx.max())
    if x1 == x0:
        x1 = x0 + 1.0
    e0 = math.floor(math.log10(ally.min()))
    e1 = math.ceil(math.log10(ally.max()))
    if e1 == e0:
        e1 += 1

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + (e1 - math.log10(v)) / (e1 - e0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for e in _log_ticks(e0, e1):
        y = sy(10.0**e)
        out.append(f'<line x1="{ml}" y1="{y:.2f}" x2="{ml + pw}" y2="{y:.2f}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{ml - 6}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
    for t in _linear_ticks(x0, x1):
        x = sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{mt}" x2="{x:.2f}" y2="{mt + ph}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{x:.2f}" y="{mt + ph + 16}" text-anchor="middle">{t:g}</text>')
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="18" y="{mt + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {mt + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for i, (label, xs, ys) in enumerate(cleaned):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = mt + 16 + 18 * i
        out.append(f'<line x1="{ml + pw - 190}" y1="{ly - 4}" x2="{ml + pw - 165}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw - 160}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def save_semilogy(path, curves, **kwargs):
    Path(path).write_text(semilogy_svg(curves, **kwargs), encoding="utf-8")
