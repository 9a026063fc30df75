"""Minimal self-contained SVG bar and line charts.

Output is deterministic (fixed number formatting, no timestamps) so plots can
be hashed into the run manifest and diffed in CI.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN = 56


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _frame(title: str, xlabel: str, ylabel: str, ylo: float, yhi: float) -> list[str]:
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{MARGIN}" y1="{MARGIN + ph}" x2="{MARGIN + pw}" y2="{MARGIN + ph}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{MARGIN + ph}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    for t in _ticks(ylo, yhi):
        y = MARGIN + ph - (t - ylo) / (yhi - ylo) * ph if yhi > ylo else MARGIN + ph
        parts.append(f'<text x="{MARGIN - 4}" y="{_fmt(y + 4)}" text-anchor="end">{t:.3g}</text>')
    return parts


def _yrange(values: Sequence[float]) -> tuple[float, float]:
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    lo, hi = min(0.0, min(finite)), max(finite)
    if hi == lo:
        hi = lo + 1.0
    return lo, hi


def bar_chart(values: Sequence[float], title: str = "", xlabel: str = "", ylabel: str = "", labels: Sequence[str] | None = None) -> str:
    """Bars for each value; non-finite values are drawn as gaps."""
    ylo, yhi = _yrange(values)
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN
    parts = _frame(title, xlabel, ylabel, ylo, yhi)
    n = max(1, len(values))
    slot = pw / n
    zero = MARGIN + ph - (0 - ylo) / (yhi - ylo) * ph
    for i, v in enumerate(values):
        x = MARGIN + i * slot + slot * 0.1
        if math.isfinite(v):
            top = MARGIN + ph - (v - ylo) / (yhi - ylo) * ph
            y, h = min(top, zero), abs(zero - top)
            parts.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(slot * 0.8)}" height="{_fmt(h)}" fill="#4878a8"/>')
        if labels is not None and (n <= 25 or i % max(1, n // 10) == 0):
            parts.append(f'<text x="{_fmt(x + slot * 0.4)}" y="{MARGIN + ph + 14}" text-anchor="middle">{escape(str(labels[i]))}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def line_chart(xs: Sequence[float], ys: Sequence[float], title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    if len(xs) != len(ys):
        raise ValueError("xs and ys differ in length")
    ylo, yhi = _yrange(ys)
    xlo, xhi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    if xhi == xlo:
        xhi = xlo + 1.0
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN
    parts = _frame(title, xlabel, ylabel, ylo, yhi)
    pts = [
        f"{_fmt(MARGIN + (x - xlo) / (xhi - xlo) * pw)},{_fmt(MARGIN + ph - (y - ylo) / (yhi - ylo) * ph)}"
        for x, y in zip(xs, ys)
        if math.isfinite(y)
    ]
    parts.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="#c44e52" stroke-width="2"/>')
    for t in _ticks(xlo, xhi):
        x = MARGIN + (t - xlo) / (xhi - xlo) * pw
        parts.append(f'<text x="{_fmt(x)}" y="{MARGIN + ph + 14}" text-anchor="middle">{t:.3g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write(path: str | Path, svg: str) -> Path:
    path = Path(path)
    path.write_text(svg, encoding="utf-8")
    return path
