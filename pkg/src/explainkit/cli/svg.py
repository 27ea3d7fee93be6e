"""A very small SVG writer for diagnostic line and bar charts."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT, PAD = 640, 400, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _scale(v, lo, hi, a, b):
    if hi == lo:
        return (a + b) / 2.0
    return a + (v - lo) * (b - a) / (hi - lo)


def _frame(title: str, body: list) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def line_chart(title: str, x, series: list, x_label: str = "", y_label: str = "") -> str:
    """``series`` is a list of (label, y-values, emphasised) tuples sharing the x grid."""
    x = np.asarray(x, dtype=float)
    ys = [np.asarray(s[1], dtype=float) for s in series]
    ylo = min(float(y.min()) for y in ys)
    yhi = max(float(y.max()) for y in ys)
    xlo, xhi = float(x.min()), float(x.max())
    body = [
        f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">{escape(x_label)}</text>',
        f'<text x="12" y="{HEIGHT / 2:.1f}" font-size="12" transform="rotate(-90 12 {HEIGHT / 2:.1f})">{escape(y_label)}</text>',
        f'<text x="{PAD - 4}" y="{HEIGHT - PAD}" text-anchor="end" font-size="10">{ylo:.3g}</text>',
        f'<text x="{PAD - 4}" y="{PAD + 4}" text-anchor="end" font-size="10">{yhi:.3g}</text>',
        f'<text x="{PAD}" y="{HEIGHT - PAD + 14}" text-anchor="middle" font-size="10">{xlo:.3g}</text>',
        f'<text x="{WIDTH - PAD}" y="{HEIGHT - PAD + 14}" text-anchor="middle" font-size="10">{xhi:.3g}</text>',
    ]
    for n, ((label, _, bold), y) in enumerate(zip(series, ys)):
        pts = " ".join(
            f"{_scale(a, xlo, xhi, PAD, WIDTH - PAD):.2f},{_scale(b, ylo, yhi, HEIGHT - PAD, PAD):.2f}"
            for a, b in zip(x, y))
        colour = "black" if bold else PALETTE[n % len(PALETTE)]
        width = 2.5 if bold else 1.0
        body.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="{width}">'
                    f'<title>{escape(label)}</title></polyline>')
    return _frame(title, body)


def bar_chart(title: str, labels, values) -> str:
    """Horizontal bars, drawn top to bottom in the given order."""
    values = np.asarray(values, dtype=float)
    top = float(values.max(initial=0.0)) or 1.0
    step = (HEIGHT - 2 * PAD) / max(len(labels), 1)
    left = PAD + 70
    body = []
    for i, (lab, v) in enumerate(zip(labels, values)):
        y = PAD + i * step
        w = _scale(v, 0.0, top, 0, WIDTH - PAD - left)
        body.append(f'<text x="{left - 4}" y="{y + step * 0.7:.1f}" text-anchor="end" font-size="11">{escape(str(lab))}</text>')
        body.append(f'<rect x="{left}" y="{y + step * 0.15:.1f}" width="{w:.2f}" height="{step * 0.7:.1f}" fill="{PALETTE[0]}"/>')
        body.append(f'<text x="{left + w + 4:.1f}" y="{y + step * 0.7:.1f}" font-size="10">{v:.3g}</text>')
    return _frame(title, body)
