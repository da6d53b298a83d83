"""Static SVG chart: realized series, counterfactual mean and shaded credible bands."""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 720, 420
MARGIN = dict(left=70, right=20, top=30, bottom=50)
BAND_FILL = {0.9: "#f4b6b6", 0.7: "#d96c6c"}


def _f(x: float) -> str:
    return f"{x:.2f}"


def counterfactual_chart(periods, realized, mean, bands: dict[float, tuple[np.ndarray, np.ndarray]],
                         title: str = "", ylabel: str = "outcome") -> str:
    """Bands are drawn widest first; each is a closed polygon low -> high."""
    realized = np.asarray(realized, dtype=float)
    mean = np.asarray(mean, dtype=float)
    n = realized.size
    values = [realized, mean] + [np.asarray(v, dtype=float) for pair in bands.values() for v in pair]
    lo = min(float(v.min()) for v in values)
    hi = max(float(v.max()) for v in values)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def sx(i):
        return x0 + (x1 - x0) * (i / max(n - 1, 1))

    def sy(v):
        return y0 + (y1 - y0) * ((v - lo) / (hi - lo))

    def path(series):
        return " ".join(f"{_f(sx(i))},{_f(sy(v))}" for i, v in enumerate(series))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>')
    for level in sorted(bands, reverse=True):
        low, high = (np.asarray(v, dtype=float) for v in bands[level])
        pts = [f"{_f(sx(i))},{_f(sy(v))}" for i, v in enumerate(low)]
        pts += [f"{_f(sx(i))},{_f(sy(v))}" for i, v in reversed(list(enumerate(high)))]
        fill = BAND_FILL.get(level, "#cccccc")
        out.append(f'<polygon class="band" data-level="{level}" points="{" ".join(pts)}" '
                   f'fill="{fill}" fill-opacity="0.6" stroke="none"/>')
    out.append(f'<polyline class="counterfactual" points="{path(mean)}" fill="none" '
               f'stroke="#c00000" stroke-width="2"/>')
    out.append(f'<polyline class="realized" points="{path(realized)}" fill="none" '
               f'stroke="black" stroke-width="2"/>')
    # axes
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    step = max(1, n // 10)
    for i in range(0, n, step):
        out.append(f'<text x="{_f(sx(i))}" y="{y0 + 18}" text-anchor="middle" font-size="11">'
                   f'{periods[i]}</text>')
    for v in np.linspace(lo + pad, hi - pad, 5):
        out.append(f'<text x="{x0 - 6}" y="{_f(sy(v) + 4)}" text-anchor="end" font-size="11">'
                   f'{v:.4g}</text>')
    out.append(f'<text x="16" y="{(y0 + y1) / 2}" font-size="12" '
               f'transform="rotate(-90 16 {(y0 + y1) / 2})" text-anchor="middle">{ylabel}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
