"""Deterministic SVG figures: map heatmap and effect curves.

Numbers are printed with fixed precision so that equal inputs give equal bytes.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from ..kre.grid import AccessibilityMap
from ..outcome.effects import EffectCurve

# viridis sampled at 9 evenly spaced points
_RAMP = np.array([
    (68, 1, 84), (71, 44, 122), (59, 81, 139), (44, 113, 142), (33, 144, 141),
    (39, 173, 129), (92, 200, 99), (170, 220, 50), (253, 231, 37)], float)


def ramp(t: np.ndarray) -> list[str]:
    """Hex colours (flattened, C order) for values in [0, 1] by linear interpolation of the ramp."""
    t = np.clip(np.asarray(t, float).ravel(), 0.0, 1.0) * (len(_RAMP) - 1)
    k = np.minimum(t.astype(int), len(_RAMP) - 2)
    f = (t - k)[:, None]
    rgb = np.rint(_RAMP[k] * (1 - f) + _RAMP[k + 1] * f).astype(int)
    return [f"#{r:02x}{g:02x}{b:02x}" for r, g, b in rgb]


def _f(x: float) -> str:
    return f"{x:.2f}"


def heatmap_svg(amap: AccessibilityMap, cell_px: float = 4.0, title: str = "") -> str:
    """One rectangle per map node, campus cross and a colour bar in minutes."""
    nx, ny = amap.nx, amap.ny
    W, H = nx * cell_px, ny * cell_px
    lo, hi = float(amap.values.min()), float(amap.values.max())
    span = hi - lo if hi > lo else 1.0
    cols = ramp((amap.values - lo) / span)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(W + 90)}" height="{_f(H + 40)}" '
           f'viewBox="0 0 {_f(W + 90)} {_f(H + 40)}" font-family="sans-serif" font-size="10">',
           f'<text x="2" y="12">{escape(title)}</text>', '<g transform="translate(0,20)" shape-rendering="crispEdges">']
    for i in range(nx):
        for j in range(ny):
            out.append(f'<rect x="{_f(i * cell_px)}" y="{_f((ny - 1 - j) * cell_px)}" '
                       f'width="{_f(cell_px)}" height="{_f(cell_px)}" fill="{cols[i * ny + j]}"/>')
    ci = (amap.campus.x1 - amap.origin[0]) / amap.spacing
    cj = (amap.campus.x2 - amap.origin[1]) / amap.spacing
    cx, cy = (ci + 0.5) * cell_px, (ny - 1 - cj + 0.5) * cell_px
    r = 3 * cell_px
    out.append(f'<path d="M{_f(cx - r)},{_f(cy)}H{_f(cx + r)}M{_f(cx)},{_f(cy - r)}V{_f(cy + r)}" '
               f'stroke="#ff0000" stroke-width="2"/>')
    out.append(f'<text x="{_f(cx + r)}" y="{_f(cy - r)}" fill="#ff0000">{escape(amap.campus.name)}</text>')
    # legend
    n_leg = 50
    bar_h = H / n_leg
    leg = ramp(np.linspace(1, 0, n_leg))
    for k in range(n_leg):
        out.append(f'<rect x="{_f(W + 10)}" y="{_f(k * bar_h)}" width="14" height="{_f(bar_h + 0.5)}" '
                   f'fill="{leg[k]}"/>')
    for k, v in enumerate(np.linspace(hi, lo, 5)):
        out.append(f'<text x="{_f(W + 28)}" y="{_f(k * H / 4 + 4)}">{v:.1f} min</text>')
    out.append("</g></svg>")
    return "\n".join(out) + "\n"


def _panel(x0: float, y0: float, w: float, h: float, series, ylabel: str) -> list[str]:
    """Line-with-band panel; ``series`` holds ``(grid, est, lo, hi, colour)`` tuples."""
    ys = np.concatenate([np.concatenate([s[2], s[3]]) for s in series])
    ymin, ymax = float(ys.min()), float(ys.max())
    if ymax - ymin < 1e-12:
        ymin, ymax = ymin - 1, ymax + 1
    pad = 0.05 * (ymax - ymin)
    ymin, ymax = ymin - pad, ymax + pad
    gmin = min(float(s[0][0]) for s in series)
    gmax = max(float(s[0][-1]) for s in series)

    def px(a):
        return x0 + (np.asarray(a) - gmin) / (gmax - gmin) * w

    def py(v):
        return y0 + h - (np.asarray(v) - ymin) / (ymax - ymin) * h

    out = [f'<rect x="{_f(x0)}" y="{_f(y0)}" width="{_f(w)}" height="{_f(h)}" fill="none" stroke="#000"/>']
    if ymin < 0 < ymax:
        out.append(f'<line x1="{_f(x0)}" x2="{_f(x0 + w)}" y1="{_f(py(0.0))}" y2="{_f(py(0.0))}" '
                   f'stroke="#888" stroke-dasharray="3,3"/>')
    for grid, est, lo, hi, colour in series:
        X = px(grid)
        poly = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(np.r_[X, X[::-1]], np.r_[py(hi), py(lo)[::-1]]))
        out.append(f'<polygon points="{poly}" fill="{colour}" fill-opacity="0.25" stroke="none"/>')
        line = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(X, py(est)))
        out.append(f'<polyline points="{line}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
    for v in np.linspace(ymin + pad, ymax - pad, 4):
        out.append(f'<text x="{_f(x0 - 4)}" y="{_f(py(v) + 3)}" text-anchor="end">{v:.2f}</text>')
    for a in np.linspace(gmin, gmax, 5):
        out.append(f'<text x="{_f(px(a))}" y="{_f(y0 + h + 12)}" text-anchor="middle">{60 * a:.0f}</text>')
    out.append(f'<text x="{_f(x0 + w / 2)}" y="{_f(y0 + h + 26)}" text-anchor="middle">commuting time [min]</text>')
    out.append(f'<text x="{_f(x0)}" y="{_f(y0 - 6)}">{ylabel}</text>')
    return out


def curves_svg(base: EffectCurve, weighted: EffectCurve | None = None) -> str:
    """ADRF and AMEF panels; unweighted in grey, weighted (if given) in orange."""
    curves = [(base, "#808080")] + ([(weighted, "#ff8c00")] if weighted is not None else [])
    out = ['<svg xmlns="http://www.w3.org/2000/svg" width="760" height="320" viewBox="0 0 760 320" '
           'font-family="sans-serif" font-size="10">']
    out += _panel(60, 30, 300, 240, [(c.grid, c.adrf, c.adrf_lo, c.adrf_hi, col) for c, col in curves],
                  "ADRF [GPA]")
    out += _panel(440, 30, 300, 240, [(c.grid, c.amef, c.amef_lo, c.amef_hi, col) for c, col in curves],
                  "AMEF [GPA / hour]")
    y = 310
    for k, (c, col) in enumerate(curves):
        out.append(f'<rect x="{60 + 160 * k}" y="{y - 8}" width="10" height="10" fill="{col}"/>')
        out.append(f'<text x="{74 + 160 * k}" y="{y}">{escape(c.weights_method)} ({100 * c.level:.0f}% band)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
