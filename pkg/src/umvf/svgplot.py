"""Minimal standalone SVG line-plot writer (no plotting dependencies)."""

import math
from xml.sax.saxutils import escape

_PALETTE = ("#1f6fb2", "#d1495b", "#3a7d44", "#8e6c8a", "#c77b30", "#4b4b4b")


def _nice_ticks(lo, hi, target=5):
    if not math.isfinite(lo) or not math.isfinite(hi):
        lo, hi = 0.0, 1.0
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    span = hi - lo
    raw = span / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if span / step <= target + 1:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _fmt(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return f"{v:.4g}"


def line_plot(path, series, title="", xlabel="k", ylabel="", width=720, height=440):
    """Write a line plot to `path`.

    `series` is a list of (label, xs, ys) or (label, xs, ys, dashed)
    tuples; colors cycle through a fixed palette.
    """
    margin_l, margin_r, margin_t, margin_b = 62, 16, 34, 46
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    xs_all = [x for s in series for x in s[1]]
    ys_all = [y for s in series for y in s[2] if math.isfinite(y)]
    x_lo, x_hi = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    y_lo, y_hi = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(x):
        return margin_l + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return margin_t + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
            f'font-size="14">{escape(title)}</text>'
        )
    for t in _nice_ticks(x_lo, x_hi):
        x = sx(t)
        parts.append(
            f'<line x1="{x:.2f}" y1="{margin_t}" x2="{x:.2f}" '
            f'y2="{margin_t + plot_h}" stroke="#e0e0e0"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{margin_t + plot_h + 16}" '
            f'text-anchor="middle">{escape(_fmt(t))}</text>'
        )
    for t in _nice_ticks(y_lo, y_hi):
        y = sy(t)
        parts.append(
            f'<line x1="{margin_l}" y1="{y:.2f}" x2="{margin_l + plot_w}" '
            f'y2="{y:.2f}" stroke="#e0e0e0"/>'
        )
        parts.append(
            f'<text x="{margin_l - 6}" y="{y + 4:.2f}" '
            f'text-anchor="end">{escape(_fmt(t))}</text>'
        )
    parts.append(
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#404040"/>'
    )
    if xlabel:
        parts.append(
            f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 10}" '
            f'text-anchor="middle">{escape(xlabel)}</text>'
        )
    if ylabel:
        y_mid = margin_t + plot_h / 2
        parts.append(
            f'<text x="16" y="{y_mid:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {y_mid:.1f})">{escape(ylabel)}</text>'
        )
    for i, s in enumerate(series):
        label, xs, ys = s[0], s[1], s[2]
        dashed = len(s) > 3 and s[3]
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(
            f"{sx(float(x)):.2f},{sy(float(y)):.2f}"
            for x, y in zip(xs, ys)
            if math.isfinite(float(y))
        )
        dash = ' stroke-dasharray="6 4"' if dashed else ""
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.6"{dash}/>'
        )
        lx = margin_l + plot_w - 120
        ly = margin_t + 14 + 16 * i
        parts.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="1.6"{dash}/>'
        )
        parts.append(f'<text x="{lx + 28}" y="{ly}">{escape(str(label))}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(parts) + "\n")
