"""Minimal self-contained SVG emission: line plots and score heatmaps.

No external assets, no timestamps — output bytes depend only on the data,
so reruns from the same manifest reproduce files exactly.
"""

from __future__ import annotations

import math
from pathlib import Path

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 70, 160, 40, 55  # margins; right edge hosts the legend


def _fmt(value: float) -> str:
    return f"{value:.2f}".rstrip("0").rstrip(".")


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def line_plot(
    path: str | Path,
    x_values,
    series: dict,
    title: str = "",
    x_label: str = "",
    y_label: str = "",
) -> None:
    """Write a multi-series line plot; one colored polyline per series."""
    xs = [float(v) for v in x_values]
    finite = [
        float(v)
        for values in series.values()
        for v in values
        if not math.isnan(float(v))
    ]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = (min(finite), max(finite)) if finite else (0.0, 1.0)
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    if x_hi - x_lo < 1e-12:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def sx(x: float) -> float:
        return _ML + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return _MT + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" font-size="15">{title}</text>'
        )
    for tick in _ticks(x_lo, x_hi):
        px = sx(tick)
        parts.append(
            f'<line x1="{px:.1f}" y1="{_MT + plot_h}" x2="{px:.1f}" '
            f'y2="{_MT + plot_h + 5}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{px:.1f}" y="{_MT + plot_h + 18}" text-anchor="middle">{_fmt(tick)}</text>'
        )
    for tick in _ticks(y_lo, y_hi):
        py = sy(tick)
        parts.append(
            f'<line x1="{_ML - 5}" y1="{py:.1f}" x2="{_ML}" y2="{py:.1f}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{_ML - 8}" y="{py + 4:.1f}" text-anchor="end">{_fmt(tick)}</text>'
        )
    if x_label:
        parts.append(
            f'<text x="{_ML + plot_w / 2:.1f}" y="{_H - 12}" text-anchor="middle">{x_label}</text>'
        )
    if y_label:
        parts.append(
            f'<text x="18" y="{_MT + plot_h / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 18 {_MT + plot_h / 2:.1f})">{y_label}</text>'
        )
    for i, (name, values) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        points = " ".join(
            f"{sx(x):.2f},{sy(float(y)):.2f}"
            for x, y in zip(xs, values)
            if not math.isnan(float(y))
        )
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        ly = _MT + 16 + 18 * i
        parts.append(
            f'<line x1="{_W - _MR + 12}" y1="{ly - 4}" x2="{_W - _MR + 34}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{_W - _MR + 40}" y="{ly}">{name}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def _heat_color(value: float) -> str:
    """Blue (0) through white (0.5) to red (1)."""
    v = min(max(value, 0.0), 1.0)
    if v < 0.5:
        t = v / 0.5
        r, g, b = int(60 + 195 * t), int(110 + 145 * t), 255
    else:
        t = (v - 0.5) / 0.5
        r, g, b = 255, int(255 - 160 * t), int(255 - 200 * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def _contour_segments(grid, xs, ys, level: float) -> list[tuple]:
    """Marching-squares line segments of the level set, in data coordinates."""

    def interp(a, b, fa, fb):
        if fb == fa:
            return a
        t = (level - fa) / (fb - fa)
        return a + t * (b - a)

    segments = []
    for i in range(len(ys) - 1):
        for j in range(len(xs) - 1):
            corners = [
                (xs[j], ys[i], grid[i][j]),
                (xs[j + 1], ys[i], grid[i][j + 1]),
                (xs[j + 1], ys[i + 1], grid[i + 1][j + 1]),
                (xs[j], ys[i + 1], grid[i + 1][j]),
            ]
            crossings = []
            for a in range(4):
                x0, y0, f0 = corners[a]
                x1, y1, f1 = corners[(a + 1) % 4]
                if (f0 < level) != (f1 < level):
                    crossings.append(
                        (interp(x0, x1, f0, f1), interp(y0, y1, f0, f1))
                    )
            if len(crossings) >= 2:
                segments.append((crossings[0], crossings[1]))
            if len(crossings) == 4:  # saddle: pair the remaining crossings
                segments.append((crossings[2], crossings[3]))
    return segments


def heatmap(
    path: str | Path,
    grid,
    xs,
    ys,
    title: str = "",
    contour_level: float | None = 0.5,
    scatter=None,
) -> None:
    """Write a score heatmap with an optional level contour and scatter.

    ``scatter`` is an iterable of (x, y, class_index) triples.
    """
    xs = [float(v) for v in xs]
    ys = [float(v) for v in ys]
    nx, ny = len(xs), len(ys)
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB
    x_lo, x_hi = xs[0], xs[-1]
    y_lo, y_hi = ys[0], ys[-1]

    def sx(x: float) -> float:
        return _ML + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return _MT + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    cell_w = plot_w / (nx - 1)
    cell_h = plot_h / (ny - 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" font-size="15">{title}</text>'
        )
    for i in range(ny):
        for j in range(nx):
            px = sx(xs[j]) - cell_w / 2
            py = sy(ys[i]) - cell_h / 2
            parts.append(
                f'<rect x="{px:.2f}" y="{py:.2f}" width="{cell_w + 0.5:.2f}" '
                f'height="{cell_h + 0.5:.2f}" fill="{_heat_color(float(grid[i][j]))}"/>'
            )
    if contour_level is not None:
        for (x0, y0), (x1, y1) in _contour_segments(grid, xs, ys, contour_level):
            parts.append(
                f'<line x1="{sx(x0):.2f}" y1="{sy(y0):.2f}" x2="{sx(x1):.2f}" '
                f'y2="{sy(y1):.2f}" stroke="#111" stroke-width="2"/>'
            )
    if scatter:
        for x, y, cls in scatter:
            color = _PALETTE[int(cls) % len(_PALETTE)]
            parts.append(
                f'<circle cx="{sx(float(x)):.2f}" cy="{sy(float(y)):.2f}" r="4" '
                f'fill="{color}" stroke="black" stroke-width="0.8"/>'
            )
    parts.append(
        f'<rect x="{_ML}" y="{_MT}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>'
    )
    for tick in _ticks(x_lo, x_hi):
        px = sx(tick)
        parts.append(
            f'<text x="{px:.1f}" y="{_MT + plot_h + 18}" text-anchor="middle">{_fmt(tick)}</text>'
        )
    for tick in _ticks(y_lo, y_hi):
        py = sy(tick)
        parts.append(
            f'<text x="{_ML - 8}" y="{py + 4:.1f}" text-anchor="end">{_fmt(tick)}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
