"""Standalone SVG rendering of butterfly sweeps, no plotting dependency.

Axes follow the classic layout: energy horizontal in [-4, 4], flux value
vertical in [0, 1].  Every flux row draws one black bar per spectral
interval; with coloring enabled, the open gaps between consecutive
intervals are filled by a palette keyed on the gap label (0 white,
positive labels a warm ramp, negative labels a cool ramp).
"""

from __future__ import annotations

import numpy as np

ENERGY_RANGE = (-4.0, 4.0)


def _fmt(x):
    return f"{x:.3f}"


def gap_color(label, max_label=6):
    """Hex fill for a gap label: warm ramp positive, cool ramp negative."""
    if label == 0:
        return "#ffffff"
    t = min(abs(int(label)), max_label) / max_label
    if label > 0:
        r, g, b = 255, int(200 - 170 * t), int(180 - 180 * t)
    else:
        r, g, b = int(180 - 180 * t), int(200 - 170 * t), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def render_svg(data, width=900, height=600, palette=gap_color):
    """Render ButterflyData as a standalone SVG 1.1 document (a string).

    Rows must carry gap labels (see ``colored_butterfly``) for the colored
    rendering; rows with ``None`` labels draw only their interval bars.
    """
    margin = 40
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin
    e_lo, e_hi = ENERGY_RANGE
    max_q = max(row[0].q for row in data.rows)
    bar_h = max(1.0, plot_h / (1.5 * max_q * max_q))

    def x_of(e):
        return margin + (e - e_lo) / (e_hi - e_lo) * plot_w

    def y_of(flux_value):
        return margin + (1.0 - flux_value) * plot_h

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    gap_rects = []
    bar_rects = []
    for flux, intervals, labels in data.rows:
        fv = flux.p / flux.q
        y = y_of(fv) - 0.5 * bar_h
        if labels:
            for (hi_prev, lo_next), label in zip(intervals.gaps(), labels):
                # labels store the cumulative Chern number below the gap;
                # the figure convention colors by the overlying sum, -label
                gap_rects.append(
                    f'<rect x="{_fmt(x_of(hi_prev))}" y="{_fmt(y)}" '
                    f'width="{_fmt(x_of(lo_next) - x_of(hi_prev))}" '
                    f'height="{_fmt(bar_h)}" fill="{palette(-label)}"/>'
                )
        for lo, hi in np.atleast_2d(intervals.intervals):
            bar_rects.append(
                f'<rect x="{_fmt(x_of(lo))}" y="{_fmt(y)}" '
                f'width="{_fmt(max(x_of(hi) - x_of(lo), 0.5))}" '
                f'height="{_fmt(bar_h)}" fill="#000000"/>'
            )
    parts.extend(gap_rects)
    parts.extend(bar_rects)
    parts.append(
        f'<rect x="{margin}" y="{margin}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#000000" stroke-width="1"/>'
    )
    for e in range(int(e_lo), int(e_hi) + 1):
        x = x_of(e)
        parts.append(
            f'<line x1="{_fmt(x)}" y1="{height - margin}" x2="{_fmt(x)}" '
            f'y2="{height - margin + 5}" stroke="#000000" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(x)}" y="{height - margin + 18}" font-size="11" '
            f'text-anchor="middle">{e}</text>'
        )
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = y_of(tick)
        parts.append(
            f'<line x1="{margin - 5}" y1="{_fmt(y)}" x2="{margin}" '
            f'y2="{_fmt(y)}" stroke="#000000" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{margin - 8}" y="{_fmt(y + 4)}" font-size="11" '
            f'text-anchor="end">{tick:g}</text>'
        )
    parts.append(
        f'<text x="{width / 2:g}" y="{height - 8}" font-size="12" '
        'text-anchor="middle">energy</text>'
    )
    parts.append(
        f'<text x="12" y="{height / 2:g}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 12 {height / 2:g})">flux / 2&#960;</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
