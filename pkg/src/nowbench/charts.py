"""Plain SVG line charts: actual series solid, one dotted line per vintage."""

from __future__ import annotations

import numpy as np

_PALETTE = ["#c0392b", "#d35400", "#27ae60", "#2980b9", "#8e44ad"]


def _scale(values, lo, hi, out_lo, out_hi):
    if hi == lo:
        hi = lo + 1.0
    return [(out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)) for v in values]


def _polyline(xs, ys, color, dashed=False, width=1.5) -> str:
    pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(xs, ys))
    dash = ' stroke-dasharray="5,4"' if dashed else ""
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}"{dash} points="{pts}" />'


def nowcast_chart(
    labels: list[str],
    actual: list[float],
    per_offset: dict[int, list[float]],
    title: str,
    width: int = 760,
    height: int = 420,
) -> str:
    """One chart: the realized series plus five dotted vintage nowcast lines."""
    m_left, m_right, m_top, m_bot = 56, 16, 34, 40
    all_vals = [v for v in actual] + [v for series in per_offset.values() for v in series]
    lo, hi = min(all_vals), max(all_vals)
    pad = 0.05 * (hi - lo or 1.0)
    lo, hi = lo - pad, hi + pad
    n = len(labels)
    xs = _scale(range(n), 0, max(n - 1, 1), m_left, width - m_right)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{m_left}" y1="{height - m_bot}" x2="{width - m_right}" y2="{height - m_bot}" stroke="#444" />',
        f'<line x1="{m_left}" y1="{m_top}" x2="{m_left}" y2="{height - m_bot}" stroke="#444" />',
    ]
    for tick in np.linspace(lo, hi, 5):
        y = _scale([tick], lo, hi, height - m_bot, m_top)[0]
        parts.append(f'<line x1="{m_left - 4}" y1="{y:.1f}" x2="{m_left}" y2="{y:.1f}" stroke="#444" />')
        parts.append(f'<text x="{m_left - 7}" y="{y + 3:.1f}" text-anchor="end">{tick * 100:.1f}%</text>')
    step = max(1, n // 8)
    for i in range(0, n, step):
        parts.append(
            f'<text x="{xs[i]:.1f}" y="{height - m_bot + 16}" text-anchor="middle">{labels[i]}</text>'
        )
    ys_actual = _scale(actual, lo, hi, height - m_bot, m_top)
    parts.append(_polyline(xs, ys_actual, "#000000", dashed=False, width=2.0))
    for rank, (offset, series) in enumerate(sorted(per_offset.items())):
        ys = _scale(series, lo, hi, height - m_bot, m_top)
        parts.append(_polyline(xs, ys, _PALETTE[rank % len(_PALETTE)], dashed=True))
    parts.append("</svg>")
    return "\n".join(parts)
