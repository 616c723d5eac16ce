"""Hand-rolled SVG line plots with error bars.

Byte-deterministic: output depends only on the data (fixed-precision number
formatting, no timestamps or library version strings).
"""

from __future__ import annotations

from pathlib import Path

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"]

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 16, 36, 48


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".") if abs(v) < 1e4 else f"{v:.3g}"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def line_plot_svg(
    series: list[dict],
    path: str | Path,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> None:
    """series: [{label, x: [...], y: [...], err: [...] | None}];
    points with y=None are skipped."""
    pts_all = []
    for s in series:
        err = s.get("err") or [None] * len(s["x"])
        for x, y, e in zip(s["x"], s["y"], err):
            if y is None:
                continue
            pts_all.append((x, y - (e or 0.0)))
            pts_all.append((x, y + (e or 0.0)))
    if not pts_all:
        raise ValueError("nothing to plot")
    xs = [p[0] for p in pts_all]
    ys = [p[1] for p in pts_all]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys + [0.0]), max(ys + [0.0])
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.06 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(x: float) -> float:
        return _ML + (x - x0) / (x1 - x0) * (_W - _ML - _MR)

    def sy(y: float) -> float:
        return _H - _MB - (y - y0) / (y1 - y0) * (_H - _MT - _MB)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    # axes and ticks
    ax = f'{sy(0.0):.1f}' if y0 < 0 < y1 else f"{_H - _MB}"
    out.append(
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="#333" stroke-width="1"/>'
    )
    out.append(
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="#333" stroke-width="1"/>'
    )
    if y0 < 0 < y1:
        out.append(
            f'<line x1="{_ML}" y1="{ax}" x2="{_W - _MR}" y2="{ax}" stroke="#bbb" stroke-width="1" stroke-dasharray="4 3"/>'
        )
    for i in range(5):
        tx = x0 + (x1 - x0) * i / 4
        ty = y0 + (y1 - y0) * i / 4
        out.append(
            f'<text x="{sx(tx):.1f}" y="{_H - _MB + 16}" text-anchor="middle" fill="#333">{_fmt(tx)}</text>'
        )
        out.append(
            f'<text x="{_ML - 6}" y="{sy(ty) + 4:.1f}" text-anchor="end" fill="#333">{_fmt(ty)}</text>'
        )
        out.append(
            f'<line x1="{_ML - 3}" y1="{sy(ty):.1f}" x2="{_ML}" y2="{sy(ty):.1f}" stroke="#333"/>'
        )
    if title:
        out.append(
            f'<text x="{_W / 2:.0f}" y="20" text-anchor="middle" font-size="14" fill="#111">{_esc(title)}</text>'
        )
    if xlabel:
        out.append(
            f'<text x="{(_ML + _W - _MR) / 2:.0f}" y="{_H - 10}" text-anchor="middle" fill="#111">{_esc(xlabel)}</text>'
        )
    if ylabel:
        out.append(
            f'<text x="16" y="{(_MT + _H - _MB) / 2:.0f}" text-anchor="middle" fill="#111" '
            f'transform="rotate(-90 16 {(_MT + _H - _MB) / 2:.0f})">{_esc(ylabel)}</text>'
        )

    for si, s in enumerate(series):
        color = PALETTE[si % len(PALETTE)]
        err = s.get("err") or [None] * len(s["x"])
        pts = [(x, y, e) for x, y, e in zip(s["x"], s["y"], err) if y is not None]
        poly = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y, _ in pts)
        if len(pts) > 1:
            out.append(f'<polyline points="{poly}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        for x, y, e in pts:
            out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="{color}"/>')
            if e:
                xc, ylo, yhi = sx(x), sy(y - e), sy(y + e)
                out.append(
                    f'<line x1="{xc:.1f}" y1="{ylo:.1f}" x2="{xc:.1f}" y2="{yhi:.1f}" stroke="{color}" stroke-width="1.2"/>'
                )
                out.append(
                    f'<line x1="{xc - 4:.1f}" y1="{ylo:.1f}" x2="{xc + 4:.1f}" y2="{ylo:.1f}" stroke="{color}" stroke-width="1.2"/>'
                )
                out.append(
                    f'<line x1="{xc - 4:.1f}" y1="{yhi:.1f}" x2="{xc + 4:.1f}" y2="{yhi:.1f}" stroke="{color}" stroke-width="1.2"/>'
                )
        label = s.get("label", f"series {si}")
        lx, ly = _W - _MR - 140, _MT + 16 * si + 4
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" stroke="{color}" stroke-width="1.8"/>')
        out.append(f'<text x="{lx + 28}" y="{ly}" fill="#111">{_esc(str(label))}</text>')

    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
