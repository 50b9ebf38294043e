"""Hand-rolled SVG emission for loss curves, decision boundaries and sample
scatters. No plotting dependency, no timestamps: output bytes depend only on
the data, so fixed-seed reruns are byte-identical."""

from __future__ import annotations

import numpy as np

PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 64, 20, 36, 48


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _scale(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0

    def f(v):
        return a + (v - lo) / span * (b - a)

    return f


def line_chart_svg(path, xs, series: list[tuple[str, list[float]]], title: str,
                   x_label: str = "iteration", y_label: str = "loss") -> None:
    """One polyline per named series over a shared x axis."""
    xs = list(map(float, xs))
    all_y = [v for _, ys in series for v in ys]
    xlo, xhi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    ylo, yhi = (min(all_y), max(all_y)) if all_y else (0.0, 1.0)
    if yhi - ylo < 1e-12:
        ylo, yhi = ylo - 1.0, yhi + 1.0
    sx = _scale(xlo, xhi, _ML, _W - _MR)
    sy = _scale(ylo, yhi, _H - _MB, _MT)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
    ]
    for t in _ticks(xlo, xhi):
        px = sx(t)
        out.append(
            f'<line x1="{_fmt(px)}" y1="{_H - _MB}" x2="{_fmt(px)}" y2="{_H - _MB + 4}" stroke="black"/>'
        )
        out.append(
            f'<text x="{_fmt(px)}" y="{_H - _MB + 16}" text-anchor="middle" font-size="10">{t:g}</text>'
        )
    for t in _ticks(ylo, yhi):
        py = sy(t)
        out.append(
            f'<line x1="{_ML - 4}" y1="{_fmt(py)}" x2="{_ML}" y2="{_fmt(py)}" stroke="black"/>'
        )
        out.append(
            f'<text x="{_ML - 6}" y="{_fmt(py + 3)}" text-anchor="end" font-size="10">{t:.3g}</text>'
        )
    out.append(
        f'<text x="{_W // 2}" y="{_H - 8}" text-anchor="middle" font-size="11">{x_label}</text>'
    )
    out.append(
        f'<text x="14" y="{_H // 2}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 14 {_H // 2})">{y_label}</text>'
    )
    for i, (name, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = _MT + 14 * i
        out.append(
            f'<line x1="{_W - _MR - 110}" y1="{ly}" x2="{_W - _MR - 90}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{_W - _MR - 84}" y="{ly + 4}" font-size="11">{name}</text>'
        )
    out.append("</svg>")
    _write(path, out)


def decision_boundary_svg(path, grid_classes: np.ndarray, extent, points, labels,
                          hulls: list[np.ndarray], title: str) -> None:
    """Class-colored grid sweep with the training points and class hulls."""
    xlo, xhi, ylo, yhi = extent
    rows, cols = grid_classes.shape
    sx = _scale(xlo, xhi, _ML, _W - _MR)
    sy = _scale(ylo, yhi, _H - _MB, _MT)
    cw = (_W - _MR - _ML) / cols
    ch = (_H - _MB - _MT) / rows
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for r in range(rows):
        for c in range(cols):
            color = PALETTE[int(grid_classes[r, c]) % len(PALETTE)]
            x = _ML + c * cw
            y = _H - _MB - (r + 1) * ch
            out.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(cw + 0.5)}" '
                f'height="{_fmt(ch + 0.5)}" fill="{color}" fill-opacity="0.25"/>'
            )
    out.extend(_hull_outlines(hulls, sx, sy))
    for p, lab in zip(points, labels):
        out.append(
            f'<circle cx="{_fmt(sx(p[0]))}" cy="{_fmt(sy(p[1]))}" r="2.2" '
            f'fill="{PALETTE[int(lab) % len(PALETTE)]}" stroke="black" stroke-width="0.4"/>'
        )
    out.append("</svg>")
    _write(path, out)


def scatter_svg(path, real_points, real_labels, gen_points, gen_labels,
                hulls: list[np.ndarray], title: str) -> None:
    """Real samples as filled circles, generated ones as crosses, with the
    per-class hull outlines behind them."""
    pts = np.vstack([real_points, gen_points]) if len(gen_points) else np.asarray(real_points)
    xlo, xhi = pts[:, 0].min(), pts[:, 0].max()
    ylo, yhi = pts[:, 1].min(), pts[:, 1].max()
    pad_x = 0.05 * (xhi - xlo + 1e-9)
    pad_y = 0.05 * (yhi - ylo + 1e-9)
    sx = _scale(xlo - pad_x, xhi + pad_x, _ML, _W - _MR)
    sy = _scale(ylo - pad_y, yhi + pad_y, _H - _MB, _MT)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    out.extend(_hull_outlines(hulls, sx, sy))
    for p, lab in zip(np.asarray(real_points), real_labels):
        out.append(
            f'<circle cx="{_fmt(sx(p[0]))}" cy="{_fmt(sy(p[1]))}" r="2.2" '
            f'fill="{PALETTE[int(lab) % len(PALETTE)]}" fill-opacity="0.6"/>'
        )
    for p, lab in zip(np.asarray(gen_points), gen_labels):
        x, y = sx(p[0]), sy(p[1])
        color = PALETTE[int(lab) % len(PALETTE)]
        out.append(
            f'<path d="M {_fmt(x - 3)} {_fmt(y)} L {_fmt(x + 3)} {_fmt(y)} '
            f'M {_fmt(x)} {_fmt(y - 3)} L {_fmt(x)} {_fmt(y + 3)}" '
            f'stroke="{color}" stroke-width="1.4"/>'
        )
    out.append("</svg>")
    _write(path, out)


def _hull_outlines(hulls, sx, sy):
    parts = []
    for c, hull in enumerate(hulls):
        if hull is None or len(hull) < 2:
            continue
        pts = " ".join(f"{_fmt(sx(p[0]))},{_fmt(sy(p[1]))}" for p in hull)
        parts.append(
            f'<polygon fill="none" stroke="{PALETTE[c % len(PALETTE)]}" '
            f'stroke-width="1.2" stroke-dasharray="4 2" points="{pts}"/>'
        )
    return parts


def _write(path, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
