"""Static SVG emission from result CSVs.

Plots are written as standalone SVG with no external dependencies so that
re-running a sweep reproduces artifacts byte for byte.  Two kinds:

- ``lines``: first CSV column is x, every further column is one series.
- ``heatmap``: dense grid CSV (first row: column coordinates ascending,
  first cell of each following row: row coordinate), drawn with a small
  viridis lookup table plus a colorbar.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path


class PlotError(ValueError):
    """Malformed or empty input CSV."""


_VIRIDIS = [
    (68, 1, 84), (71, 44, 122), (59, 81, 139), (44, 113, 142),
    (33, 144, 141), (39, 173, 129), (92, 200, 99), (170, 220, 50),
    (253, 231, 37),
]

_PALETTE = [
    "#2a9d8f", "#e9c46a", "#5465ff", "#f4a261", "#245501",
    "#788bff", "#e76f51", "#73a942", "#9bb1ff", "#4e8098", "#bf3100",
]

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 70, 24, 24, 52


def _read_csv(path: str | Path) -> tuple[list[str], list[list[float]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise PlotError(f"{path}: need a header and at least one data row")
    header = [c.strip() for c in rows[0]]
    try:
        data = [[float(c) for c in r] for r in rows[1:]]
    except ValueError as exc:
        raise PlotError(f"{path}: non-numeric cell in data rows") from exc
    width = len(header)
    if any(len(r) != width for r in data):
        raise PlotError(f"{path}: ragged rows")
    return header, data


def _fmt(x: float) -> str:
    if x == 0:
        return "0"
    if abs(x) >= 1e4 or abs(x) < 1e-3:
        return f"{x:.2e}"
    return f"{x:.6g}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * step:
        out.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return out


def _viridis(frac: float) -> str:
    f = min(max(frac, 0.0), 1.0) * (len(_VIRIDIS) - 1)
    i = min(int(f), len(_VIRIDIS) - 2)
    a, b = _VIRIDIS[i], _VIRIDIS[i + 1]
    t = f - i
    rgb = tuple(round(a[j] + t * (b[j] - a[j])) for j in range(3))
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


def _svg_header(parts: list[str]) -> None:
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">'
    )
    parts.append(f'<rect width="{_W}" height="{_H}" fill="white"/>')


def _axes(parts: list[str], xlo, xhi, ylo, yhi, xlabel, ylabel, ylog=False):
    px = lambda x: _ML + (x - xlo) / (xhi - xlo) * (_W - _ML - _MR)
    py = lambda y: _H - _MB - (y - ylo) / (yhi - ylo) * (_H - _MT - _MB)
    parts.append(
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
        f'height="{_H - _MT - _MB}" fill="none" stroke="black"/>'
    )
    for t in _ticks(xlo, xhi):
        x = px(t)
        parts.append(f'<line x1="{x:.1f}" y1="{_H - _MB}" x2="{x:.1f}" y2="{_H - _MB + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.1f}" y="{_H - _MB + 18}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(ylo, yhi):
        y = py(t)
        label = f"1e{t:g}" if ylog else _fmt(t)
        parts.append(f'<line x1="{_ML - 5}" y1="{y:.1f}" x2="{_ML}" y2="{y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{y + 4:.1f}" text-anchor="end">{label}</text>')
    parts.append(
        f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 14}" text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{(_MT + _H - _MB) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(_MT + _H - _MB) / 2})">{ylabel}</text>'
    )
    return px, py


def _emit_lines(header: list[str], data: list[list[float]], out: Path, logy: bool) -> None:
    xs = [r[0] for r in data]
    n_series = len(header) - 1
    if n_series < 1:
        raise PlotError("lines plot needs at least two columns")
    series = []
    for j in range(1, len(header)):
        ys = [r[j] for r in data]
        if logy:
            if any(y <= 0 for y in ys):
                raise PlotError("log-scale plot requires strictly positive values")
            ys = [math.log10(y) for y in ys]
        series.append(ys)
    xlo, xhi = min(xs), max(xs)
    if xhi == xlo:
        xhi = xlo + 1.0
    flat = [y for ys in series for y in ys]
    ylo, yhi = min(flat), max(flat)
    if yhi == ylo:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad

    parts: list[str] = []
    _svg_header(parts)
    px, py = _axes(parts, xlo, xhi, ylo, yhi, header[0],
                   ("log10 " if logy else "") + (header[1] if n_series == 1 else "value"),
                   ylog=logy)
    for j, ys in enumerate(series):
        color = _PALETTE[j % len(_PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if n_series > 1:
            ly = _MT + 16 + 16 * j
            parts.append(f'<line x1="{_W - _MR - 120}" y1="{ly}" x2="{_W - _MR - 96}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{_W - _MR - 90}" y="{ly + 4}">{header[j + 1]}</text>')
    parts.append("</svg>")
    out.write_text("\n".join(parts))


def _emit_heatmap(header: list[str], data: list[list[float]], out: Path) -> None:
    col_vals = [float(c) for c in header[1:]]
    row_vals = [r[0] for r in data]
    grid = [r[1:] for r in data]
    if not col_vals or not grid or any(len(r) != len(col_vals) for r in grid):
        raise PlotError("heatmap grid is empty or ragged")
    flat = [v for r in grid for v in r]
    vmin, vmax = min(flat), max(flat)
    span = vmax - vmin if vmax > vmin else 1.0

    bar_w = 18
    plot_w = _W - _ML - _MR - bar_w - 40
    plot_h = _H - _MT - _MB
    cw = plot_w / len(col_vals)
    ch = plot_h / len(grid)

    parts: list[str] = []
    _svg_header(parts)
    for i, row in enumerate(grid):
        for j, v in enumerate(row):
            x = _ML + j * cw
            y = _MT + i * ch
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw + 0.5:.2f}" height="{ch + 0.5:.2f}" '
                f'fill="{_viridis((v - vmin) / span)}"/>'
            )
    for j, v in enumerate(col_vals):
        x = _ML + (j + 0.5) * cw
        parts.append(f'<text x="{x:.1f}" y="{_H - _MB + 18}" text-anchor="middle">{_fmt(v)}</text>')
    for i, v in enumerate(row_vals):
        y = _MT + (i + 0.5) * ch
        parts.append(f'<text x="{_ML - 8}" y="{y + 4:.1f}" text-anchor="end">{_fmt(v)}</text>')
    parts.append(f'<text x="{(_ML + _ML + plot_w) / 2}" y="{_H - 14}" text-anchor="middle">{header[0]}</text>')
    # colorbar
    bx = _ML + plot_w + 16
    steps = 32
    for i in range(steps):
        frac = 1.0 - i / (steps - 1)
        y = _MT + i * plot_h / steps
        parts.append(
            f'<rect x="{bx}" y="{y:.2f}" width="{bar_w}" height="{plot_h / steps + 0.5:.2f}" '
            f'fill="{_viridis(frac)}"/>'
        )
    parts.append(f'<text x="{bx + bar_w + 4}" y="{_MT + 10}">{_fmt(vmax)}</text>')
    parts.append(f'<text x="{bx + bar_w + 4}" y="{_MT + plot_h}">{_fmt(vmin)}</text>')
    parts.append("</svg>")
    out.write_text("\n".join(parts))


def emit_plot(csv_path: str | Path, kind: str, out_path: str | Path, logy: bool = False) -> None:
    """Render a CSV to a standalone SVG.  No file is written on error."""
    if kind not in ("lines", "heatmap"):
        raise PlotError(f"unknown plot kind {kind!r}")
    header, data = _read_csv(csv_path)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    if kind == "lines":
        _emit_lines(header, data, out, logy)
    else:
        _emit_heatmap(header, data, out)
