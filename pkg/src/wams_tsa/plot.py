"""Standalone SVG line plots of CSV artifacts.

Output is a pure function of the CSV bytes: coordinates are rounded to two
decimals and nothing time- or host-dependent is embedded.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from . import csvio
from .errors import CsvParseError

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=64, right=120, top=36, bottom=52)
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]

_KIND_FILES = {"trace": ("trace",), "cdf": ("cdf",), "roc": ("roc", "phy-roc")}


def _series(kind: str, header, rows):
    """``(title, x label, y label, [(name, points, step)])``."""
    if kind == "trace":
        m = (len(header) - 3) // 2
        out = []
        for n in range(m):
            pts = [(r[0], r[1 + n]) for r in rows if math.isfinite(r[1 + n])]
            out.append((header[1 + n], pts, False))
        return "Suspicion level per PMU", "slot", "pi", out
    if kind == "cdf":
        pts = [(r[0], r[1]) for r in rows if math.isfinite(r[0])]
        return "Identification delay CDF", "delay (slots)", "fraction of runs", [("cdf", pts, True)]
    if kind == "roc":
        pts = sorted((r[1], r[2]) for r in rows if math.isfinite(r[1]) and math.isfinite(r[2]))
        return "Delay vs false alarms", "mean delay (slots)", "false-alarm rate", [("roc", pts, False)]
    pts = [(r[1], r[2]) for r in rows if math.isfinite(r[1]) and math.isfinite(r[2])]
    return "Spoofing detector ROC", "false-alarm rate", "detection probability", [("roc", pts, False)]


def _nice_range(values, floor_zero=False):
    if not values:
        return 0.0, 1.0
    lo, hi = min(values), max(values)
    if floor_zero:
        lo = min(lo, 0.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _f(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _tick_label(v: float) -> str:
    return f"{v:.3g}"


def render_svg(csv_text: str, kind: str) -> str:
    if kind not in _KIND_FILES:
        raise ValueError(f"unknown plot kind {kind!r}; use trace, cdf or roc")
    file_kind, header, rows = csvio.parse(csv_text)
    if file_kind not in _KIND_FILES[kind]:
        raise CsvParseError(f"plot kind {kind!r} cannot draw a {file_kind!r} file", 1)
    title, xlab, ylab, series = _series(file_kind, header, rows)

    xs = [p[0] for _, pts, _ in series for p in pts]
    ys = [p[1] for _, pts, _ in series for p in pts]
    x0, x1 = _nice_range(xs, floor_zero=kind == "cdf")
    if file_kind in ("trace", "cdf", "phy-roc"):
        y0, y1 = 0.0, 1.0
        if ys:
            y0, y1 = min(0.0, min(ys)), max(1.0, max(ys))
    else:
        y0, y1 = _nice_range(ys, floor_zero=True)

    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN["top"] + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.2f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    left, top, bottom, right = MARGIN["left"], MARGIN["top"], MARGIN["top"] + ph, MARGIN["left"] + pw
    out.append(f'<g class="axes" stroke="black" stroke-width="1">'
               f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/>'
               f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}"/></g>')
    for i in range(6):
        xv = x0 + (x1 - x0) * i / 5
        yv = y0 + (y1 - y0) * i / 5
        out.append(f'<line x1="{_f(sx(xv))}" y1="{bottom}" x2="{_f(sx(xv))}" y2="{bottom + 4}" stroke="black"/>')
        out.append(f'<text x="{_f(sx(xv))}" y="{bottom + 16}" text-anchor="middle">{_tick_label(xv)}</text>')
        out.append(f'<line x1="{left - 4}" y1="{_f(sy(yv))}" x2="{left}" y2="{_f(sy(yv))}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{_f(sy(yv) + 4)}" text-anchor="end">{_tick_label(yv)}</text>')
    out.append(f'<text x="{(left + right) / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlab)}</text>')
    out.append(f'<text x="16" y="{(top + bottom) / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(top + bottom) / 2:.2f})">{escape(ylab)}</text>')

    for idx, (name, pts, stepped) in enumerate(series):
        if not pts:
            continue
        colour = PALETTE[idx % len(PALETTE)]
        coords = []
        if stepped:
            prev = 0.0
            coords.append((sx(x0), sy(prev)))
            for x, y in pts:
                coords.append((sx(x), sy(prev)))
                coords.append((sx(x), sy(y)))
                prev = y
            coords.append((sx(x1), sy(prev)))
        else:
            coords = [(sx(x), sy(y)) for x, y in pts]
        path = " ".join(f"{_f(a)},{_f(b)}" for a, b in coords)
        out.append(f'<polyline class="series" data-name="{escape(name)}" fill="none" '
                   f'stroke="{colour}" stroke-width="1.5" points="{path}"/>')
        ly = top + 14 * idx + 8
        out.append(f'<line x1="{right + 10}" y1="{ly}" x2="{right + 30}" y2="{ly}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{right + 34}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(csv_path, kind: str, svg_path=None) -> Path:
    """Render ``csv_path`` to SVG (next to it with a ``.svg`` suffix by default)."""
    csv_path = Path(csv_path)
    data = csv_path.read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CsvParseError("invalid UTF-8", data[:exc.start].count(b"\n") + 1) from None
    svg = render_svg(text, kind)
    svg_path = csv_path.with_suffix(".svg") if svg_path is None else Path(svg_path)
    svg_path.parent.mkdir(parents=True, exist_ok=True)
    with open(svg_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    return svg_path
