"""Dependency-free image output: grayscale PGM slices and small SVG charts."""

from __future__ import annotations

import math
import re
from xml.sax.saxutils import escape

import numpy as np

MID_GRAY = 127


def normalize_plane(plane):
    """Min-max scale a 2D plane to 0..255; a constant plane maps to mid-gray."""
    plane = np.asarray(plane, dtype=np.float64)
    lo, hi = float(plane.min()), float(plane.max())
    if hi == lo:
        return np.full(plane.shape, MID_GRAY, dtype=np.uint8)
    scaled = (plane - lo) / (hi - lo) * 255.0
    return np.rint(scaled).astype(np.uint8)


def plane_to_image(plane):
    """Pixel grid for ``plane[a, b]``: ``a`` runs across, ``b`` runs down.

    For a z-slice that is x across and y down.
    """
    return normalize_plane(plane).T


def write_pgm(path, plane):
    img = np.ascontiguousarray(plane_to_image(plane))
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return img


def read_pgm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    # exactly one whitespace byte follows maxval; pixel bytes may look like spaces
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise ValueError(f"{path} is not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    return np.frombuffer(raw[m.end():m.end() + w * h], dtype=np.uint8).reshape(h, w)


def _num(x):
    """Exact text for a plotted number, matching how the CSV tables print it."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def line_chart(series, title="", xlabel="", ylabel="", width=640, height=400,
               log_x=False, dashed=()):
    """Render ``{label: [(x, y), ...]}`` as an SVG string.

    Every marker carries ``data-x``/``data-y`` attributes holding the exact
    plotted numbers, so a chart can be checked against its source table.
    """
    left, right, top, bottom = 70, 150, 40, 50
    pts = [p for s in series.values() for p in s]
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    xs = [math.log2(x) if log_x else x for x, _ in pts]
    ys = [y for _, y in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(0.0, min(ys)), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        x = math.log2(x) if log_x else x
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        yv = y0 + frac * (y1 - y0)
        out.append(f'<text x="{left - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end" font-size="10">{yv:.3g}</text>')
    for xv in sorted({x for x, _ in pts}):
        out.append(f'<text x="{sx(xv):.1f}" y="{top + ph + 16}" text-anchor="middle" font-size="10">{xv:g}</text>')
    for n, (label, s) in enumerate(series.items()):
        color = _COLORS[n % len(_COLORS)]
        dash = ' stroke-dasharray="6,4"' if label in dashed else ""
        if len(s) > 1:
            path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in s)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}"{dash}/>')
        for x, y in s:
            out.append(
                f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{color}" '
                f'data-series="{escape(label)}" data-x="{_num(x)}" data-y="{_num(y)}"/>'
            )
        ly = top + 14 + 18 * n
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" stroke="{color}"{dash}/>')
        out.append(f'<text x="{left + pw + 36}" y="{ly + 4}" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
