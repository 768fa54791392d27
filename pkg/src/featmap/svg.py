"""Dependency-free SVG scatter plots of 2-D embeddings.

A focus point can carry its embedded frame: two axis segments scaled by the
retained singular values and the names of its most important features.
"""

import os
from xml.sax.saxutils import escape

import numpy as np

from .errors import DataError, UnsupportedDimension

# tab10
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
SIZE = 640
MARGIN = 40
AXIS_LENGTH = 60.0


def _colours(labels, m):
    if labels is None:
        return [PALETTE[0]] * m
    classes, codes = np.unique(np.asarray(labels), return_inverse=True)
    return [PALETTE[c % len(PALETTE)] for c in codes]


def render_scatter_svg(y, path, labels=None, focus=None, frames=None, singular_values=None,
                       importance=None, feature_names=None, top=10, radius=3.0):
    """Write an SVG scatter plot of a 2-D embedding to ``path``.

    ``focus`` selects a point whose frame axes (``frames[focus]`` columns,
    lengths proportional to ``singular_values[focus]``) and top-``top``
    features by ``importance[focus]`` are overlaid.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0 or y.shape[0] == 0:
        raise DataError("cannot render an empty embedding")
    if y.ndim != 2 or y.shape[1] != 2:
        raise UnsupportedDimension(f"scatter rendering needs a 2-D embedding, got shape {y.shape}")

    lo = y.min(axis=0)
    span = np.maximum(y.max(axis=0) - lo, 1e-12)
    scale = (SIZE - 2 * MARGIN) / span.max()

    def to_px(p):
        # flip the vertical axis: SVG grows downwards
        px = MARGIN + (p[..., 0] - lo[0]) * scale
        py = SIZE - MARGIN - (p[..., 1] - lo[1]) * scale
        return px, py

    px, py = to_px(y)
    colours = _colours(labels, len(y))
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" '
        f'viewBox="0 0 {SIZE} {SIZE}">',
        f'<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>',
        '<g class="points">',
    ]
    for i in range(len(y)):
        extra = ' stroke="red" stroke-width="2"' if focus == i else ""
        out.append(f'<circle cx="{px[i]:.2f}" cy="{py[i]:.2f}" r="{radius}" fill="{colours[i]}" '
                   f'fill-opacity="0.8"{extra}/>')
    out.append("</g>")

    if focus is not None:
        out.extend(_focus_glyph(focus, px[focus], py[focus], frames, singular_values,
                                importance, feature_names, top))
    out.append("</svg>")

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def _focus_glyph(i, cx, cy, frames, singular_values, importance, feature_names, top):
    parts = ['<g class="frame">']
    if frames is not None:
        v = np.asarray(frames[i], dtype=np.float64)
        s = np.ones(2) if singular_values is None else np.asarray(singular_values[i], dtype=np.float64)[:2]
        s = s / max(s.max(), 1e-300)
        for l in range(2):
            dx, dy = AXIS_LENGTH * s[l] * v[0, l], -AXIS_LENGTH * s[l] * v[1, l]
            parts.append(f'<line class="axis" x1="{cx:.2f}" y1="{cy:.2f}" x2="{cx + dx:.2f}" '
                         f'y2="{cy + dy:.2f}" stroke="red" stroke-width="2"/>')
    if importance is not None:
        imp = np.asarray(importance[i], dtype=np.float64)
        names = feature_names if feature_names is not None else [f"f{h + 1}" for h in range(imp.size)]
        order = np.argsort(-imp, kind="stable")[:top]
        x0 = min(cx + 12, SIZE - 150)
        for rank, h in enumerate(order):
            yy = min(max(cy - 60 + 13 * rank, 12), SIZE - 4)
            parts.append(f'<text class="feature" x="{x0:.2f}" y="{yy:.2f}" font-size="11" '
                         f'font-family="sans-serif">{escape(str(names[h]))} ({imp[h]:.3f})</text>')
    parts.append("</g>")
    return parts


def render_result(result, path, focus=None):
    render_scatter_svg(result.embedding, path, labels=result.labels, focus=focus,
                       frames=result.frames.frames, singular_values=result.frames.singular_values,
                       importance=result.importance, feature_names=result.feature_names)
    return os.path.abspath(path)
