"""SVG previews of documents.

Colormap mode fills each element box with its label color; textured mode
fills color-bearing elements with their stored color and feature-bearing
elements with the preview color of their nearest neighbor in a feature
index. Elements are emitted in depth order, so later elements paint on top.
"""
from __future__ import annotations

import colorsys
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import FeatureIndex, nearest_neighbor
from .document import Document, DocumentSchema, dequantize

_CRELLO_TYPE_COLORS = {
    "vector_shape": (76, 175, 80),      # green
    "image": (233, 30, 99),             # magenta
    "text_placeholder": (156, 39, 176), # purple
    "solid_fill": (255, 235, 59),       # yellow
    "frame": (0, 150, 136),
    "line": (255, 152, 0),
}

_GOLDEN_RATIO = 0.61803398875


@dataclass(frozen=True)
class Palette:
    """Label-to-color map with a fallback for unknown labels."""

    colors: Mapping[int, tuple[int, int, int]]
    fallback: tuple[int, int, int] = (128, 128, 128)

    def __post_init__(self):
        values = list(self.colors.values())
        if len(set(values)) != len(values):
            raise ValueError("palette colors must be distinct per label")

    def color(self, label: int) -> tuple[int, int, int]:
        return self.colors.get(label, self.fallback)


def default_palette(schema: DocumentSchema, label_attr: str | None = None) -> Palette:
    """Distinct colors for every label bin, using the named colors when known."""
    spec = schema.element_attr(label_attr or schema.label_attr)
    colors: dict[int, tuple[int, int, int]] = {}
    for label in range(spec.cardinality):
        name = spec.value_names[label] if spec.value_names else None
        if name in _CRELLO_TYPE_COLORS:
            colors[label] = _CRELLO_TYPE_COLORS[name]
        else:
            hue = (label * _GOLDEN_RATIO) % 1.0
            r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.9)
            colors[label] = (int(round(r * 255)), int(round(g * 255)), int(round(b * 255)))
    return Palette(colors=colors)


@dataclass(frozen=True)
class RenderOptions:
    mode: str = "colormap"
    canvas_px: int = 256
    opacity_rendering: bool = True
    strip_spacing: int = 16

    def __post_init__(self):
        if self.mode not in ("colormap", "textured"):
            raise ValueError(f"unknown render mode {self.mode!r}")
        if self.canvas_px < 64:
            raise ValueError("canvas_px must be at least 64")


def canvas_pixel_size(doc: Document, schema: DocumentSchema) -> tuple[float, float]:
    """Representative pixel size of the document's canvas."""
    try:
        w_spec = schema.canvas_attr("width")
        h_spec = schema.canvas_attr("height")
    except KeyError:
        return float(schema.default_canvas_size[0]), float(schema.default_canvas_size[1])
    width = w_spec.bin_values[doc.canvas["width"][0]] if w_spec.bin_values else float(schema.default_canvas_size[0])
    height = h_spec.bin_values[doc.canvas["height"][0]] if h_spec.bin_values else float(schema.default_canvas_size[1])
    return float(width), float(height)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _element_fill(element, label: int, schema: DocumentSchema, palette: Palette,
                  options: RenderOptions, index: FeatureIndex | None) -> tuple[int, int, int]:
    if options.mode == "colormap":
        return palette.color(label)
    color_value = element.get("color")
    if color_value is not None:
        spec = schema.element_attr("color")
        return tuple(int(round(dequantize(b, 0.0, 1.0, spec.cardinality) * 255)) for b in color_value)
    feature = None
    for spec in schema.element_attrs:
        if not spec.is_categorical and spec.name in element:
            feature = np.asarray(element[spec.name], dtype=np.float64)
            break
    if feature is not None and index is not None:
        return index.color_of(nearest_neighbor(index, feature))
    return palette.fallback


def _render_body(doc: Document, schema: DocumentSchema, palette: Palette, options: RenderOptions,
                 index: FeatureIndex | None, offset_x: float) -> tuple[list[str], float, float]:
    canvas_w, canvas_h = canvas_pixel_size(doc, schema)
    scale = options.canvas_px / max(canvas_w, canvas_h)
    out_w, out_h = canvas_w * scale, canvas_h * scale
    parts = [
        f'<rect x="{_fmt(offset_x)}" y="0.00" width="{_fmt(out_w)}" height="{_fmt(out_h)}" '
        f'fill="rgb(255,255,255)" stroke="rgb(200,200,200)" stroke-width="1"/>'
    ]
    pos_spec = schema.element_attr("position")
    size_spec = schema.element_attr("size")
    opacity_spec = None
    try:
        opacity_spec = schema.element_attr("opacity")
    except KeyError:
        pass
    for element in doc.elements:
        label = int(element[schema.label_attr][0])
        left_bin, top_bin = element["position"]
        w_bin, h_bin = element["size"]
        x = dequantize(left_bin, 0.0, 1.0, pos_spec.cardinality) * out_w + offset_x
        y = dequantize(top_bin, 0.0, 1.0, pos_spec.cardinality) * out_h
        w = dequantize(w_bin, 0.0, 1.0, size_spec.cardinality) * out_w
        h = dequantize(h_bin, 0.0, 1.0, size_spec.cardinality) * out_h
        r, g, b = _element_fill(element, label, schema, palette, options, index)
        opacity = 1.0
        if options.opacity_rendering and opacity_spec is not None and "opacity" in element:
            opacity = dequantize(element["opacity"][0], 0.0, 1.0, opacity_spec.cardinality)
        parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'fill="rgb({r},{g},{b})" opacity="{opacity:.4f}"/>'
        )
    return parts, out_w, out_h


def render_svg(doc: Document, schema: DocumentSchema, palette: Palette | None = None,
               options: RenderOptions | None = None, index: FeatureIndex | None = None) -> str:
    """Render one document as an SVG 1.1 string."""
    palette = palette or default_palette(schema)
    options = options or RenderOptions()
    if options.mode == "textured" and index is None:
        raise ValueError("textured mode requires a feature index")
    parts, out_w, out_h = _render_body(doc, schema, palette, options, index, offset_x=0.0)
    body = "\n".join(f"  {p}" for p in parts)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_fmt(out_w)}" height="{_fmt(out_h)}" viewBox="0 0 {_fmt(out_w)} {_fmt(out_h)}">\n'
        f"{body}\n</svg>\n"
    )


def render_strip(docs: Sequence[Document], schema: DocumentSchema, palette: Palette | None = None,
                 options: RenderOptions | None = None, index: FeatureIndex | None = None) -> str:
    """Render documents side by side, in input order, with uniform spacing."""
    if len(docs) < 2:
        raise ValueError("a strip needs at least two documents")
    palette = palette or default_palette(schema)
    options = options or RenderOptions()
    if options.mode == "textured" and index is None:
        raise ValueError("textured mode requires a feature index")
    parts: list[str] = []
    offset = 0.0
    total_h = 0.0
    for i, doc in enumerate(docs):
        panel, out_w, out_h = _render_body(doc, schema, palette, options, index, offset_x=offset)
        parts.extend(panel)
        offset += out_w + options.strip_spacing
        total_h = max(total_h, out_h)
    total_w = offset - options.strip_spacing
    body = "\n".join(f"  {p}" for p in parts)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_fmt(total_w)}" height="{_fmt(total_h)}" viewBox="0 0 {_fmt(total_w)} {_fmt(total_h)}">\n'
        f"{body}\n</svg>\n"
    )
