"""Built-in schema families.

The "crello-like" family mirrors a design-template catalog: a sized canvas
with design metadata and elements carrying type, geometry, opacity, and
either a color (texts, solid fills) or an image feature vector (shapes,
images). The "rico-like" family mirrors mobile UI trees: a fixed-size screen
whose only canvas attribute is the element count.

Canvas pixel sizes are synthetic stand-ins chosen to span common design
formats; only their count and relative magnitudes matter.
"""
from __future__ import annotations

import numpy as np

from .document import AttributeSpec, DocumentSchema

FAMILIES = ("crello-like", "rico-like")

CRELLO_TYPE_NAMES = (
    "vector_shape",
    "image",
    "text_placeholder",
    "solid_fill",
    "frame",
    "line",
)

# type bins carrying a color value vs an image feature (mutually exclusive)
COLOR_TYPES = frozenset({2, 3})
IMAGE_TYPES = frozenset({0, 1})

RICO_COMPONENT_NAMES = (
    "text",
    "image",
    "icon",
    "list_item",
    "toolbar",
    "button",
    "web_view",
    "input",
    "card",
    "checkbox",
    "advertisement",
    "background_image",
    "drawer",
    "bottom_navigation",
    "modal",
    "multi_tab",
    "pager_indicator",
    "on_off_switch",
    "slider",
    "spinner",
    "radio_button",
    "video",
    "map_view",
    "number_stepper",
    "date_picker",
    "label",
    "divider",
)


def _pixel_sizes(count: int) -> tuple[float, ...]:
    return tuple(float(int(round(v))) for v in np.linspace(240, 4096, count))


def crello_like_schema(feature_dim: int = 256, max_length: int = 50) -> DocumentSchema:
    canvas = (
        AttributeSpec("length", "canvas", "categorical", cardinality=max_length),
        AttributeSpec("group", "canvas", "categorical", cardinality=7),
        AttributeSpec("format", "canvas", "categorical", cardinality=68),
        AttributeSpec("width", "canvas", "categorical", cardinality=42, bin_values=_pixel_sizes(42)),
        AttributeSpec("height", "canvas", "categorical", cardinality=47, bin_values=_pixel_sizes(47)),
        AttributeSpec("category", "canvas", "categorical", cardinality=24),
    )
    elements = (
        AttributeSpec("type", "element", "categorical", cardinality=6, value_names=CRELLO_TYPE_NAMES),
        AttributeSpec("position", "element", "categorical", cardinality=64, dims=2),
        AttributeSpec("size", "element", "categorical", cardinality=64, dims=2),
        AttributeSpec("opacity", "element", "categorical", cardinality=8),
        AttributeSpec("color", "element", "categorical", cardinality=16, dims=3, applicable_types=COLOR_TYPES),
        AttributeSpec("image", "element", "numerical", dims=feature_dim, applicable_types=IMAGE_TYPES),
    )
    return DocumentSchema(
        name="crello-like",
        canvas_attrs=canvas,
        element_attrs=elements,
        max_length=max_length,
        label_attr="type",
    )


def rico_like_schema(max_length: int = 50) -> DocumentSchema:
    canvas = (AttributeSpec("length", "canvas", "categorical", cardinality=max_length),)
    elements = (
        AttributeSpec("component", "element", "categorical", cardinality=27, value_names=RICO_COMPONENT_NAMES),
        AttributeSpec("position", "element", "categorical", cardinality=64, dims=2),
        AttributeSpec("size", "element", "categorical", cardinality=64, dims=2),
        AttributeSpec("icon", "element", "categorical", cardinality=59),
        AttributeSpec("button", "element", "categorical", cardinality=25),
        AttributeSpec("clickable", "element", "categorical", cardinality=2),
    )
    return DocumentSchema(
        name="rico-like",
        canvas_attrs=canvas,
        element_attrs=elements,
        max_length=max_length,
        label_attr="component",
        default_canvas_size=(1440, 2560),
    )


def schema_for_family(family: str, feature_dim: int = 256, max_length: int = 50) -> DocumentSchema:
    if family == "crello-like":
        return crello_like_schema(feature_dim=feature_dim, max_length=max_length)
    if family == "rico-like":
        return rico_like_schema(max_length=max_length)
    raise ValueError(f"unknown schema family {family!r}; expected one of {FAMILIES}")
