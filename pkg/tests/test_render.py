import xml.etree.ElementTree as ET

import pytest

from docvae.data import build_feature_index
from docvae.document import dequantize
from docvae.render import (
    Palette,
    RenderOptions,
    canvas_pixel_size,
    default_palette,
    render_strip,
    render_svg,
)

SVG_NS = "{http://www.w3.org/2000/svg}"


def _rects(svg_text):
    root = ET.fromstring(svg_text)
    return root.findall(f"{SVG_NS}rect")


class TestPalette:
    def test_distinct_colors_required(self):
        with pytest.raises(ValueError):
            Palette(colors={0: (1, 2, 3), 1: (1, 2, 3)})

    def test_fallback(self):
        palette = Palette(colors={0: (1, 2, 3)})
        assert palette.color(9) == palette.fallback

    def test_default_palette_distinct_per_label(self, small_crello_schema, rico_schema):
        for schema in (small_crello_schema, rico_schema):
            palette = default_palette(schema)
            cardinality = schema.label_spec.cardinality
            assert len({palette.color(i) for i in range(cardinality)}) == cardinality

    def test_named_type_colors(self, small_crello_schema):
        palette = default_palette(small_crello_schema)
        assert palette.color(0) == (76, 175, 80)      # vector shape: green
        assert palette.color(1) == (233, 30, 99)      # image: magenta
        assert palette.color(2) == (156, 39, 176)     # text placeholder: purple
        assert palette.color(3) == (255, 235, 59)     # solid fill: yellow


class TestRenderOptions:
    def test_rejects_small_canvas(self):
        with pytest.raises(ValueError):
            RenderOptions(canvas_px=32)

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            RenderOptions(mode="wireframe")


class TestRenderSvg:
    def test_well_formed_for_every_document(self, crello_docs, small_crello_schema):
        for doc in crello_docs[:20]:
            svg = render_svg(doc, small_crello_schema)
            root = ET.fromstring(svg)
            assert root.tag == f"{SVG_NS}svg"

    def test_one_rect_per_element_plus_background(self, crello_docs, small_crello_schema):
        doc = crello_docs[0]
        assert len(_rects(render_svg(doc, small_crello_schema))) == doc.length + 1

    def test_deterministic(self, crello_docs, small_crello_schema):
        doc = crello_docs[3]
        assert render_svg(doc, small_crello_schema) == render_svg(doc, small_crello_schema)

    def test_depth_order_preserved(self, crello_docs, small_crello_schema):
        doc = next(d for d in crello_docs if d.length >= 3)
        palette = default_palette(small_crello_schema)
        rects = _rects(render_svg(doc, small_crello_schema, palette))[1:]
        expected = [f"rgb{palette.color(el['type'][0])}".replace(" ", "") for el in doc.elements]
        assert [r.get("fill") for r in rects] == expected

    def test_full_width_element_geometry(self, crello_docs, small_crello_schema):
        doc = next(
            d for d in crello_docs
            if d.elements[0]["position"] == (0, 0) and d.elements[0]["size"] == (63, 63)
        )
        options = RenderOptions(canvas_px=256)
        canvas_w, canvas_h = canvas_pixel_size(doc, small_crello_schema)
        out_w = canvas_w * 256 / max(canvas_w, canvas_h)
        rect = _rects(render_svg(doc, small_crello_schema, options=options))[1]
        x, w = float(rect.get("x")), float(rect.get("width"))
        assert x == pytest.approx(dequantize(0, 0, 1, 64) * out_w, abs=0.01)
        assert x + w == pytest.approx(out_w, abs=0.01)
        assert w >= 0.98 * out_w

    def test_opacity_rendering(self, small_crello_schema, crello_docs):
        doc = crello_docs[0]
        on = render_svg(doc, small_crello_schema, options=RenderOptions(opacity_rendering=True))
        off = render_svg(doc, small_crello_schema, options=RenderOptions(opacity_rendering=False))
        opacities_on = {r.get("opacity") for r in _rects(on)[1:]}
        opacities_off = {r.get("opacity") for r in _rects(off)[1:]}
        assert opacities_off == {"1.0000"}
        expected = {f"{dequantize(el['opacity'][0], 0, 1, 8):.4f}" for el in doc.elements}
        assert opacities_on == expected

    def test_textured_mode_needs_index(self, crello_docs, small_crello_schema):
        with pytest.raises(ValueError, match="index"):
            render_svg(crello_docs[0], small_crello_schema, options=RenderOptions(mode="textured"))

    def test_textured_mode_uses_colors_and_previews(self, crello_docs, small_crello_schema):
        pairs = [(f"d{i}", doc) for i, doc in enumerate(crello_docs[:20])]
        index = build_feature_index(pairs, small_crello_schema)
        doc = next(
            d for d in crello_docs
            if any("color" in el for el in d.elements) and any("image" in el for el in d.elements)
        )
        svg = render_svg(doc, small_crello_schema, options=RenderOptions(mode="textured"), index=index)
        rects = _rects(svg)[1:]
        for element, rect in zip(doc.elements, rects):
            if "color" in element:
                spec = small_crello_schema.element_attr("color")
                expected = tuple(
                    int(round(dequantize(b, 0, 1, spec.cardinality) * 255)) for b in element["color"]
                )
                assert rect.get("fill") == f"rgb{expected}".replace(" ", "")
            elif "image" in element:
                # the element's own vector is in the index, so it retrieves itself
                assert rect.get("fill") != "rgb(128,128,128)"

    def test_rico_uses_default_canvas_size(self, rico_docs, rico_schema):
        svg = render_svg(rico_docs[0], rico_schema)
        root = ET.fromstring(svg)
        width, height = float(root.get("width")), float(root.get("height"))
        assert height == 256.0
        assert width == pytest.approx(256.0 * 1440 / 2560)


class TestRenderStrip:
    def test_panel_count_and_order(self, crello_docs, small_crello_schema):
        docs = crello_docs[:3]
        svg = render_strip(docs, small_crello_schema)
        root = ET.fromstring(svg)
        backgrounds = [r for r in root.findall(f"{SVG_NS}rect") if r.get("fill") == "rgb(255,255,255)"]
        assert len(backgrounds) == 3
        xs = [float(r.get("x")) for r in backgrounds]
        assert xs == sorted(xs)

    def test_identical_docs_identical_panels(self, crello_docs, small_crello_schema):
        doc = crello_docs[0]
        svg = render_strip([doc, doc], small_crello_schema)
        root = ET.fromstring(svg)
        backgrounds = [r for r in root.findall(f"{SVG_NS}rect") if r.get("fill") == "rgb(255,255,255)"]
        assert len(backgrounds) == 2
        assert backgrounds[0].get("width") == backgrounds[1].get("width")

    def test_needs_two_documents(self, crello_docs, small_crello_schema):
        with pytest.raises(ValueError):
            render_strip(crello_docs[:1], small_crello_schema)

    def test_seven_step_strip_has_seven_panels(self, crello_docs, small_crello_schema):
        svg = render_strip(crello_docs[:7], small_crello_schema)
        root = ET.fromstring(svg)
        backgrounds = [r for r in root.findall(f"{SVG_NS}rect") if r.get("fill") == "rgb(255,255,255)"]
        assert len(backgrounds) == 7

    def test_well_formed(self, crello_docs, small_crello_schema):
        svg = render_strip(crello_docs[:4], small_crello_schema)
        assert ET.fromstring(svg) is not None
