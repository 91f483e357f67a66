"""Document model for vector graphic data.

A document is a canvas attribute map plus a depth-ordered sequence of
elements (later elements are drawn on top). Which attributes exist, how many
slots they have, and how they are discretized is declared by a
``DocumentSchema``, so different dataset families share one mechanism.

Value conventions:
  * every attribute value is a tuple of length ``dims``
  * categorical slots hold integer bin indices in ``[0, cardinality)``
  * numerical slots hold finite floats
  * the canvas ``length`` attribute stores the element count as a bin index,
    i.e. a document with n elements stores ``length = (n - 1,)`` so that the
    stored value stays inside ``[0, cardinality)``
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

SCHEMA_FILE_VERSION = 1

CANVAS = "canvas"
ELEMENT = "element"
CATEGORICAL = "categorical"
NUMERICAL = "numerical"

# An element is a plain mapping from attribute name to value tuple.
ElementRecord = dict

Value = tuple


def length_to_bin(count: int) -> int:
    """Encode an element count >= 1 as a categorical bin index."""
    return count - 1


def bin_to_length(bin_index: int) -> int:
    """Inverse of :func:`length_to_bin`."""
    return bin_index + 1


def quantize(value: float, lo: float, hi: float, bins: int) -> int:
    """Map a real value to a uniform-width bin index in ``[0, bins)``.

    The map is total over finite reals: values below ``lo`` clamp to bin 0 and
    values at or above ``hi`` clamp to the last bin.
    """
    if not (lo < hi):
        raise ValueError(f"quantize requires lo < hi, got lo={lo} hi={hi}")
    if bins < 2:
        raise ValueError(f"quantize requires bins >= 2, got {bins}")
    if not math.isfinite(value):
        raise ValueError(f"quantize rejects non-finite value {value!r}")
    raw = math.floor((value - lo) / (hi - lo) * bins)
    return min(max(raw, 0), bins - 1)


def dequantize(bin_index: int, lo: float, hi: float, bins: int) -> float:
    """Return the center value of a bin produced by :func:`quantize`."""
    if not (lo < hi):
        raise ValueError(f"dequantize requires lo < hi, got lo={lo} hi={hi}")
    if bins < 2:
        raise ValueError(f"dequantize requires bins >= 2, got {bins}")
    if not (0 <= bin_index < bins):
        raise ValueError(f"bin index {bin_index} out of range [0, {bins})")
    return lo + (bin_index + 0.5) * (hi - lo) / bins


@dataclass(frozen=True)
class AttributeSpec:
    """Declaration of one canvas or element attribute.

    ``cardinality`` is the number of bins per slot and applies to categorical
    attributes only. ``dims`` is the number of slots, e.g. 2 for a left/top
    position pair or 256 for an image feature vector. ``applicable_types``
    restricts an element attribute to elements whose label bin is in the set;
    ``None`` means the attribute applies to every element.
    """

    name: str
    owner: str
    kind: str
    cardinality: int | None = None
    dims: int = 1
    applicable_types: frozenset[int] | None = None
    bin_values: tuple[float, ...] | None = None
    value_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.owner not in (CANVAS, ELEMENT):
            raise ValueError(f"unknown owner {self.owner!r} for attribute {self.name!r}")
        if self.kind not in (CATEGORICAL, NUMERICAL):
            raise ValueError(f"unknown kind {self.kind!r} for attribute {self.name!r}")
        if self.dims < 1:
            raise ValueError(f"attribute {self.name!r} needs dims >= 1, got {self.dims}")
        if self.kind == CATEGORICAL:
            if self.cardinality is None or self.cardinality < 2:
                raise ValueError(
                    f"categorical attribute {self.name!r} needs cardinality >= 2, got {self.cardinality}"
                )
        elif self.cardinality is not None:
            raise ValueError(f"numerical attribute {self.name!r} must not set cardinality")
        if self.applicable_types is not None:
            if self.owner != ELEMENT:
                raise ValueError(f"applicability is only meaningful for element attributes ({self.name!r})")
            object.__setattr__(self, "applicable_types", frozenset(int(t) for t in self.applicable_types))
        if self.bin_values is not None:
            object.__setattr__(self, "bin_values", tuple(float(v) for v in self.bin_values))
            if self.kind != CATEGORICAL or len(self.bin_values) != self.cardinality:
                raise ValueError(f"bin_values of {self.name!r} must list one value per bin")
        if self.value_names is not None:
            object.__setattr__(self, "value_names", tuple(str(v) for v in self.value_names))
            if self.kind != CATEGORICAL or len(self.value_names) != self.cardinality:
                raise ValueError(f"value_names of {self.name!r} must list one name per bin")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def applies_to(self, type_value: int | None) -> bool:
        if self.applicable_types is None:
            return True
        return type_value is not None and int(type_value) in self.applicable_types

    def to_dict(self) -> dict:
        out = {"name": self.name, "owner": self.owner, "kind": self.kind, "dims": self.dims}
        if self.cardinality is not None:
            out["cardinality"] = self.cardinality
        if self.applicable_types is not None:
            out["applicable_types"] = sorted(self.applicable_types)
        if self.bin_values is not None:
            out["bin_values"] = list(self.bin_values)
        if self.value_names is not None:
            out["value_names"] = list(self.value_names)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "AttributeSpec":
        return cls(
            name=data["name"],
            owner=data["owner"],
            kind=data["kind"],
            cardinality=data.get("cardinality"),
            dims=data.get("dims", 1),
            applicable_types=(
                frozenset(data["applicable_types"]) if data.get("applicable_types") is not None else None
            ),
            bin_values=tuple(data["bin_values"]) if data.get("bin_values") is not None else None,
            value_names=tuple(data["value_names"]) if data.get("value_names") is not None else None,
        )


@dataclass(frozen=True)
class DocumentSchema:
    """Ordered attribute declarations for one dataset family.

    ``label_attr`` names the element attribute that acts as the element type
    (it drives attribute applicability, layout metrics, and palettes).
    ``default_canvas_size`` is the pixel size assumed for rendering when the
    schema has no width/height canvas attributes.
    """

    name: str
    canvas_attrs: tuple[AttributeSpec, ...]
    element_attrs: tuple[AttributeSpec, ...]
    max_length: int = 50
    label_attr: str = "type"
    default_canvas_size: tuple[int, int] = (1024, 1024)

    def __post_init__(self):
        object.__setattr__(self, "canvas_attrs", tuple(self.canvas_attrs))
        object.__setattr__(self, "element_attrs", tuple(self.element_attrs))
        if self.max_length < 1:
            raise ValueError("max_length must be positive")
        for attrs, owner in ((self.canvas_attrs, CANVAS), (self.element_attrs, ELEMENT)):
            names = [a.name for a in attrs]
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate {owner} attribute names: {names}")
            for a in attrs:
                if a.owner != owner:
                    raise ValueError(f"attribute {a.name!r} declared under the wrong owner")
        lengths = [a for a in self.canvas_attrs if a.name == "length"]
        if len(lengths) != 1:
            raise ValueError("schema needs exactly one canvas attribute named 'length'")
        spec = lengths[0]
        if not spec.is_categorical or spec.cardinality != self.max_length or spec.dims != 1:
            raise ValueError("the 'length' attribute must be categorical with cardinality == max_length")
        labels = [a for a in self.element_attrs if a.name == self.label_attr]
        if len(labels) != 1 or not labels[0].is_categorical or labels[0].dims != 1:
            raise ValueError(f"label_attr {self.label_attr!r} must be a 1-slot categorical element attribute")

    def canvas_attr(self, name: str) -> AttributeSpec:
        for a in self.canvas_attrs:
            if a.name == name:
                return a
        raise KeyError(name)

    def element_attr(self, name: str) -> AttributeSpec:
        for a in self.element_attrs:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def label_spec(self) -> AttributeSpec:
        return self.element_attr(self.label_attr)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_FILE_VERSION,
            "name": self.name,
            "max_length": self.max_length,
            "label_attr": self.label_attr,
            "default_canvas_size": list(self.default_canvas_size),
            "canvas_attrs": [a.to_dict() for a in self.canvas_attrs],
            "element_attrs": [a.to_dict() for a in self.element_attrs],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DocumentSchema":
        version = data.get("schema_version")
        if version != SCHEMA_FILE_VERSION:
            raise ValueError(f"unsupported schema_version {version!r}")
        return cls(
            name=data["name"],
            canvas_attrs=tuple(AttributeSpec.from_dict(d) for d in data["canvas_attrs"]),
            element_attrs=tuple(AttributeSpec.from_dict(d) for d in data["element_attrs"]),
            max_length=data["max_length"],
            label_attr=data.get("label_attr", "type"),
            default_canvas_size=tuple(data.get("default_canvas_size", (1024, 1024))),
        )

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: Path | str) -> "DocumentSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


def _as_value_tuple(value) -> tuple:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return (value,)
    return tuple(value)


@dataclass(frozen=True)
class Document:
    """One canvas attribute map plus a depth-ordered element sequence."""

    canvas: dict
    elements: tuple

    def __post_init__(self):
        canvas = {str(k): _as_value_tuple(v) for k, v in self.canvas.items()}
        elements = tuple({str(k): _as_value_tuple(v) for k, v in el.items()} for el in self.elements)
        object.__setattr__(self, "canvas", canvas)
        object.__setattr__(self, "elements", elements)

    @property
    def length(self) -> int:
        return len(self.elements)

    def to_record(self) -> dict:
        return {
            "canvas": {k: list(v) for k, v in self.canvas.items()},
            "elements": [{k: list(v) for k, v in el.items()} for el in self.elements],
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "Document":
        return cls(canvas=dict(record["canvas"]), elements=tuple(dict(el) for el in record["elements"]))


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _check_value(spec: AttributeSpec, value, where: str) -> list[str]:
    problems = []
    if not isinstance(value, tuple):
        value = _as_value_tuple(value)
    if len(value) != spec.dims:
        problems.append(f"{where}: attribute {spec.name!r} has {len(value)} slots, expected {spec.dims}")
        return problems
    if spec.is_categorical:
        for i, v in enumerate(value):
            if not isinstance(v, int) or isinstance(v, bool):
                problems.append(f"{where}: attribute {spec.name!r} slot {i} is not an integer bin index")
            elif not (0 <= v < spec.cardinality):
                problems.append(
                    f"{where}: attribute {spec.name!r} slot {i} value {v} outside [0, {spec.cardinality})"
                )
    else:
        for i, v in enumerate(value):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(float(v)):
                problems.append(f"{where}: attribute {spec.name!r} slot {i} is not a finite real")
    return problems


def validate(doc: Document, schema: DocumentSchema) -> ValidationResult:
    """Check every document invariant against the schema.

    Violations are returned as data rather than raised, so callers can report
    all problems in one pass.
    """
    violations: list[str] = []
    n = len(doc.elements)
    if not (1 <= n <= schema.max_length):
        violations.append(f"element count {n} out of range [1, {schema.max_length}]")

    canvas_names = {a.name for a in schema.canvas_attrs}
    for name in doc.canvas:
        if name not in canvas_names:
            violations.append(f"unknown canvas attribute {name!r}")
    for spec in schema.canvas_attrs:
        if spec.name not in doc.canvas:
            violations.append(f"missing canvas attribute {spec.name!r}")
            continue
        violations.extend(_check_value(spec, doc.canvas[spec.name], "canvas"))

    length_value = doc.canvas.get("length")
    if isinstance(length_value, tuple) and len(length_value) == 1 and isinstance(length_value[0], int):
        declared = bin_to_length(length_value[0])
        if declared != n and 1 <= n <= schema.max_length:
            violations.append(f"length mismatch: canvas declares {declared} elements, document has {n}")

    element_names = {a.name for a in schema.element_attrs}
    for t, element in enumerate(doc.elements):
        where = f"element {t}"
        for name in element:
            if name not in element_names:
                violations.append(f"{where}: unknown attribute {name!r}")
        label = element.get(schema.label_attr)
        label_value = label[0] if isinstance(label, tuple) and len(label) == 1 else None
        for spec in schema.element_attrs:
            applicable = spec.applies_to(label_value)
            present = spec.name in element
            if applicable and not present:
                violations.append(f"{where}: missing attribute {spec.name!r}")
            elif not applicable and present:
                violations.append(f"{where}: attribute {spec.name!r} not applicable to this element type")
            if present:
                violations.extend(_check_value(spec, element[spec.name], where))

    return ValidationResult(tuple(violations))
