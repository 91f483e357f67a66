"""Synthetic dataset generation, document file IO, batching, and feature retrieval.

Document files are line-delimited JSON, one versioned record per line:
``{"schema_version": 1, "id": ..., "canvas": {...}, "elements": [{...}]}``.
A dataset directory holds ``manifest.json``, ``schema.json``, and one
document file per split. Generation is a pure function of (config, seed):
running it twice produces byte-identical files.
"""
from __future__ import annotations

import colorsys
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .document import Document, DocumentSchema, length_to_bin, validate
from .schemas import COLOR_TYPES, FAMILIES, IMAGE_TYPES, schema_for_family

MANIFEST_FILE_VERSION = 1
DOCUMENT_FILE_VERSION = 1
SPLITS = ("train", "val", "test")


class LoadError(ValueError):
    """Raised when a dataset file is missing, malformed, or invalid."""


@dataclass(frozen=True)
class GeneratorConfig:
    """Settings for the synthetic document generator.

    ``length_weights[i]`` is the unnormalized probability of a document
    having ``i + 1`` elements.
    """

    family: str = "crello-like"
    n_documents: int = 1000
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    length_weights: tuple[float, ...] = (1.0,) * 10
    feature_dim: int = 256
    max_length: int = 50

    def __post_init__(self):
        object.__setattr__(self, "split_ratios", tuple(float(r) for r in self.split_ratios))
        object.__setattr__(self, "length_weights", tuple(float(w) for w in self.length_weights))
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.n_documents < 1:
            raise ValueError("n_documents must be >= 1")
        if len(self.split_ratios) != len(SPLITS) or any(r < 0 for r in self.split_ratios):
            raise ValueError("split_ratios must be three non-negative numbers")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ValueError("split_ratios must sum to 1")
        if not (1 <= len(self.length_weights) <= self.max_length):
            raise ValueError("length_weights must cover counts within [1, max_length]")
        if any(w < 0 for w in self.length_weights) or sum(self.length_weights) <= 0:
            raise ValueError("length_weights must be non-negative with positive total")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")

    @property
    def length_probs(self) -> np.ndarray:
        w = np.asarray(self.length_weights, dtype=np.float64)
        return w / w.sum()

    @property
    def split_counts(self) -> dict[str, int]:
        n = self.n_documents
        counts = {s: int(n * r) for s, r in zip(SPLITS, self.split_ratios)}
        counts["train"] += n - sum(counts.values())
        return counts


@dataclass
class DatasetManifest:
    """Index of a generated dataset: schema, per-split files, and counts."""

    schema: DocumentSchema
    splits: dict[str, Path]
    counts: dict[str, int]
    seed: int
    family: str
    root: Path

    def to_dict(self) -> dict:
        return {
            "schema_version": MANIFEST_FILE_VERSION,
            "family": self.family,
            "seed": self.seed,
            "schema": "schema.json",
            "splits": {name: path.name for name, path in self.splits.items()},
            "counts": dict(self.counts),
        }

    def save(self) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        self.schema.save(self.root / "schema.json")
        manifest_path = self.root / "manifest.json"
        manifest_path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return manifest_path

    def load_split(self, name: str) -> list[Document]:
        return [doc for _, doc in self.load_split_with_ids(name)]

    def load_split_with_ids(self, name: str) -> list[tuple[str, Document]]:
        if name not in self.splits:
            raise LoadError(f"manifest has no split {name!r}")
        pairs = read_documents(self.splits[name], self.schema)
        expected = self.counts.get(name)
        if expected is not None and len(pairs) != expected:
            raise LoadError(
                f"{self.splits[name]}: manifest declares {expected} documents, file has {len(pairs)}"
            )
        return pairs


def load_dataset(manifest_path: Path | str) -> DatasetManifest:
    """Parse a manifest and verify that the referenced files exist."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise LoadError(f"manifest not found: {manifest_path}")
    try:
        data = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise LoadError(f"{manifest_path}: not valid JSON ({err})") from err
    if data.get("schema_version") != MANIFEST_FILE_VERSION:
        raise LoadError(f"{manifest_path}: unsupported schema_version {data.get('schema_version')!r}")
    root = manifest_path.parent
    schema_path = root / data["schema"]
    if not schema_path.exists():
        raise LoadError(f"schema file not found: {schema_path}")
    schema = DocumentSchema.load(schema_path)
    splits = {}
    for name, rel in data["splits"].items():
        path = root / rel
        if not path.exists():
            raise LoadError(f"split file not found: {path}")
        splits[name] = path
    return DatasetManifest(
        schema=schema,
        splits=splits,
        counts={k: int(v) for k, v in data["counts"].items()},
        seed=int(data["seed"]),
        family=data["family"],
        root=root,
    )


def write_documents(path: Path | str, pairs: Iterable[tuple[str, Document]]) -> None:
    with open(path, "w") as fh:
        for doc_id, doc in pairs:
            record = {"schema_version": DOCUMENT_FILE_VERSION, "id": doc_id, **doc.to_record()}
            fh.write(json.dumps(record) + "\n")


def read_documents(path: Path | str, schema: DocumentSchema) -> list[tuple[str, Document]]:
    """Read and validate a document file, reporting the offending line on failure."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"split file not found: {path}")
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                doc = Document.from_record(record)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                raise LoadError(f"{path}:{lineno}: malformed document record ({err})") from err
            if record.get("schema_version") != DOCUMENT_FILE_VERSION:
                raise LoadError(
                    f"{path}:{lineno}: unsupported document schema_version {record.get('schema_version')!r}"
                )
            verdict = validate(doc, schema)
            if not verdict.ok:
                raise LoadError(f"{path}:{lineno}: invalid document: {verdict.violations[0]}")
            pairs.append((str(record.get("id", f"line-{lineno}")), doc))
    return pairs


# ---------------------------------------------------------------------------
# synthetic generation


def element_feature(family: str, content_key: tuple, dim: int) -> np.ndarray:
    """Deterministic unit-norm feature vector keyed by element content.

    Identical element content always yields the identical vector, which gives
    the synthetic data a learnable content/feature correlation.
    """
    digest = hashlib.sha256(repr((family, content_key)).encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def preview_color(vec: np.ndarray) -> tuple[int, int, int]:
    """Stable display color for a feature vector."""
    digest = hashlib.sha256(np.asarray(vec, dtype=np.float64).tobytes()).digest()
    hue = digest[0] / 255.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.85)
    return (int(round(r * 255)), int(round(g * 255)), int(round(b * 255)))


def _jitter_box(rng, box, jitter=2):
    left, top, w, h = box
    left = int(np.clip(left + rng.integers(-jitter, jitter + 1), 0, 63))
    top = int(np.clip(top + rng.integers(-jitter, jitter + 1), 0, 63))
    w = int(np.clip(w + rng.integers(-jitter, jitter + 1), 0, 63))
    h = int(np.clip(h + rng.integers(-jitter, jitter + 1), 0, 63))
    return left, top, w, h


# layout archetypes per crello-like element type, as (left, top, width, height) bins
_CRELLO_BOXES = {
    0: [(8, 8, 20, 20), (36, 30, 20, 20), (24, 20, 14, 14)],       # vector_shape
    1: [(4, 4, 55, 30), (4, 30, 28, 28), (32, 4, 28, 28)],         # image
    2: [(6, 6, 50, 8), (6, 46, 50, 8), (10, 26, 42, 10)],          # text_placeholder
    3: [(0, 0, 63, 63), (0, 40, 63, 23)],                          # solid_fill
    4: [(2, 2, 59, 59)],                                           # frame
    5: [(4, 31, 55, 1), (4, 16, 55, 1)],                           # line
}

_CRELLO_COLOR_CHOICES = [(15, 15, 15), (0, 0, 0), (14, 3, 2), (2, 7, 13), (12, 12, 3), (3, 11, 6)]

_RICO_BOXES = [
    (0, 0, 63, 5),      # toolbar-like strip
    (2, 8, 59, 7),      # list row
    (2, 18, 59, 7),
    (4, 28, 55, 18),    # content block
    (24, 50, 15, 7),    # button
    (54, 2, 7, 7),      # icon
]


def _sample_crello_document(rng: np.random.Generator, schema: DocumentSchema, config: GeneratorConfig) -> Document:
    n = int(rng.choice(len(config.length_probs), p=config.length_probs)) + 1
    group = int(rng.integers(7))
    canvas = {
        "length": (length_to_bin(n),),
        "group": (group,),
        "format": (int((group * 10 + rng.integers(10)) % 68),),
        "width": (int(np.clip(6 * group + 4 + rng.integers(-3, 4), 0, 41)),),
        "height": (int(np.clip(6 * group + 6 + rng.integers(-3, 4), 0, 46)),),
        "category": (int(rng.integers(24)),),
    }
    elements = []
    for t in range(n):
        if t == 0 and rng.random() < 0.8:
            etype = 3 if rng.random() < 0.6 else 1
            box = (0, 0, 63, 63)
        else:
            etype = int(rng.choice(6, p=[0.28, 0.22, 0.28, 0.07, 0.08, 0.07]))
            box = _jitter_box(rng, _CRELLO_BOXES[etype][int(rng.integers(len(_CRELLO_BOXES[etype])))])
        left, top, w, h = box
        opacity = 7 if rng.random() < 0.8 else int(rng.integers(4, 8))
        element = {
            "type": (etype,),
            "position": (left, top),
            "size": (w, h),
            "opacity": (opacity,),
        }
        if etype in COLOR_TYPES:
            base = _CRELLO_COLOR_CHOICES[int(rng.integers(len(_CRELLO_COLOR_CHOICES)))]
            element["color"] = tuple(int(np.clip(c + rng.integers(-1, 2), 0, 15)) for c in base)
        if etype in IMAGE_TYPES:
            key = (etype, left, top, w, h, opacity)
            element["image"] = tuple(float(v) for v in element_feature("crello-like", key, config.feature_dim))
        elements.append(element)
    return Document(canvas=canvas, elements=tuple(elements))


def _sample_rico_document(rng: np.random.Generator, schema: DocumentSchema, config: GeneratorConfig) -> Document:
    n = int(rng.choice(len(config.length_probs), p=config.length_probs)) + 1
    canvas = {"length": (length_to_bin(n),)}
    elements = []
    for t in range(n):
        component = int(rng.integers(27))
        box = _jitter_box(rng, _RICO_BOXES[component % len(_RICO_BOXES)], jitter=1)
        left, top, w, h = box
        top = int(np.clip(top + 4 * (t % 4), 0, 63))
        elements.append(
            {
                "component": (component,),
                "position": (left, top),
                "size": (w, h),
                "icon": (int(rng.integers(59)),),
                "button": (int(rng.integers(25)),),
                "clickable": (int(component % 2 == 0),),
            }
        )
    return Document(canvas=canvas, elements=tuple(elements))


_SAMPLERS = {"crello-like": _sample_crello_document, "rico-like": _sample_rico_document}


def sample_documents(config: GeneratorConfig, seed, n: int | None = None) -> list[Document]:
    """Draw documents in memory without touching disk."""
    rng = np.random.default_rng(seed)
    schema = schema_for_family(config.family, feature_dim=config.feature_dim, max_length=config.max_length)
    sampler = _SAMPLERS[config.family]
    return [sampler(rng, schema, config) for _ in range(n if n is not None else config.n_documents)]


def generate_synthetic(config: GeneratorConfig, seed: int, out_dir: Path | str) -> DatasetManifest:
    """Generate a dataset on disk and return its manifest.

    Every emitted document passes :func:`validate`. Splits get disjoint
    document ids and independent random streams derived from ``seed``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    schema = schema_for_family(config.family, feature_dim=config.feature_dim, max_length=config.max_length)
    sampler = _SAMPLERS[config.family]
    splits: dict[str, Path] = {}
    counts = config.split_counts
    for split_index, split in enumerate(SPLITS):
        rng = np.random.default_rng([seed, split_index])
        pairs = []
        for i in range(counts[split]):
            doc = sampler(rng, schema, config)
            verdict = validate(doc, schema)
            if not verdict.ok:
                raise AssertionError(f"generator produced an invalid document: {verdict.violations[0]}")
            pairs.append((f"{split}-{i:06d}", doc))
        path = out_dir / f"{split}.jsonl"
        write_documents(path, pairs)
        splits[split] = path
    manifest = DatasetManifest(
        schema=schema, splits=splits, counts=counts, seed=seed, family=config.family, root=out_dir
    )
    manifest.save()
    return manifest


# ---------------------------------------------------------------------------
# batching

PAD_FLOAT = 0.0


@dataclass
class Batch:
    """Fixed-length padded encoding of a document list.

    Padded categorical slots hold the reserved index ``cardinality`` (one past
    the last valid bin) so they can never be confused with real values;
    ``element_presence[attr][b, t]`` is True where the attribute actually
    exists on element t of document b.
    """

    canvas_values: dict[str, np.ndarray]
    element_values: dict[str, np.ndarray]
    element_presence: dict[str, np.ndarray]
    mask: np.ndarray
    lengths: np.ndarray

    @property
    def size(self) -> int:
        return int(self.mask.shape[0])

    @property
    def max_len(self) -> int:
        return int(self.mask.shape[1])


def batchify(docs: Sequence[Document], schema: DocumentSchema, pad_to: int | None = None) -> Batch:
    """Pack validated documents into padded arrays with a validity mask."""
    if not docs:
        raise ValueError("batchify needs at least one document")
    lengths = np.array([len(d.elements) for d in docs], dtype=np.int64)
    max_len = int(lengths.max()) if pad_to is None else int(pad_to)
    if max_len < lengths.max():
        raise ValueError("pad_to is smaller than the longest document")
    batch_size = len(docs)
    mask = np.arange(max_len)[None, :] < lengths[:, None]

    canvas_values = {}
    for spec in schema.canvas_attrs:
        dtype = np.int64 if spec.is_categorical else np.float64
        canvas_values[spec.name] = np.array([d.canvas[spec.name] for d in docs], dtype=dtype)

    element_values, element_presence = {}, {}
    for spec in schema.element_attrs:
        if spec.is_categorical:
            arr = np.full((batch_size, max_len, spec.dims), spec.cardinality, dtype=np.int64)
        else:
            arr = np.full((batch_size, max_len, spec.dims), PAD_FLOAT, dtype=np.float64)
        present = np.zeros((batch_size, max_len), dtype=bool)
        for b, doc in enumerate(docs):
            for t, element in enumerate(doc.elements):
                value = element.get(spec.name)
                if value is not None:
                    arr[b, t] = value
                    present[b, t] = True
        element_values[spec.name] = arr
        element_presence[spec.name] = present

    return Batch(
        canvas_values=canvas_values,
        element_values=element_values,
        element_presence=element_presence,
        mask=mask,
        lengths=lengths,
    )


def unbatchify(batch: Batch, schema: DocumentSchema) -> list[Document]:
    """Exact inverse of :func:`batchify` on validated documents."""
    docs = []
    for b in range(batch.size):
        canvas = {}
        for spec in schema.canvas_attrs:
            row = batch.canvas_values[spec.name][b]
            canvas[spec.name] = tuple(int(v) for v in row) if spec.is_categorical else tuple(float(v) for v in row)
        elements = []
        for t in range(int(batch.lengths[b])):
            element = {}
            for spec in schema.element_attrs:
                if not batch.element_presence[spec.name][b, t]:
                    continue
                row = batch.element_values[spec.name][b, t]
                element[spec.name] = (
                    tuple(int(v) for v in row) if spec.is_categorical else tuple(float(v) for v in row)
                )
            elements.append(element)
        docs.append(Document(canvas=canvas, elements=tuple(elements)))
    return docs


# ---------------------------------------------------------------------------
# feature retrieval index


@dataclass
class FeatureIndex:
    """Read-only retrieval index over element feature vectors."""

    ids: tuple[str, ...]
    vectors: np.ndarray
    colors: tuple[tuple[int, int, int], ...]
    metric: str = "cosine"

    def __post_init__(self):
        if self.metric != "cosine":
            raise ValueError(f"unsupported index metric {self.metric!r}")
        if len(self.ids) != len(set(self.ids)):
            raise ValueError("feature index ids must be unique")
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
            raise ValueError("vectors must be a [n_entries, dim] array")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def color_of(self, entry_id: str) -> tuple[int, int, int]:
        return self.colors[self.ids.index(entry_id)]


def build_feature_index(
    pairs: Sequence[tuple[str, Document]], schema: DocumentSchema, attr: str | None = None
) -> FeatureIndex:
    """Collect every element feature vector in the given documents."""
    if attr is None:
        numeric = [a for a in schema.element_attrs if not a.is_categorical]
        if not numeric:
            raise ValueError("schema has no numerical element attribute to index")
        attr = numeric[0].name
    ids, vectors, colors = [], [], []
    for doc_id, doc in pairs:
        for t, element in enumerate(doc.elements):
            value = element.get(attr)
            if value is None:
                continue
            vec = np.asarray(value, dtype=np.float64)
            ids.append(f"{doc_id}/{t}")
            vectors.append(vec)
            colors.append(preview_color(vec))
    if not ids:
        raise ValueError(f"no elements carry attribute {attr!r}")
    return FeatureIndex(ids=tuple(ids), vectors=np.stack(vectors), colors=tuple(colors))


def nearest_neighbor(index: FeatureIndex, query: np.ndarray) -> str:
    """Entry id with maximal cosine similarity to the query; ties pick the smallest id."""
    if len(index.ids) == 0:
        raise ValueError("feature index is empty")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.dim,):
        raise ValueError(f"query dim {query.shape} does not match index dim {index.dim}")
    qn = np.linalg.norm(query)
    norms = np.linalg.norm(index.vectors, axis=1)
    denom = np.where(norms * qn > 0, norms * qn, 1.0)
    sims = index.vectors @ query / denom
    best = sims.max()
    candidates = [index.ids[i] for i in np.flatnonzero(sims == best)]
    return min(candidates)
