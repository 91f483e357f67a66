"""Evaluation suite for document similarity and generation quality.

Three families of scores, all in [0, 1]:

  * structural similarity: attribute-wise comparison of a reference document
    against a prediction, averaged over a document set for reconstruction
  * layout mIoU: per-label intersection over union of boxes painted onto a
    64x64 grid in depth order
  * generation score: similarity of descriptive statistics (histograms and
    pooled feature vectors) between two document sets

Structural similarity is asymmetric: the first argument is the reference.
"""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .document import Document, DocumentSchema

logger = logging.getLogger(__name__)

GRID = 64


@dataclass(frozen=True)
class AttributeScore:
    name: str
    score: float
    applicable: bool = True


@dataclass
class MetricReport:
    """Aggregate evaluation results plus per-attribute diagnostics.

    ``attributes`` holds reconstruction scores averaged over document pairs
    where the attribute was applicable; ``gen_attributes`` holds the
    per-attribute terms whose mean is ``s_gen``.
    """

    attributes: list[AttributeScore]
    gen_attributes: list[AttributeScore]
    s_reconst: float
    miou: float
    s_gen: float

    def to_dict(self) -> dict:
        return {
            "s_reconst": self.s_reconst,
            "miou": self.miou,
            "s_gen": self.s_gen,
            "attributes": [
                {"name": a.name, "score": a.score, "applicable": a.applicable} for a in self.attributes
            ],
            "gen_attributes": [
                {"name": a.name, "score": a.score, "applicable": a.applicable} for a in self.gen_attributes
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def brevity_penalty(ref_len: int, pred_len: int) -> float:
    """Penalty factor for predictions shorter than the reference."""
    return math.exp(min(0.0, 1.0 - ref_len / pred_len))


def unigram_bleu(pred_tokens: Sequence, ref_tokens: Sequence) -> float:
    """Clipped unigram precision times the brevity penalty."""
    if not ref_tokens:
        raise ValueError("reference token sequence must be non-empty")
    if not pred_tokens:
        return 0.0
    ref_counts = Counter(ref_tokens)
    clipped = 0
    for token, count in Counter(pred_tokens).items():
        clipped += min(count, ref_counts.get(token, 0))
    precision = clipped / len(pred_tokens)
    return precision * brevity_penalty(len(ref_tokens), len(pred_tokens))


def pooled_feature_similarity(pred_features: Sequence, ref_features: Sequence) -> float:
    """Cosine similarity of average-pooled features, rescaled to [0, 1], times brevity."""
    if len(ref_features) == 0:
        raise ValueError("reference feature sequence must be non-empty")
    if len(pred_features) == 0:
        return 0.0
    pred = np.mean(np.asarray(pred_features, dtype=np.float64), axis=0)
    ref = np.mean(np.asarray(ref_features, dtype=np.float64), axis=0)
    denom = np.linalg.norm(pred) * np.linalg.norm(ref)
    if denom == 0.0:
        logger.warning("pooled feature vector has zero norm; scoring cosine as 0")
        cos = 0.0
    else:
        cos = float(pred @ ref / denom)
    return (cos + 1.0) / 2.0 * brevity_penalty(len(ref_features), len(pred_features))


def _attribute_tokens(doc: Document, name: str) -> list[tuple]:
    return [el[name] for el in doc.elements if name in el]


def structural_similarity_detail(
    ref: Document, pred: Document, schema: DocumentSchema
) -> list[AttributeScore]:
    """Per-attribute scores behind :func:`structural_similarity`.

    Canvas attributes (length excluded) score slot-wise accuracy. Element
    attributes score unigram BLEU over per-element value tuples when
    categorical and pooled feature similarity when numerical; attributes
    empty in either document are marked not applicable.
    """
    scores: list[AttributeScore] = []
    for spec in schema.canvas_attrs:
        if spec.name == "length":
            continue
        a, b = ref.canvas[spec.name], pred.canvas[spec.name]
        if spec.is_categorical:
            score = sum(1.0 for x, y in zip(a, b) if x == y) / spec.dims
        else:
            score = pooled_feature_similarity([b], [a])
        scores.append(AttributeScore(spec.name, score))
    for spec in schema.element_attrs:
        ref_vals = _attribute_tokens(ref, spec.name)
        pred_vals = _attribute_tokens(pred, spec.name)
        if not ref_vals or not pred_vals:
            scores.append(AttributeScore(spec.name, 0.0, applicable=False))
            continue
        if spec.is_categorical:
            score = unigram_bleu(pred_vals, ref_vals)
        else:
            score = pooled_feature_similarity(pred_vals, ref_vals)
        scores.append(AttributeScore(spec.name, score))
    return scores


def structural_similarity(ref: Document, pred: Document, schema: DocumentSchema) -> float:
    scores = [s.score for s in structural_similarity_detail(ref, pred, schema) if s.applicable]
    return sum(scores) / len(scores)


def reconstruction_score(dataset: Sequence[Document], reconstructions: Sequence[Document], schema: DocumentSchema) -> float:
    """Mean structural similarity over paired documents."""
    if len(dataset) != len(reconstructions):
        raise ValueError(f"got {len(dataset)} documents but {len(reconstructions)} reconstructions")
    if not dataset:
        raise ValueError("document set must be non-empty")
    total = 0.0
    for ref, pred in zip(dataset, reconstructions):
        total += structural_similarity(ref, pred, schema)
    return total / len(dataset)


# ---------------------------------------------------------------------------
# layout mIoU


def rasterize_labels(doc: Document, schema: DocumentSchema, label_attr: str | None = None) -> dict[int, np.ndarray]:
    """Paint elements onto a 64x64 grid in depth order and split cells by label.

    A cell belongs to the topmost element covering it. A size bin s spans
    s + 1 cells so zero-size bins still occupy one cell. Returns one boolean
    mask per label present among the elements; fully occluded labels map to
    empty masks.
    """
    label_attr = label_attr or schema.label_attr
    owner = np.full((GRID, GRID), -1, dtype=np.int64)
    labels = set()
    for element in doc.elements:
        label = int(element[label_attr][0])
        labels.add(label)
        left, top = element["position"]
        w, h = element["size"]
        owner[top : min(top + h + 1, GRID), left : min(left + w + 1, GRID)] = label
    return {label: owner == label for label in sorted(labels)}


def layout_miou(doc1: Document, doc2: Document, schema: DocumentSchema, label_attr: str | None = None) -> float:
    """Mean IoU over labels present in either document's rasterization.

    A label present on one side only scores 0. Labels whose masks are empty
    on both sides (fully occluded everywhere) are excluded.
    """
    masks1 = rasterize_labels(doc1, schema, label_attr)
    masks2 = rasterize_labels(doc2, schema, label_attr)
    empty = np.zeros((GRID, GRID), dtype=bool)
    total, included = 0.0, 0
    for label in sorted(set(masks1) | set(masks2)):
        m1 = masks1.get(label, empty)
        m2 = masks2.get(label, empty)
        union = int(np.count_nonzero(m1 | m2))
        if union == 0:
            continue
        inter = int(np.count_nonzero(m1 & m2))
        total += inter / union
        included += 1
    if included == 0:
        return 0.0
    return total / included


def dataset_layout_miou(
    docs1: Sequence[Document], docs2: Sequence[Document], schema: DocumentSchema, label_attr: str | None = None
) -> float:
    if len(docs1) != len(docs2):
        raise ValueError("document sets must be paired")
    if not docs1:
        raise ValueError("document set must be non-empty")
    total = 0.0
    for a, b in zip(docs1, docs2):
        total += layout_miou(a, b, schema, label_attr)
    return total / len(docs1)


# ---------------------------------------------------------------------------
# generation score


def histogram_intersection(h1: Sequence[float], h2: Sequence[float]) -> float:
    """Overlap of two histograms after normalizing each to unit mass."""
    if len(h1) != len(h2):
        raise ValueError(f"histograms must share bin count, got {len(h1)} and {len(h2)}")
    t1 = 0.0
    t2 = 0.0
    for a, b in zip(h1, h2):
        t1 += float(a)
        t2 += float(b)
    if t1 <= 0.0 or t2 <= 0.0:
        raise ValueError("histograms must have positive total mass")
    total = 0.0
    for a, b in zip(h1, h2):
        total += min(float(a) / t1, float(b) / t2)
    return total


def _pooled_histogram(docs: Sequence[Document], spec, owner: str) -> list[float]:
    counts = [0.0] * spec.cardinality
    for doc in docs:
        if owner == "canvas":
            for v in doc.canvas[spec.name]:
                counts[v] += 1.0
        else:
            for el in doc.elements:
                value = el.get(spec.name)
                if value is not None:
                    for v in value:
                        counts[v] += 1.0
    return counts


def _pooled_vector(docs: Sequence[Document], name: str, owner: str) -> np.ndarray | None:
    rows = []
    for doc in docs:
        if owner == "canvas":
            rows.append(doc.canvas[name])
            continue
        for el in doc.elements:
            value = el.get(name)
            if value is not None:
                rows.append(value)
    if not rows:
        return None
    return np.mean(np.asarray(rows, dtype=np.float64), axis=0)


def generation_score_detail(
    set1: Sequence[Document], set2: Sequence[Document], schema: DocumentSchema
) -> list[AttributeScore]:
    """Per-attribute similarity of descriptive statistics between two sets.

    Categorical attributes compare pooled value histograms via histogram
    intersection; numerical ones compare average-pooled vectors via raw
    cosine similarity. Length is included. An attribute empty in exactly one
    set scores 0; empty in both, it is excluded.
    """
    if not set1 or not set2:
        raise ValueError("both document sets must be non-empty")
    scores: list[AttributeScore] = []
    for owner, attrs in (("canvas", schema.canvas_attrs), ("element", schema.element_attrs)):
        for spec in attrs:
            if spec.is_categorical:
                h1 = _pooled_histogram(set1, spec, owner)
                h2 = _pooled_histogram(set2, spec, owner)
                present1, present2 = sum(h1) > 0, sum(h2) > 0
                if not present1 and not present2:
                    scores.append(AttributeScore(spec.name, 0.0, applicable=False))
                    continue
                score = histogram_intersection(h1, h2) if (present1 and present2) else 0.0
            else:
                v1 = _pooled_vector(set1, spec.name, owner)
                v2 = _pooled_vector(set2, spec.name, owner)
                if v1 is None and v2 is None:
                    scores.append(AttributeScore(spec.name, 0.0, applicable=False))
                    continue
                if v1 is None or v2 is None:
                    score = 0.0
                else:
                    denom = np.linalg.norm(v1) * np.linalg.norm(v2)
                    score = float(v1 @ v2 / denom) if denom > 0 else 0.0
            scores.append(AttributeScore(spec.name, score))
    return scores


def generation_score(set1: Sequence[Document], set2: Sequence[Document], schema: DocumentSchema) -> float:
    scores = [s.score for s in generation_score_detail(set1, set2, schema) if s.applicable]
    return sum(scores) / len(scores)
