"""Loss, optimization loop, evaluation driver, and the KL-weight grid search.

The per-document loss is the sum of per-attribute reconstruction terms
(cross entropy for categorical attributes, mean squared error for numerical
ones), a KL divergence to the unit Gaussian prior weighted by ``lambda_kl``,
and an L2 penalty over all trainable parameters weighted by ``lambda_l2``.
Training teacher-forces the decoder with ground truth lengths (and, for
autoregressive variants, ground truth previous elements); the length head
still pays its own cross entropy.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from .data import Batch, DatasetManifest, batchify
from .document import Document
from .metrics import (
    AttributeScore,
    MetricReport,
    dataset_layout_miou,
    generation_score_detail,
    structural_similarity_detail,
)
from .model import (
    DocumentVAE,
    LatentDistribution,
    ModelConfig,
    load_checkpoint,
    sample_latent,
    save_checkpoint,
)

logger = logging.getLogger(__name__)

DEFAULT_GRIDS = {
    "crello-like": tuple(float(2**k) for k in range(1, 9)),
    "rico-like": tuple(float(2**k) for k in range(1, 8)),
}


class TrainingDiverged(RuntimeError):
    """Raised when the loss turns non-finite; carries the last good checkpoint."""

    def __init__(self, message: str, checkpoint: Path | None = None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class TrainConfig:
    lambda_kl: float = 1.0
    lambda_l2: float = 1e-6
    learning_rate: float = 1e-3
    epochs: int = 500
    batch_size: int = 64
    seed: int = 0
    eval_every: int = 1
    max_steps: int | None = None

    def __post_init__(self):
        if self.lambda_kl <= 0:
            raise ValueError("lambda_kl must be positive")
        if self.lambda_l2 < 0:
            raise ValueError("lambda_l2 must be non-negative")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("learning_rate, epochs, batch_size, and eval_every must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be positive when set")

    def to_dict(self) -> dict:
        return {
            "lambda_kl": self.lambda_kl,
            "lambda_l2": self.lambda_l2,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "eval_every": self.eval_every,
            "max_steps": self.max_steps,
        }

    @classmethod
    def from_dict(cls, data) -> "TrainConfig":
        return cls(**dict(data))


@dataclass
class LossBreakdown:
    """Loss components for one batch; ``total_tensor`` keeps the graph."""

    per_attribute: dict[str, float]
    kl_term: float
    l2_term: float
    total: float
    total_tensor: Tensor | None = field(default=None, repr=False, compare=False)

    def to_record(self) -> dict:
        record = {"total": self.total, "kl": self.kl_term, "l2": self.l2_term}
        for name, value in self.per_attribute.items():
            record[f"recon_{name}"] = value
        return record


def kl_term(dist: LatentDistribution) -> Tensor:
    """Per-document KL divergence of the posterior from the unit Gaussian."""
    var = dist.sigma**2
    return 0.5 * (dist.mu**2 + var - torch.log(var) - 1.0).sum(dim=-1)


def attribute_loss(target: Tensor, prediction: Tensor, kind: str, element_mask: Tensor | None = None) -> Tensor:
    """Per-document reconstruction loss for one attribute.

    Categorical losses sum the slot-wise cross entropies; numerical losses
    average the squared error over slots. ``element_mask`` marks the steps
    where the attribute is actually present; masked steps contribute nothing.
    Returns one value per document.
    """
    if kind == "categorical":
        cardinality = prediction.shape[-1]
        if target.shape != prediction.shape[:-1]:
            raise ValueError(f"target shape {tuple(target.shape)} does not match logits {tuple(prediction.shape)}")
        log_probs = F.log_softmax(prediction, dim=-1)
        safe_target = target.clamp(min=0, max=cardinality - 1)
        picked = log_probs.gather(-1, safe_target.unsqueeze(-1)).squeeze(-1)
        per_position = -picked.sum(dim=-1)
    elif kind == "numerical":
        if target.shape != prediction.shape:
            raise ValueError(f"target shape {tuple(target.shape)} does not match prediction {tuple(prediction.shape)}")
        per_position = ((prediction - target) ** 2).mean(dim=-1)
    else:
        raise ValueError(f"unknown attribute kind {kind!r}")
    if element_mask is not None:
        per_position = per_position * element_mask.to(per_position.dtype)
        return per_position.sum(dim=-1)
    return per_position


def total_loss(
    batch: Batch,
    model: DocumentVAE,
    config: TrainConfig,
    generator: torch.Generator | None = None,
    sample_mode: str = "stochastic",
) -> LossBreakdown:
    """Batch loss with teacher-forced lengths; raises on non-finite values."""
    schema = model.schema
    tb = model.tensorize(batch)
    try:
        dist = model.encode_tensors(tb)
    except ValueError as err:
        # non-finite or degenerate posterior parameters mean the run blew up
        raise TrainingDiverged(f"encoder produced an invalid posterior: {err}") from err
    z = sample_latent(dist, mode=sample_mode, generator=generator)
    decoded = model.decode_batch(z, tb.lengths, teacher=tb)

    per_attribute_tensors: dict[str, Tensor] = {}
    for spec in schema.canvas_attrs:
        if spec.is_categorical:
            per_attribute_tensors[spec.name] = attribute_loss(
                tb.canvas[spec.name], decoded.canvas_logits[spec.name], "categorical"
            )
        else:
            per_attribute_tensors[spec.name] = attribute_loss(
                tb.canvas[spec.name], decoded.canvas_values[spec.name], "numerical"
            )
    for spec in schema.element_attrs:
        if spec.is_categorical:
            pred = decoded.element_logits[spec.name]
            steps = pred.shape[1]
            per_attribute_tensors[spec.name] = attribute_loss(
                tb.elements[spec.name][:, :steps],
                pred,
                "categorical",
                element_mask=tb.presence[spec.name][:, :steps],
            )
        else:
            pred = decoded.element_values[spec.name]
            steps = pred.shape[1]
            per_attribute_tensors[spec.name] = attribute_loss(
                tb.elements[spec.name][:, :steps],
                pred,
                "numerical",
                element_mask=tb.presence[spec.name][:, :steps],
            )

    recon = torch.stack(list(per_attribute_tensors.values())).sum(dim=0).mean()
    kl = kl_term(dist).mean()
    l2 = torch.stack([p.square().sum() for p in model.parameters()]).sum()
    total = recon + config.lambda_kl * kl + config.lambda_l2 * l2

    breakdown = LossBreakdown(
        per_attribute={name: float(t.detach().mean()) for name, t in per_attribute_tensors.items()},
        kl_term=float(kl.detach()),
        l2_term=float(l2.detach()),
        total=float(total.detach()),
        total_tensor=total,
    )
    if not math.isfinite(breakdown.total):
        raise TrainingDiverged(f"non-finite loss: {breakdown.to_record()}")
    return breakdown


# ---------------------------------------------------------------------------
# evaluation


def evaluate_model(
    model: DocumentVAE,
    docs: Sequence[Document],
    gen_seed: int = 0,
    gen_count: int | None = None,
) -> MetricReport:
    """Reconstruction metrics through mean latent codes plus a prior-sample
    generation score against the same documents."""
    schema = model.schema
    recon = model.reconstruct(docs, mode="mean")

    by_attr: dict[str, list[float]] = {}
    s_total = 0.0
    for ref, pred in zip(docs, recon):
        detail = structural_similarity_detail(ref, pred, schema)
        applicable = [s.score for s in detail if s.applicable]
        s_total += sum(applicable) / len(applicable)
        for s in detail:
            if s.applicable:
                by_attr.setdefault(s.name, []).append(s.score)
    s_reconst = s_total / len(docs)
    attr_names = [a.name for a in schema.canvas_attrs if a.name != "length"] + [
        a.name for a in schema.element_attrs
    ]
    attributes = [
        AttributeScore(name, float(np.mean(by_attr[name])) if name in by_attr else 0.0, name in by_attr)
        for name in attr_names
    ]

    miou = dataset_layout_miou(docs, recon, schema)

    generated = model.generate(gen_count or len(docs), seed=gen_seed)
    gen_detail = generation_score_detail(docs, generated, schema)
    applicable_gen = [s.score for s in gen_detail if s.applicable]
    s_gen = sum(applicable_gen) / len(applicable_gen)

    return MetricReport(
        attributes=attributes,
        gen_attributes=gen_detail,
        s_reconst=s_reconst,
        miou=miou,
        s_gen=s_gen,
    )


def validation_kl(model: DocumentVAE, docs: Sequence[Document], chunk_size: int = 128) -> float:
    """Mean posterior KL over a document set, without sampling."""
    model.eval()
    values = []
    with torch.no_grad():
        for start in range(0, len(docs), chunk_size):
            chunk = docs[start : start + chunk_size]
            dist = model.encode(batchify(chunk, model.schema))
            values.extend(kl_term(dist).tolist())
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    best_checkpoint: Path
    last_checkpoint: Path
    metrics_log: Path
    history: list[dict]
    best_epoch: int
    best_s_gen: float
    steps: int


def _append_record(path: Path, record: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(record) + "\n")


def train(
    manifest: DatasetManifest,
    model_config: ModelConfig,
    train_config: TrainConfig,
    out_dir: Path | str,
) -> TrainResult:
    """Optimize a model on the manifest's train split.

    Logs one record per epoch and split to ``metrics.jsonl``, keeps the best
    checkpoint by validation generation score, and aborts with the last good
    checkpoint if the loss diverges. Fully reproducible for a fixed seed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_docs = manifest.load_split("train")
    val_docs = manifest.load_split("val")
    schema = manifest.schema

    torch.manual_seed(train_config.seed)
    model = DocumentVAE(model_config, schema)
    optimizer = torch.optim.Adam(model.parameters(), lr=train_config.learning_rate)
    rng = np.random.default_rng(train_config.seed)

    metrics_log = out_dir / "metrics.jsonl"
    metrics_log.write_text("")
    best_path = out_dir / "best.pt"
    last_path = out_dir / "last.pt"
    save_checkpoint(model, last_path, step=0)

    history: list[dict] = []
    best_s_gen, best_epoch = -math.inf, -1
    steps = 0
    stop = False

    for epoch in range(train_config.epochs):
        model.train()
        order = rng.permutation(len(train_docs))
        records = []
        for start in range(0, len(order), train_config.batch_size):
            idx = order[start : start + train_config.batch_size]
            batch = batchify([train_docs[i] for i in idx], schema)
            try:
                breakdown = total_loss(batch, model, train_config)
            except TrainingDiverged as err:
                raise TrainingDiverged(
                    f"epoch {epoch}, step {steps}: {err}; last good checkpoint at {last_path}",
                    checkpoint=last_path,
                ) from err
            optimizer.zero_grad()
            breakdown.total_tensor.backward()
            optimizer.step()
            records.append(breakdown.to_record())
            steps += 1
            if train_config.max_steps is not None and steps >= train_config.max_steps:
                stop = True
                break

        epoch_record = {
            "epoch": epoch,
            "split": "train",
            **{k: float(np.mean([r[k] for r in records])) for k in records[0]},
        }
        _append_record(metrics_log, epoch_record)
        history.append(epoch_record)
        save_checkpoint(model, last_path, step=steps)

        last_epoch = stop or epoch == train_config.epochs - 1
        if (epoch + 1) % train_config.eval_every == 0 or last_epoch:
            report = evaluate_model(model, val_docs, gen_seed=train_config.seed * 1_000_003 + epoch)
            val_record = {
                "epoch": epoch,
                "split": "val",
                "s_reconst": report.s_reconst,
                "miou": report.miou,
                "s_gen": report.s_gen,
                "kl": validation_kl(model, val_docs),
            }
            _append_record(metrics_log, val_record)
            history.append(val_record)
            if report.s_gen > best_s_gen:
                best_s_gen, best_epoch = report.s_gen, epoch
                save_checkpoint(model, best_path, step=steps)
            logger.info(
                "epoch %d: loss %.4f, val s_reconst %.4f, miou %.4f, s_gen %.4f",
                epoch,
                epoch_record["total"],
                report.s_reconst,
                report.miou,
                report.s_gen,
            )
        if stop:
            break

    return TrainResult(
        best_checkpoint=best_path,
        last_checkpoint=last_path,
        metrics_log=metrics_log,
        history=history,
        best_epoch=best_epoch,
        best_s_gen=best_s_gen,
        steps=steps,
    )


def grid_search_lambda_kl(
    manifest: DatasetManifest,
    model_config: ModelConfig,
    train_config: TrainConfig,
    grid: Sequence[float],
    out_dir: Path | str,
) -> list[dict]:
    """Train one model per KL weight and tabulate the validation trade-off."""
    if not grid:
        raise ValueError("grid must be non-empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    val_docs = manifest.load_split("val")
    rows = []
    for lam in grid:
        run_dir = out_dir / f"lambda_{lam:g}"
        result = train(manifest, model_config, replace(train_config, lambda_kl=float(lam)), run_dir)
        model, _ = load_checkpoint(result.best_checkpoint, manifest.schema)
        report = evaluate_model(model, val_docs, gen_seed=train_config.seed)
        rows.append(
            {
                "lambda_kl": float(lam),
                "s_reconst": report.s_reconst,
                "miou": report.miou,
                "s_gen": report.s_gen,
                "kl": validation_kl(model, val_docs),
            }
        )
    table = out_dir / "gridsearch.tsv"
    with open(table, "w") as fh:
        fh.write("lambda_kl\ts_reconst\tmiou\ts_gen\tkl\n")
        for row in rows:
            fh.write(
                f"{row['lambda_kl']:g}\t{row['s_reconst']:.6f}\t{row['miou']:.6f}"
                f"\t{row['s_gen']:.6f}\t{row['kl']:.6f}\n"
            )
    return rows
