"""Command line entry point for the whole pipeline.

Configuration precedence for every subcommand is defaults, then the
``--config`` JSON file, then repeated ``--set section.key=value`` overrides,
then explicit flags. The fully resolved configuration is written to
``resolved_config.json`` in the output directory so any run can be replayed.
Unset ``--out`` directories land under ``$DOCVAE_OUTPUT_ROOT`` (default
``docvae-out``).
"""
from __future__ import annotations

import dataclasses
import json
import os
import sys
from pathlib import Path

import click

from .data import (
    GeneratorConfig,
    LoadError,
    build_feature_index,
    generate_synthetic,
    load_dataset,
    read_documents,
    write_documents,
)
from .document import DocumentSchema, validate
from .metrics import (
    dataset_layout_miou,
    generation_score,
    reconstruction_score,
)
from .model import ModelConfig, default_config_for, load_checkpoint
from .render import RenderOptions, default_palette, render_strip, render_svg
from .training import (
    DEFAULT_GRIDS,
    TrainConfig,
    TrainingDiverged,
    evaluate_model,
    grid_search_lambda_kl,
    train,
)


def _out_dir(out: str | None, command: str) -> Path:
    if out:
        return Path(out)
    root = os.environ.get("DOCVAE_OUTPUT_ROOT", "docvae-out")
    return Path(root) / command


def _parse_set(values: tuple[str, ...]) -> dict[str, dict]:
    overrides: dict[str, dict] = {}
    for item in values:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise click.UsageError(f"override {item!r} must look like section.key=value")
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        overrides.setdefault(section, {})[key] = value
    return overrides


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise click.ClickException(f"cannot read config file {path}: {err}")
    if not isinstance(data, dict):
        raise click.ClickException(f"config file {path} must hold a JSON object")
    return data


def _build(cls, section_name: str, file_config: dict, overrides: dict, flags: dict | None = None):
    """Merge config sources for one dataclass, rejecting unknown keys."""
    merged: dict = {}
    merged.update(file_config.get(section_name, {}))
    merged.update(overrides.get(section_name, {}))
    if flags:
        merged.update({k: v for k, v in flags.items() if v is not None})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(merged) - known
    if unknown:
        raise click.UsageError(f"unknown {section_name} keys: {sorted(unknown)}")
    try:
        return cls(**merged)
    except (TypeError, ValueError) as err:
        raise click.UsageError(f"bad {section_name} config: {err}")


def _check_unknown_sections(file_config: dict, overrides: dict, allowed: set[str]) -> None:
    for source in (file_config, overrides):
        unknown = set(source) - allowed
        if unknown:
            raise click.UsageError(f"unknown config sections: {sorted(unknown)}")


def _write_resolved(out_dir: Path, resolved: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")


def _echo_report(name: str, s_reconst: float, miou: float, s_gen: float, fmt: str) -> None:
    # report files keep raw values; the printed percentages clamp to [0, 100]
    shown = [100 * min(max(v, 0.0), 1.0) for v in (s_reconst, miou, s_gen)]
    if fmt == "tsv":
        click.echo("model\ts_reconst\tmiou\ts_gen")
        click.echo(f"{name}\t{shown[0]:.1f}\t{shown[1]:.1f}\t{shown[2]:.1f}")
    else:
        click.echo(f"{'model':<24}{'S_reconst':>12}{'mIoU':>12}{'S_gen':>12}")
        click.echo(f"{name:<24}{shown[0]:>12.1f}{shown[1]:>12.1f}{shown[2]:>12.1f}")


@click.group()
def main():
    """Generative modeling pipeline for vector graphic documents."""


@main.group()
def dataset():
    """Dataset commands."""


@dataset.command("gen")
@click.option("--family", type=click.Choice(["crello-like", "rico-like"]), default=None)
@click.option("--n", "n_documents", type=int, default=None, help="Total documents across splits.")
@click.option("--feature-dim", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--set", "set_values", multiple=True, help="Override as generator.key=value.")
def dataset_gen(family, n_documents, feature_dim, seed, out, config_path, set_values):
    """Generate a synthetic dataset with train/val/test splits."""
    file_config = _load_config_file(config_path)
    overrides = _parse_set(set_values)
    _check_unknown_sections(file_config, overrides, {"generator"})
    flags = {"family": family, "n_documents": n_documents, "feature_dim": feature_dim}
    gen_config = _build(GeneratorConfig, "generator", file_config, overrides, flags)
    out_dir = _out_dir(out, "dataset")
    try:
        manifest = generate_synthetic(gen_config, seed=seed, out_dir=out_dir)
    except ValueError as err:
        raise click.ClickException(str(err))
    _write_resolved(out_dir, {"command": "dataset gen", "seed": seed, "generator": dataclasses.asdict(gen_config)})
    click.echo(f"wrote {sum(manifest.counts.values())} documents to {out_dir} "
               f"(splits: {json.dumps(manifest.counts)})")


def _model_and_train_configs(schema: DocumentSchema, file_config, overrides, seed, variant):
    flags = {"variant": variant}
    model_section = dict(file_config.get("model", {}))
    model_section.update(overrides.get("model", {}))
    model_section.update({k: v for k, v in flags.items() if v is not None})
    known = {f.name for f in dataclasses.fields(ModelConfig)}
    unknown = set(model_section) - known
    if unknown:
        raise click.UsageError(f"unknown model keys: {sorted(unknown)}")
    try:
        model_config = default_config_for(schema, **model_section)
    except (TypeError, ValueError) as err:
        raise click.UsageError(f"bad model config: {err}")
    train_flags = {"seed": seed}
    train_config = _build(TrainConfig, "train", file_config, overrides, train_flags)
    return model_config, train_config


@main.command("train")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True, help="Path to manifest.json.")
@click.option("--variant", type=click.Choice(["oneshot-transformer", "autoreg-transformer",
                                              "oneshot-lstm", "autoreg-lstm"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--set", "set_values", multiple=True, help="Override as model.key=value or train.key=value.")
def train_cmd(data_path, variant, seed, out, config_path, set_values):
    """Train a model on a dataset manifest."""
    file_config = _load_config_file(config_path)
    overrides = _parse_set(set_values)
    _check_unknown_sections(file_config, overrides, {"model", "train"})
    try:
        manifest = load_dataset(data_path)
    except LoadError as err:
        raise click.ClickException(str(err))
    model_config, train_config = _model_and_train_configs(manifest.schema, file_config, overrides, seed, variant)
    out_dir = _out_dir(out, "train")
    _write_resolved(out_dir, {
        "command": "train",
        "data": str(data_path),
        "model": model_config.to_dict(),
        "train": train_config.to_dict(),
    })
    try:
        result = train(manifest, model_config, train_config, out_dir)
    except TrainingDiverged as err:
        raise click.ClickException(str(err))
    click.echo(f"trained {result.steps} steps; best epoch {result.best_epoch} "
               f"(val S_gen {100 * result.best_s_gen:.1f}); checkpoints in {out_dir}")


@main.command("eval")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test", show_default=True)
@click.option("--checkpoint", type=click.Path(exists=True), default=None)
@click.option("--reconstructions", type=click.Path(exists=True), default=None,
              help="Score a precomputed reconstruction file instead of a checkpoint.")
@click.option("--gen-seed", type=int, default=0, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["text", "tsv"]), default="text", show_default=True)
@click.option("--out", type=click.Path(), default=None)
def eval_cmd(data_path, split, checkpoint, reconstructions, gen_seed, fmt, out):
    """Score reconstruction and generation metrics on a split."""
    if (checkpoint is None) == (reconstructions is None):
        raise click.UsageError("pass exactly one of --checkpoint or --reconstructions")
    try:
        manifest = load_dataset(data_path)
        docs = manifest.load_split(split)
    except LoadError as err:
        raise click.ClickException(str(err))
    out_dir = _out_dir(out, "eval")
    if checkpoint is not None:
        try:
            model, _ = load_checkpoint(checkpoint, manifest.schema)
        except ValueError as err:
            raise click.ClickException(str(err))
        report = evaluate_model(model, docs, gen_seed=gen_seed)
        name = model.config.variant
        payload = report.to_dict()
    else:
        try:
            recon = [doc for _, doc in read_documents(reconstructions, manifest.schema)]
            s_reconst = reconstruction_score(docs, recon, manifest.schema)
            miou = dataset_layout_miou(docs, recon, manifest.schema)
            s_gen = generation_score(docs, recon, manifest.schema)
        except (LoadError, ValueError) as err:
            raise click.ClickException(str(err))
        name = "reconstructions"
        payload = {"s_reconst": s_reconst, "miou": miou, "s_gen": s_gen}
    _write_resolved(out_dir, {
        "command": "eval",
        "data": str(data_path),
        "split": split,
        "checkpoint": str(checkpoint) if checkpoint else None,
        "reconstructions": str(reconstructions) if reconstructions else None,
        "gen_seed": gen_seed,
    })
    (out_dir / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
    _echo_report(name, payload["s_reconst"], payload["miou"], payload["s_gen"], fmt)


@main.command("generate")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--n", type=int, default=16, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--render", "do_render", is_flag=True, help="Also write one colormap SVG per document.")
@click.option("--out", type=click.Path(), default=None)
def generate_cmd(checkpoint, n, seed, do_render, out):
    """Decode prior samples into documents."""
    try:
        model, _ = load_checkpoint(checkpoint)
    except ValueError as err:
        raise click.ClickException(str(err))
    docs = model.generate(n, seed=seed)
    bad = [i for i, d in enumerate(docs) if not validate(d, model.schema).ok]
    if bad:
        raise click.ClickException(f"generated documents failed validation at indices {bad[:5]}")
    out_dir = _out_dir(out, "generate")
    out_dir.mkdir(parents=True, exist_ok=True)
    write_documents(out_dir / "generated.jsonl", [(f"gen-{i:06d}", d) for i, d in enumerate(docs)])
    if do_render:
        palette = default_palette(model.schema)
        for i, doc in enumerate(docs):
            (out_dir / f"gen-{i:06d}.colormap.svg").write_text(render_svg(doc, model.schema, palette))
    _write_resolved(out_dir, {"command": "generate", "checkpoint": str(checkpoint), "n": n, "seed": seed})
    click.echo(f"wrote {n} documents to {out_dir / 'generated.jsonl'}")


@main.command("interpolate")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test", show_default=True)
@click.option("--index-a", type=int, default=0, show_default=True)
@click.option("--index-b", type=int, default=1, show_default=True)
@click.option("--steps", type=int, default=7, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def interpolate_cmd(checkpoint, data_path, split, index_a, index_b, steps, out):
    """Decode a latent interpolation between two documents into an SVG strip."""
    try:
        manifest = load_dataset(data_path)
        docs = manifest.load_split(split)
        model, _ = load_checkpoint(checkpoint, manifest.schema)
    except (LoadError, ValueError) as err:
        raise click.ClickException(str(err))
    if not (0 <= index_a < len(docs)) or not (0 <= index_b < len(docs)):
        raise click.UsageError(f"indices must be within the {split} split (size {len(docs)})")
    try:
        path_docs = model.interpolate(docs[index_a], docs[index_b], steps)
    except ValueError as err:
        raise click.ClickException(str(err))
    out_dir = _out_dir(out, "interpolate")
    out_dir.mkdir(parents=True, exist_ok=True)
    strip = render_strip(path_docs, model.schema, default_palette(model.schema))
    strip_path = out_dir / f"interpolation-{index_a}-{index_b}.colormap.svg"
    strip_path.write_text(strip)
    write_documents(out_dir / "interpolation.jsonl", [(f"step-{i}", d) for i, d in enumerate(path_docs)])
    _write_resolved(out_dir, {
        "command": "interpolate", "checkpoint": str(checkpoint), "data": str(data_path),
        "split": split, "index_a": index_a, "index_b": index_b, "steps": steps,
    })
    click.echo(f"wrote {strip_path}")


@main.command("render")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test", show_default=True)
@click.option("--index", type=int, default=0, show_default=True)
@click.option("--mode", type=click.Choice(["colormap", "textured"]), default="colormap", show_default=True)
@click.option("--canvas-px", type=int, default=256, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def render_cmd(data_path, split, index, mode, canvas_px, out):
    """Render one dataset document as SVG."""
    try:
        manifest = load_dataset(data_path)
        docs = manifest.load_split(split)
    except LoadError as err:
        raise click.ClickException(str(err))
    if not (0 <= index < len(docs)):
        raise click.UsageError(f"--index must be within the {split} split (size {len(docs)})")
    feature_index = None
    if mode == "textured":
        feature_index = build_feature_index(manifest.load_split_with_ids("train"), manifest.schema)
    options = RenderOptions(mode=mode, canvas_px=canvas_px)
    try:
        svg = render_svg(docs[index], manifest.schema, default_palette(manifest.schema), options, feature_index)
    except ValueError as err:
        raise click.ClickException(str(err))
    out_dir = _out_dir(out, "render")
    out_dir.mkdir(parents=True, exist_ok=True)
    svg_path = out_dir / f"{split}-{index:06d}.{mode}.svg"
    svg_path.write_text(svg)
    _write_resolved(out_dir, {
        "command": "render", "data": str(data_path), "split": split,
        "index": index, "mode": mode, "canvas_px": canvas_px,
    })
    click.echo(f"wrote {svg_path}")


@main.command("gridsearch")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--grid", type=str, default=None,
              help="Comma-separated KL weights; defaults to the family grid.")
@click.option("--variant", type=click.Choice(["oneshot-transformer", "autoreg-transformer",
                                              "oneshot-lstm", "autoreg-lstm"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--set", "set_values", multiple=True)
def gridsearch_cmd(data_path, grid, variant, seed, out, config_path, set_values):
    """Train one model per KL weight and tabulate the trade-off."""
    file_config = _load_config_file(config_path)
    overrides = _parse_set(set_values)
    _check_unknown_sections(file_config, overrides, {"model", "train"})
    try:
        manifest = load_dataset(data_path)
    except LoadError as err:
        raise click.ClickException(str(err))
    if grid:
        try:
            grid_values = [float(v) for v in grid.split(",") if v.strip()]
        except ValueError:
            raise click.UsageError(f"--grid must be comma-separated numbers, got {grid!r}")
    else:
        grid_values = list(DEFAULT_GRIDS[manifest.family])
    model_config, train_config = _model_and_train_configs(manifest.schema, file_config, overrides, seed, variant)
    out_dir = _out_dir(out, "gridsearch")
    _write_resolved(out_dir, {
        "command": "gridsearch", "data": str(data_path), "grid": grid_values,
        "model": model_config.to_dict(), "train": train_config.to_dict(),
    })
    try:
        rows = grid_search_lambda_kl(manifest, model_config, train_config, grid_values, out_dir)
    except TrainingDiverged as err:
        raise click.ClickException(str(err))
    click.echo("lambda_kl\ts_reconst\tmiou\ts_gen\tkl")
    for row in rows:
        click.echo(f"{row['lambda_kl']:g}\t{100 * row['s_reconst']:.1f}\t{100 * row['miou']:.1f}"
                   f"\t{100 * row['s_gen']:.1f}\t{row['kl']:.3f}")
    click.echo(f"table written to {out_dir / 'gridsearch.tsv'}")


if __name__ == "__main__":
    sys.exit(main())
