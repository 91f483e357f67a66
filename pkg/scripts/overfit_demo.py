#!/usr/bin/env python3
"""Overfit a small one-shot transformer on a handful of documents.

Sanity experiment: with a few dozen documents the model should reach near
perfect reconstruction from mean latent codes within a minute on CPU. Writes
the dataset, checkpoints, metrics log, and a reconstruction strip SVG
(original next to reconstruction for the first few training documents).
"""
import argparse
import time
from pathlib import Path

from docvae.data import GeneratorConfig, generate_synthetic
from docvae.metrics import dataset_layout_miou, reconstruction_score
from docvae.model import ModelConfig, load_checkpoint
from docvae.render import default_palette, render_strip
from docvae.training import TrainConfig, train


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("docvae-out/overfit-demo"))
    parser.add_argument("--n-documents", type=int, default=40)
    parser.add_argument("--feature-dim", type=int, default=32)
    parser.add_argument("--steps", type=int, default=1000)
    parser.add_argument("--hidden-dim", type=int, default=128)
    parser.add_argument("--latent-dim", type=int, default=128)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    data_config = GeneratorConfig(
        family="crello-like", n_documents=args.n_documents, feature_dim=args.feature_dim
    )
    manifest = generate_synthetic(data_config, seed=args.seed + 100, out_dir=args.out / "data")
    train_docs = manifest.load_split("train")
    print(f"training on {len(train_docs)} documents")

    model_config = ModelConfig(
        variant="oneshot-transformer",
        num_blocks=1,
        hidden_dim=args.hidden_dim,
        latent_dim=args.latent_dim,
        heads=4,
        dropout=0.0,
    )
    train_config = TrainConfig(
        lambda_kl=1.0,
        epochs=args.steps,
        batch_size=len(train_docs),
        seed=args.seed,
        eval_every=max(1, args.steps // 4),
        max_steps=args.steps,
    )
    start = time.time()
    result = train(manifest, model_config, train_config, args.out / "run")
    print(f"trained {result.steps} steps in {time.time() - start:.0f}s")

    model, _ = load_checkpoint(result.last_checkpoint, manifest.schema)
    recon = model.reconstruct(train_docs, mode="mean")
    s_reconst = reconstruction_score(train_docs, recon, manifest.schema)
    miou = dataset_layout_miou(train_docs, recon, manifest.schema)
    print(f"train S_reconst={100 * s_reconst:.1f}%  mIoU={100 * miou:.1f}%")

    palette = default_palette(manifest.schema)
    panels = []
    for original, reconstruction in list(zip(train_docs, recon))[:4]:
        panels.extend([original, reconstruction])
    strip_path = args.out / "reconstructions.colormap.svg"
    strip_path.write_text(render_strip(panels, manifest.schema, palette))
    print(f"wrote {strip_path}")


if __name__ == "__main__":
    main()
