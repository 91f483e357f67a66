"""Acceptance suite: one test per criterion, each printing a pass line.

Trained-model criteria share module-scoped fixtures so the expensive runs
happen once. All experiments are fully seeded, so results are reproducible
run to run on the same machine.
"""
import json
import math
import time

import numpy as np
import pytest
import torch
from click.testing import CliRunner

from docvae.cli import main as cli_main
from docvae.data import GeneratorConfig, batchify, generate_synthetic, sample_documents
from docvae.document import validate
from docvae.metrics import (
    dataset_layout_miou,
    generation_score,
    histogram_intersection,
    layout_miou,
    reconstruction_score,
    unigram_bleu,
)
from docvae.model import DocumentVAE, LatentDistribution, ModelConfig, load_checkpoint
from docvae.schemas import crello_like_schema
from docvae.training import (
    TrainConfig,
    evaluate_model,
    kl_term,
    total_loss,
    train,
    validation_kl,
)

from conftest import sample_micro_documents
from gradcheck import finite_difference_check
from oracles import bleu_oracle, histogram_intersection_oracle, miou_oracle

FEATURE_DIM = 32

ACCEPTANCE_MODEL = dict(
    variant="oneshot-transformer", num_blocks=1, hidden_dim=128, latent_dim=128, heads=4, dropout=0.0
)


def _passed(number, message):
    print(f"[criterion {number:2d}] PASS  {message}")


@pytest.fixture(scope="module")
def overfit_run(tmp_path_factory):
    """Criterion 6 setup: overfit a one-shot transformer on 32 documents."""
    root = tmp_path_factory.mktemp("overfit")
    config = GeneratorConfig(family="crello-like", n_documents=40, feature_dim=FEATURE_DIM)
    manifest = generate_synthetic(config, seed=101, out_dir=root / "data")
    model_config = ModelConfig(**ACCEPTANCE_MODEL)
    train_config = TrainConfig(
        lambda_kl=1.0, epochs=1000, batch_size=32, seed=0, eval_every=1000, max_steps=1000
    )
    start = time.time()
    result = train(manifest, model_config, train_config, root / "run")
    elapsed = time.time() - start
    model, _ = load_checkpoint(result.last_checkpoint, manifest.schema)
    return {"manifest": manifest, "model": model, "result": result, "elapsed": elapsed}


@pytest.fixture(scope="module")
def tradeoff_runs(tmp_path_factory):
    """Criteria 7 and 8 setup: three runs on one 2000-document dataset."""
    root = tmp_path_factory.mktemp("tradeoff")
    config = GeneratorConfig(family="crello-like", n_documents=2000, feature_dim=FEATURE_DIM)
    manifest = generate_synthetic(config, seed=202, out_dir=root / "data")
    val_docs = manifest.load_split("val")
    start = time.time()
    runs = {}
    for key, variant, lam in (
        ("oneshot_kl2", "oneshot-transformer", 2.0),
        ("oneshot_kl64", "oneshot-transformer", 64.0),
        ("autoreg_kl2", "autoreg-transformer", 2.0),
    ):
        model_config = ModelConfig(**{**ACCEPTANCE_MODEL, "variant": variant})
        train_config = TrainConfig(lambda_kl=lam, epochs=60, batch_size=64, seed=0, eval_every=60)
        result = train(manifest, model_config, train_config, root / key)
        model, _ = load_checkpoint(result.last_checkpoint, manifest.schema)
        runs[key] = {
            "report": evaluate_model(model, val_docs, gen_seed=3),
            "kl": validation_kl(model, val_docs),
        }
    runs["elapsed"] = time.time() - start
    return runs


def test_criterion_01_metric_oracle_equivalence(small_crello_schema):
    start = time.time()
    rng = np.random.default_rng(0)
    for _ in range(500):
        pred = [(int(a), int(b)) for a, b in rng.integers(0, 4, size=(rng.integers(0, 9), 2))]
        ref = [(int(a), int(b)) for a, b in rng.integers(0, 4, size=(rng.integers(1, 9), 2))]
        assert unigram_bleu(pred, ref) == bleu_oracle(pred, ref)

    docs = sample_documents(
        GeneratorConfig(family="crello-like", n_documents=1, feature_dim=8), seed=1, n=1000
    )
    for a, b in zip(docs[:500], docs[500:]):
        assert layout_miou(a, b, small_crello_schema) == miou_oracle(a, b, "type")

    rng = np.random.default_rng(2)
    checked = 0
    while checked < 500:
        bins = int(rng.integers(1, 40))
        h1 = [int(v) for v in rng.integers(0, 12, size=bins)]
        h2 = [int(v) for v in rng.integers(0, 12, size=bins)]
        if sum(h1) == 0 or sum(h2) == 0:
            continue
        assert histogram_intersection(h1, h2) == histogram_intersection_oracle(h1, h2)
        checked += 1

    elapsed = time.time() - start
    assert elapsed < 60.0
    _passed(1, f"BLEU, layout mIoU, histogram intersection match brute force on 500 cases each ({elapsed:.1f}s)")


def test_criterion_02_self_similarity():
    schema = crello_like_schema()
    docs = sample_documents(GeneratorConfig(family="crello-like", n_documents=1), seed=7, n=200)
    s_reconst = reconstruction_score(docs, docs, schema)
    miou = dataset_layout_miou(docs, docs, schema)
    s_gen = generation_score(docs, docs, schema)
    assert abs(s_reconst - 1.0) <= 1e-9
    assert abs(miou - 1.0) <= 1e-9
    assert abs(s_gen - 1.0) <= 1e-9
    _passed(2, f"self comparison on 200 documents: S_reconst={s_reconst!r}, mIoU={miou!r}, S_gen={s_gen!r}")


def test_criterion_03_kl_closed_form():
    f64 = torch.float64
    cases = [
        (torch.zeros(1, 4, dtype=f64), torch.ones(1, 4, dtype=f64), 0.0),
        (torch.ones(1, 1, dtype=f64), torch.ones(1, 1, dtype=f64), 0.5),
        (torch.zeros(1, 1, dtype=f64), torch.full((1, 1), math.exp(0.5), dtype=f64), (math.e - 2) / 2),
    ]
    for mu, sigma, expected in cases:
        dist = LatentDistribution(mu=mu, sigma=sigma)
        assert float(kl_term(dist)[0]) == pytest.approx(expected, abs=1e-9)
    _passed(3, "KL divergence matches 0, 0.5, and (e-2)/2 to 1e-9")


def test_criterion_04_gradient_correctness(micro_schema):
    torch.manual_seed(0)
    model = DocumentVAE(
        ModelConfig(variant="oneshot-transformer", num_blocks=1, hidden_dim=8, latent_dim=4,
                    heads=1, dropout=0.0),
        micro_schema,
    ).double()
    model.eval()
    batch = batchify(sample_micro_documents(seed=5, n=2), micro_schema)
    config = TrainConfig(lambda_kl=1.0, lambda_l2=1e-6, epochs=1)

    def loss_fn():
        return total_loss(batch, model, config, generator=torch.Generator().manual_seed(11)).total_tensor

    start = time.time()
    errors = finite_difference_check(model, loss_fn, eps=1e-5)
    elapsed = time.time() - start
    worst = max(errors.values())
    assert elapsed < 120.0
    assert worst <= 1e-3, {k: v for k, v in errors.items() if v > 1e-3}
    n_params = sum(p.numel() for p in model.parameters())
    _passed(4, f"autograd matches central differences on all {len(errors)} parameter groups "
               f"({n_params} scalars, worst rel err {worst:.2e}, {elapsed:.0f}s)")


def test_criterion_05_masking_invariance(small_crello_schema):
    torch.manual_seed(3)
    model = DocumentVAE(
        ModelConfig(variant="oneshot-transformer", num_blocks=1, hidden_dim=64, latent_dim=64,
                    heads=4, dropout=0.0),
        small_crello_schema,
    )
    model.eval()
    config = GeneratorConfig(family="crello-like", n_documents=1, feature_dim=8)
    docs = sample_documents(config, seed=9, n=100)
    with torch.no_grad():
        tight = model.encode(batchify(docs, small_crello_schema))
        for pad_to in (max(d.length for d in docs) + 3, small_crello_schema.max_length):
            padded = model.encode(batchify(docs, small_crello_schema, pad_to=pad_to))
            torch.testing.assert_close(tight.mu, padded.mu, rtol=1e-5, atol=1e-8)
            torch.testing.assert_close(tight.sigma, padded.sigma, rtol=1e-5, atol=1e-8)
    _passed(5, "encoder output invariant to padding tails on 100 documents at 1e-5 relative")


def test_criterion_06_overfit_reconstruction(overfit_run):
    manifest = overfit_run["manifest"]
    model = overfit_run["model"]
    train_docs = manifest.load_split("train")
    recon = model.reconstruct(train_docs, mode="mean")
    score = reconstruction_score(train_docs, recon, manifest.schema)
    assert overfit_run["result"].steps <= 3000
    assert overfit_run["elapsed"] <= 15 * 60
    assert score >= 0.95, score
    _passed(6, f"overfit S_reconst(train)={score:.4f} >= 0.95 after {overfit_run['result'].steps} steps "
               f"({overfit_run['elapsed']:.0f}s)")


def test_criterion_07_tradeoff_direction(tradeoff_runs):
    low, high = tradeoff_runs["oneshot_kl2"], tradeoff_runs["oneshot_kl64"]
    assert tradeoff_runs["elapsed"] <= 3600
    assert high["kl"] < low["kl"], (high["kl"], low["kl"])
    assert high["report"].s_reconst <= low["report"].s_reconst + 0.02
    _passed(7, f"validation kl {high['kl']:.3f} (kl weight 64) < {low['kl']:.3f} (kl weight 2); "
               f"S_reconst {high['report'].s_reconst:.4f} <= {low['report'].s_reconst:.4f} + 0.02 "
               f"({tradeoff_runs['elapsed']:.0f}s)")


def test_criterion_08_oneshot_vs_autoregressive(tradeoff_runs):
    oneshot = tradeoff_runs["oneshot_kl2"]["report"].miou
    autoreg = tradeoff_runs["autoreg_kl2"]["report"].miou
    assert oneshot >= autoreg - 0.02, (oneshot, autoreg)
    _passed(8, f"one-shot mIoU {oneshot:.4f} >= autoregressive mIoU {autoreg:.4f} - 0.02 at equal budget")


def test_criterion_09_generation_validity(overfit_run):
    manifest = overfit_run["manifest"]
    model = overfit_run["model"]
    generated = model.generate(1000, seed=11)
    for doc in generated:
        verdict = validate(doc, manifest.schema)
        assert verdict.ok, verdict.violations
    train_docs = manifest.load_split("train")
    max_length = manifest.schema.max_length
    train_hist = [0.0] * max_length
    for doc in train_docs:
        train_hist[doc.length - 1] += 1
    gen_hist = [0.0] * max_length
    for doc in generated:
        gen_hist[doc.length - 1] += 1
    overlap = histogram_intersection(train_hist, gen_hist)
    assert overlap >= 0.5, overlap
    distinct = len({doc.length for doc in generated[:100]})
    assert distinct >= 2
    _passed(9, f"1000 generated documents all valid; length histogram intersection {overlap:.3f} >= 0.5; "
               f"{distinct} distinct lengths in the first 100 samples")


def test_criterion_10_end_to_end_determinism(tmp_path):
    runner = CliRunner()
    reports = []
    for run in ("a", "b"):
        base = tmp_path / run
        result = runner.invoke(cli_main, [
            "dataset", "gen", "--family", "crello-like", "--n", "100",
            "--feature-dim", "8", "--seed", "5", "--out", str(base / "data"),
        ])
        assert result.exit_code == 0, result.output
        result = runner.invoke(cli_main, [
            "train", "--data", str(base / "data" / "manifest.json"), "--seed", "1",
            "--out", str(base / "run"),
            "--set", "model.hidden_dim=32", "--set", "model.latent_dim=16",
            "--set", "model.heads=2", "--set", "model.dropout=0.0",
            "--set", "train.epochs=5", "--set", "train.batch_size=32",
            "--set", "train.eval_every=5",
        ])
        assert result.exit_code == 0, result.output
        result = runner.invoke(cli_main, [
            "eval", "--data", str(base / "data" / "manifest.json"), "--split", "test",
            "--checkpoint", str(base / "run" / "best.pt"), "--out", str(base / "eval"),
        ])
        assert result.exit_code == 0, result.output
        reports.append((base / "eval" / "report.json").read_bytes())
    assert reports[0] == reports[1]
    summary = json.loads(reports[0])
    _passed(10, f"two seeded dataset+train+eval pipelines wrote byte-identical reports "
                f"(S_reconst={100 * summary['s_reconst']:.1f}%)")
