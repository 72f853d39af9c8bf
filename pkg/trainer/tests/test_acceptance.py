"""Acceptance gate for the trainer: one test per headline guarantee.

Each test prints a PASS line when its criterion holds:
  1. forward passes return finite, non-negative rasters at the configured
     resolution, for random and for all-zero inputs;
  2. the Tiny model overfits a 10-sample synthetic corpus (loss below 5%
     of its initial value within 500 steps, well under 10 CPU-minutes);
  3. analytic gradients of the two-parameter micro head match central
     finite differences to 1e-4 relative;
  4. predictions round-trip through the map CLI: emitted AGBD files
     integrate cleanly and the predictions CSV evaluates without error.

Everything the corpus tests need from the map package goes through its
command-line interface and on-disk formats; nothing is imported from it.
"""

import csv
import subprocess
import time

import numpy as np
import pytest
import torch

from agbtrainer import (
    LossConfig,
    MicroHead,
    ModelConfig,
    TrainConfig,
    build_model,
    density_loss,
    predict_manifest,
    train,
)


@pytest.fixture()
def announce(capfd):
    """Print a line that survives pytest's output capture."""

    def _announce(line):
        with capfd.disabled():
            print(line, flush=True)

    return _announce


def run_agbmap(*args):
    return subprocess.run(
        ["agbmap"] + [str(a) for a in args], capture_output=True, text=True
    )


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """Synthetic scenes plus ground-truth maps, built via the map CLI."""
    base = tmp_path_factory.mktemp("corpus")
    raw = base / "raw"
    maps = base / "maps"
    result = run_agbmap("synth", raw, "--n-scenes", 12, "--seed", 42)
    assert result.returncode == 0, result.stderr
    result = run_agbmap("gen-maps", raw / "manifest.csv", maps)
    assert result.returncode == 0, result.stderr
    with open(maps / "manifest.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 13
    assert all(row[5] for row in rows[1:]), "a scene lost its density map"
    return maps


def test_forward_contract_on_random_and_zero_inputs(announce):
    torch.manual_seed(0)
    model = build_model(ModelConfig(depth_head=True))
    model.eval()
    size = model.config.input_size
    batches = [torch.rand(2, 3, size, size), torch.zeros(1, 3, size, size)]
    with torch.no_grad():
        for x in batches:
            density, depth = model(x)
            for out in (density, depth):
                assert out.shape == (x.shape[0], 1, size, size)
                assert torch.isfinite(out).all()
                assert (out >= 0).all()
    announce(
        "PASS: forward passes return finite non-negative "
        f"{size}x{size} density and depth maps for random and zero inputs"
    )


def test_tiny_model_overfits_ten_samples(corpus, tmp_path, announce):
    with open(corpus / "manifest.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    for row in rows[1:11]:
        row[6] = "train"
    train_manifest = corpus / "overfit_manifest.csv"
    with open(train_manifest, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(rows[:11])

    torch.manual_seed(0)
    model = build_model(ModelConfig())
    cfg = TrainConfig(
        epochs=100,
        batch_size=2,
        learning_rate=2e-3,
        augment_flip=False,
        seed=0,
        max_steps=500,
    )
    started = time.perf_counter()
    curve = train(model, train_manifest, cfg)
    elapsed = time.perf_counter() - started

    assert len(curve) <= 500
    ratio = min(curve) / curve[0]
    assert ratio < 0.05
    assert elapsed < 600.0
    announce(
        f"PASS: Tiny overfits 10 samples, loss falls to {ratio:.2e} of its "
        f"initial value within {len(curve)} steps ({elapsed:.1f}s)"
    )


def test_micro_head_gradient_matches_central_differences(announce):
    torch.manual_seed(5)
    head = MicroHead()
    x = torch.randn(9, 11, dtype=torch.float64)
    # offset target keeps every |pred - gt| away from the L1 kink
    gt = (head(x).detach() + 0.3)[None]
    cfg = LossConfig(alpha1=1e-3, alpha2=1.0)

    def loss_value():
        return density_loss(head(x)[None], gt, cfg=cfg)

    head.zero_grad()
    loss_value().backward()

    step = 1e-6
    worst = 0.0
    for name, param in head.named_parameters():
        with torch.no_grad():
            param += step
            plus = float(loss_value())
            param -= 2 * step
            minus = float(loss_value())
            param += step
        numeric = (plus - minus) / (2 * step)
        analytic = float(param.grad)
        rel = abs(analytic - numeric) / max(abs(numeric), 1e-12)
        assert rel <= 1e-4, f"{name}: analytic {analytic} vs numeric {numeric}"
        worst = max(worst, rel)
    announce(
        f"PASS: micro-head gradients match central differences "
        f"(worst relative gap {worst:.2e} <= 1e-4)"
    )


def test_predictions_round_trip_through_map_cli(corpus, tmp_path, announce):
    manifest = corpus / "manifest.csv"
    result = run_agbmap("split", manifest, "--train-fraction", "0.75", "--seed", "1")
    assert result.returncode == 0, result.stderr

    torch.manual_seed(1)
    model = build_model(ModelConfig())
    agbd_paths, csv_path = predict_manifest(model, manifest, tmp_path / "preds")
    assert len(agbd_paths) == 3  # round(12 * 0.75) = 9 train, rest test

    # the map CLI integrates the emitted AGBD files...
    result = run_agbmap("integrate", *agbd_paths)
    assert result.returncode == 0, result.stderr
    integrated = {}
    for line in result.stdout.splitlines():
        path, value = line.rsplit(",", 1)
        integrated[path] = float(value)
    assert set(integrated) == {str(p) for p in agbd_paths}
    assert all(v > 0 and np.isfinite(v) for v in integrated.values())

    # ...and its totals agree with the predictions CSV
    with open(csv_path, newline="", encoding="utf-8") as fh:
        predictions = {r["sample_id"]: r for r in csv.DictReader(fh)}
    assert len(predictions) == 3
    for path in agbd_paths:
        predicted = float(predictions[path.stem]["predicted_agb"])
        np.testing.assert_allclose(integrated[str(path)], predicted, rtol=1e-9)

    # ...and the predictions CSV evaluates without error
    report = tmp_path / "report.csv"
    result = run_agbmap("eval", csv_path, "--spearman", "--csv-out", report)
    assert result.returncode == 0, result.stderr
    with open(report, newline="", encoding="utf-8") as fh:
        metrics = {row[0] for row in csv.reader(fh)}
    assert "mean_abs_err" in metrics
    announce(
        "PASS: predicted maps integrate and evaluate cleanly "
        "through the map CLI (3 test scenes, exit codes 0)"
    )
