"""End-to-end tests for the command-line interface and its exit codes."""

import numpy as np
import pytest
from PIL import Image

from agbmap import agbd
from agbmap.cli import main
from agbmap.dataset import SampleRecord, read_manifest, write_manifest
from agbmap.density import integrate
from agbmap.metrics import read_predictions


def run(argv):
    return main([str(a) for a in argv])


def run_usage_error(argv):
    """Usage problems abort inside argparse with SystemExit."""
    with pytest.raises(SystemExit) as err:
        run(argv)
    return err.value.code


def dir_snapshot(root):
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture()
def corpus(tmp_path):
    out = tmp_path / "corpus"
    assert run(["synth", out, "--n-scenes", 6, "--seed", 4]) == 0
    return out


# ---------------------------------------------------------------------------
# Exit codes


def test_usage_errors_exit_1(tmp_path):
    assert run_usage_error([]) == 1
    assert run_usage_error(["frobnicate"]) == 1
    assert run_usage_error(["split", "m.csv", "--train-fraction", "1.5"]) == 1
    assert run_usage_error(["split", "m.csv", "--seed", "-3"]) == 1
    assert run_usage_error(["synth", tmp_path, "--n-scenes", "0"]) == 1
    assert run_usage_error(["eval", "p.csv", "--prune", "1.0"]) == 1
    assert run_usage_error(["gen-maps", "m.csv", tmp_path, "--workers", "0"]) == 1


def test_data_errors_exit_2(tmp_path, capsys):
    assert run(["integrate", tmp_path / "missing.agbd"]) == 2
    bad = tmp_path / "bad.agbd"
    bad.write_bytes(b"NOPE")
    assert run(["integrate", bad]) == 2
    err = capsys.readouterr().err
    assert "bad.agbd" in err
    assert "offset" in err


def test_bad_workers_env_exits_1(tmp_path, corpus, monkeypatch):
    monkeypatch.setenv("AGBMAP_WORKERS", "zero")
    assert run(["gen-maps", corpus / "manifest.csv", tmp_path / "out"]) == 1
    monkeypatch.setenv("AGBMAP_WORKERS", "2")
    assert run(["gen-maps", corpus / "manifest.csv", tmp_path / "out"]) == 0


# ---------------------------------------------------------------------------
# synth


def test_synth_writes_corpus_and_is_idempotent(tmp_path):
    out = tmp_path / "c"
    assert run(["synth", out, "--n-scenes", 3, "--seed", 9]) == 0
    first = dir_snapshot(out)
    assert sum(name.endswith(".meta.txt") for name in first) == 3
    assert "manifest.csv" in first
    assert run(["synth", out, "--n-scenes", 3, "--seed", 9]) == 0
    assert dir_snapshot(out) == first


def test_synth_seed_changes_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(["synth", a, "--n-scenes", 2, "--seed", 1])
    run(["synth", b, "--n-scenes", 2, "--seed", 2])
    assert dir_snapshot(a) != dir_snapshot(b)


# ---------------------------------------------------------------------------
# gen-maps


def test_gen_maps_writes_maps_and_totals(corpus, tmp_path):
    out = tmp_path / "maps"
    assert run(["gen-maps", corpus / "manifest.csv", out]) == 0
    rows = read_manifest(out / "manifest.csv")
    assert len(rows) == 6
    for row in rows:
        assert row.density_map_path
        assert row.total_agb is not None
        stored = agbd.read(out / row.density_map_path)
        assert integrate(stored) == pytest.approx(row.total_agb, rel=1e-6)
        # the rewritten relative paths stay valid from the new manifest dir
        assert (out / row.metadata_path).exists()
        assert (out / row.instance_map_path).exists()


def test_gen_maps_is_idempotent_and_worker_invariant(corpus, tmp_path):
    outs = [tmp_path / n for n in ("m1", "m2", "m8")]
    assert run(["gen-maps", corpus / "manifest.csv", outs[0], "--workers", 1]) == 0
    assert run(["gen-maps", corpus / "manifest.csv", outs[1], "--workers", 1]) == 0
    assert run(["gen-maps", corpus / "manifest.csv", outs[2], "--workers", 8]) == 0
    base = {k: v for k, v in dir_snapshot(outs[0]).items()}
    assert dir_snapshot(outs[1]) == base
    assert dir_snapshot(outs[2]) == base


def test_gen_maps_drops_over_threshold_samples(corpus, tmp_path, capsys):
    out = tmp_path / "maps"
    assert run(["gen-maps", corpus / "manifest.csv", out, "--max-total-agb", "0.0"]) == 0
    err = capsys.readouterr().err
    assert "dropped" in err
    rows = read_manifest(out / "manifest.csv")
    for row in rows:
        assert row.density_map_path == ""
        assert row.total_agb is not None  # measured total is recorded
    assert not list(out.glob("*.agbd"))


def test_gen_maps_drops_degenerate_scene(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert run(["synth", corpus, "--n-scenes", 2, "--seed", 4]) == 0
    # rewrite one scene's metadata so every tree sits at the same spot
    meta = corpus / "scene_0000.meta.txt"
    lines = []
    for line in meta.read_text().splitlines():
        if line.startswith("tree "):
            head = line.split(" ground_x_m=")[0]
            line = f"{head} ground_x_m=5.0 ground_y_m=5.0"
        lines.append(line)
    meta.write_text("\n".join(lines) + "\n")

    out = tmp_path / "maps"
    assert run(["gen-maps", corpus / "manifest.csv", out]) == 0
    err = capsys.readouterr().err
    assert "dropped scene_0000" in err
    rows = {r.sample_id: r for r in read_manifest(out / "manifest.csv")}
    assert rows["scene_0000"].density_map_path == ""
    assert rows["scene_0000"].total_agb is None
    assert rows["scene_0001"].density_map_path  # the rest proceeds


def test_gen_maps_reports_unreadable_files_but_preserves_progress(
    corpus, tmp_path, capsys
):
    (corpus / "scene_0001.meta.txt").unlink()
    out = tmp_path / "maps"
    assert run(["gen-maps", corpus / "manifest.csv", out]) == 2
    err = capsys.readouterr().err
    assert "scene_0001" in err
    rows = {r.sample_id: r for r in read_manifest(out / "manifest.csv")}
    assert rows["scene_0001"].density_map_path == ""
    assert rows["scene_0000"].density_map_path  # others still completed
    assert (out / rows["scene_0000"].density_map_path).exists()


def test_gen_maps_rejects_empty_manifest(tmp_path):
    manifest = tmp_path / "m.csv"
    write_manifest(manifest, [])
    assert run(["gen-maps", manifest, tmp_path / "out"]) == 2


def test_gen_maps_rejects_duplicate_ids(tmp_path):
    manifest = tmp_path / "m.csv"
    rows = [SampleRecord(sample_id="a"), SampleRecord(sample_id="a")]
    write_manifest(manifest, rows)
    assert run(["gen-maps", manifest, tmp_path / "out"]) == 2


# ---------------------------------------------------------------------------
# integrate


def test_integrate_prints_exact_totals(tmp_path, capsys):
    zero = tmp_path / "zero.agbd"
    agbd.write(zero, np.zeros((4, 4)))
    uniform = tmp_path / "uniform.agbd"
    agbd.write(uniform, np.full((10, 10), 0.5))
    assert run(["integrate", zero, uniform]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == f"{zero},0.0"
    assert out[1] == f"{uniform},50.0"


def test_integrate_matches_in_process_value(corpus, tmp_path, capsys):
    out = tmp_path / "maps"
    run(["gen-maps", corpus / "manifest.csv", out])
    capsys.readouterr()
    path = next(out.glob("*.agbd"))
    assert run(["integrate", path]) == 0
    printed = capsys.readouterr().out.strip()
    name, value = printed.rsplit(",", 1)
    assert name == str(path)
    assert float(value) == integrate(agbd.read(path))


# ---------------------------------------------------------------------------
# split / baseline / eval


def make_manifest(tmp_path, totals):
    rows = [
        SampleRecord(sample_id=f"s{i}", total_agb=total)
        for i, total in enumerate(totals)
    ]
    manifest = tmp_path / "manifest.csv"
    write_manifest(manifest, rows)
    return manifest


def test_split_assigns_labels(tmp_path):
    manifest = make_manifest(tmp_path, [float(i) for i in range(10)])
    assert run(["split", manifest, "--train-fraction", "0.8", "--seed", "0"]) == 0
    rows = read_manifest(manifest)
    labels = [r.split for r in rows]
    assert labels.count("train") == 8
    assert labels.count("test") == 2

    out2 = tmp_path / "again.csv"
    assert run(["split", manifest, "--train-fraction", "0.8", "--seed", "0", "-o", out2]) == 0
    assert [r.split for r in read_manifest(out2)] == labels


def test_baseline_predicts_training_median(tmp_path, capsys):
    manifest = make_manifest(tmp_path, [1.0, 5.0, 9.0, 7.0, 2.0])
    rows = read_manifest(manifest)
    for r, label in zip(rows, ["train", "train", "train", "test", "test"]):
        r.split = label
    write_manifest(manifest, rows)

    preds_path = tmp_path / "preds.csv"
    assert run(["baseline", manifest, "-o", preds_path]) == 0
    pairs = read_predictions(preds_path)
    assert [p.sample_id for p in pairs] == ["s3", "s4"]
    assert all(p.predicted_agb == 5.0 for p in pairs)
    assert [p.true_agb for p in pairs] == [7.0, 2.0]

    # default output is stdout
    capsys.readouterr()
    assert run(["baseline", manifest]) == 0
    out = capsys.readouterr().out
    assert out.startswith("sample_id,location_id,predicted_agb,true_agb")
    assert "s3,,5.0,7.0" in out


def test_baseline_requires_train_rows(tmp_path):
    manifest = make_manifest(tmp_path, [1.0, 2.0])
    assert run(["baseline", manifest]) == 2


def test_baseline_requires_totals(tmp_path):
    manifest = tmp_path / "m.csv"
    rows = [SampleRecord(sample_id="a", split="train"), SampleRecord(sample_id="b", split="test")]
    write_manifest(manifest, rows)
    assert run(["baseline", manifest]) == 2


def test_eval_prints_statistics_and_writes_csv(tmp_path, capsys):
    preds = tmp_path / "p.csv"
    preds.write_text(
        "sample_id,location_id,predicted_agb,true_agb\n"
        "a,,11.0,10.0\n"
        "b,,22.0,20.0\n"
        "c,,39.0,30.0\n"
        "d,,43.0,40.0\n"
        "e,,52.0,50.0\n"
    )
    report_csv = tmp_path / "report.csv"
    assert run(["eval", preds, "--spearman", "--prune", "0.2", "--csv-out", report_csv]) == 0
    out = capsys.readouterr().out
    # errors are {1, 2, 9, 3, 2}
    assert "3.4000" in out  # mean
    assert "2.0000" in out  # median
    text = report_csv.read_text()
    assert text.startswith("metric,value\n")
    assert "mean_abs_err,3.4" in text
    assert "spearman_rho,1.0" in text
    assert "pruned_spearman_rho@0.2,1.0" in text


def test_eval_perfect_predictions_exit_0(tmp_path, capsys):
    preds = tmp_path / "p.csv"
    preds.write_text(
        "sample_id,location_id,predicted_agb,true_agb\n"
        "a,,10.0,10.0\n"
        "b,,10.0,10.0\n"
    )
    assert run(["eval", preds, "--spearman"]) == 0
    out = capsys.readouterr().out
    assert "0.0000" in out
    assert "undefined" in out


def test_eval_per_id(tmp_path, capsys):
    preds = tmp_path / "p.csv"
    preds.write_text(
        "sample_id,location_id,predicted_agb,true_agb\n"
        "a,p1,12.0,10.0\n"
        "b,p1,6.0,10.0\n"
        "c,p2,11.0,10.0\n"
    )
    assert run(["eval", preds, "--per-id"]) == 0
    out = capsys.readouterr().out
    assert "Per-ID" in out
    assert "2.0000" in out  # mean over per-id means {3, 1}


def test_eval_malformed_csv_exits_2(tmp_path, capsys):
    preds = tmp_path / "p.csv"
    preds.write_text("sample_id,location_id,predicted_agb,true_agb\na,,x,1.0\n")
    assert run(["eval", preds]) == 2
    assert "line 2" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# visualize


def test_visualize_writes_png(tmp_path):
    dmap = np.zeros((8, 6))
    dmap[2, 3] = 1.0
    path = tmp_path / "m.agbd"
    agbd.write(path, dmap)
    out = tmp_path / "viz.png"
    assert run(["visualize", path, out]) == 0
    img = np.asarray(Image.open(out))
    assert img.shape == (8, 6, 3)
    assert tuple(img[2, 3]) == (255, 0, 0)
    assert tuple(img[0, 0]) == (0, 0, 255)

    gray = tmp_path / "gray.png"
    assert run(["visualize", path, gray, "--colormap", "grayscale", "--gamma", "1.0"]) == 0
    img = np.asarray(Image.open(gray))
    assert tuple(img[2, 3]) == (255, 255, 255)
    assert tuple(img[0, 0]) == (0, 0, 0)


def test_visualize_rejects_bad_input(tmp_path):
    bad = tmp_path / "bad.agbd"
    bad.write_bytes(b"AGBDxxxx")
    assert run(["visualize", bad, tmp_path / "o.png"]) == 2
