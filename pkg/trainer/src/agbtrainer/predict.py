"""Inference: RGB images to AGBD density files and a predictions CSV.

Outputs are plain files the map-generation toolkit's CLI can consume
directly (`integrate`, `eval`). Predicted totals are the pixel sums of
the emitted maps; true totals come from the manifest.
"""

import csv
import logging
from pathlib import Path

import numpy as np
import torch

from . import agbd
from .data import TrainingDataError, load_rgb, read_manifest

__all__ = ["predict_map", "predict_manifest", "PREDICTION_FIELDS"]

log = logging.getLogger("agbtrainer")

PREDICTION_FIELDS = ("sample_id", "location_id", "predicted_agb", "true_agb")


def predict_map(model, rgb_path):
    """Run one image through the model; returns a float32 (S, S) array.

    Deterministic: the model is put in eval mode and run without
    gradients, so the same image yields byte-identical rasters.
    """
    model.eval()
    with torch.no_grad():
        rgb = load_rgb(rgb_path, model.config.input_size).unsqueeze(0)
        out = model(rgb)
        density = out[0] if isinstance(out, tuple) else out
    return np.ascontiguousarray(density.squeeze(0).squeeze(0).numpy(), dtype=np.float32)


def predict_manifest(model, manifest_path, out_dir, split="test"):
    """Predict every manifest row of a split; write AGBD files + CSV.

    Returns (agbd_paths, predictions_csv_path). Rows must carry RGB
    paths and cached true totals (total_agb), since the predictions CSV
    pairs each predicted total with the ground truth.
    """
    rows = read_manifest(manifest_path)
    if split is not None:
        rows = [r for r in rows if r.split == split]
    if not rows:
        raise TrainingDataError(f"{manifest_path}: no rows with split {split!r}")
    missing = [r.sample_id for r in rows if not r.rgb_path]
    if missing:
        raise TrainingDataError("missing RGB images for: " + ", ".join(missing))
    missing = [r.sample_id for r in rows if r.total_agb is None]
    if missing:
        raise TrainingDataError(
            "missing true totals (run map generation first) for: " + ", ".join(missing)
        )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    agbd_paths = []
    csv_path = out_dir / "predictions.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTION_FIELDS)
        for row in rows:
            density = predict_map(model, row.resolve(row.rgb_path))
            path = out_dir / f"{row.sample_id}.agbd"
            agbd.write(path, density)
            agbd_paths.append(path)
            predicted = float(np.sum(density, dtype=np.float64))
            writer.writerow([row.sample_id, "", repr(predicted), repr(row.total_agb)])
            log.info("%s: predicted %.3f vs true %.3f", row.sample_id, predicted, row.total_agb)
    return agbd_paths, csv_path
