"""Manifest-driven data loading for density-map training.

The trainer exchanges data with the map-generation toolkit purely
through files: the manifest CSV, AGBD density rasters, RGB PNGs and
16-bit depth PNGs. RGB images are bilinearly resized to the model input
size; ground-truth density maps are resized to the model output size
with a sum-preserving rescale so each image's total biomass is the same
number at every resolution.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from torch.utils.data import Dataset

from . import agbd

__all__ = [
    "TrainingDataError",
    "ManifestRow",
    "MANIFEST_FIELDS",
    "read_manifest",
    "load_rgb",
    "load_depth",
    "load_density",
    "resize_sum_preserving",
    "flip_horizontal",
    "DensityDataset",
]

MANIFEST_FIELDS = (
    "sample_id",
    "rgb_path",
    "instance_map_path",
    "metadata_path",
    "depth_path",
    "density_map_path",
    "split",
    "total_agb",
)


class TrainingDataError(RuntimeError):
    """The manifest or one of its referenced files cannot feed training."""


@dataclass(frozen=True)
class ManifestRow:
    """One manifest line; paths are as written, resolved against base_dir."""

    sample_id: str
    rgb_path: str
    instance_map_path: str
    metadata_path: str
    depth_path: str
    density_map_path: str
    split: str
    total_agb: float
    base_dir: Path

    def resolve(self, relative_path):
        path = Path(relative_path)
        return path if path.is_absolute() else self.base_dir / path


def read_manifest(path):
    """Read the manifest CSV into ManifestRows (header must match exactly)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_FIELDS:
            raise TrainingDataError(
                f"{path}: bad manifest header {reader.fieldnames!r},"
                f" expected {','.join(MANIFEST_FIELDS)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if any(v is None for v in row.values()):
                raise TrainingDataError(f"{path}: line {lineno}: wrong number of fields")
            total = row["total_agb"].strip()
            try:
                total_value = float(total) if total else None
            except ValueError:
                raise TrainingDataError(
                    f"{path}: line {lineno}: bad total_agb {total!r}"
                )
            rows.append(
                ManifestRow(
                    sample_id=row["sample_id"],
                    rgb_path=row["rgb_path"],
                    instance_map_path=row["instance_map_path"],
                    metadata_path=row["metadata_path"],
                    depth_path=row["depth_path"],
                    density_map_path=row["density_map_path"],
                    split=row["split"],
                    total_agb=total_value,
                    base_dir=path.parent,
                )
            )
    return rows


def load_rgb(path, size):
    """RGB PNG -> float32 tensor (3, size, size) in [0, 1]."""
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    tensor = torch.from_numpy(rgb).permute(2, 0, 1).unsqueeze(0)
    resized = F.interpolate(tensor, size=(size, size), mode="bilinear", align_corners=False)
    return resized.squeeze(0)


def load_depth(path, size):
    """16-bit depth PNG -> float32 tensor (1, size, size) in [0, 1]."""
    with Image.open(path) as img:
        depth = np.asarray(img, dtype=np.float32) / 65535.0
    tensor = torch.from_numpy(depth)[None, None]
    resized = F.interpolate(tensor, size=(size, size), mode="bilinear", align_corners=False)
    return resized.squeeze(0)


def resize_sum_preserving(density, size):
    """Resize a (1, H, W) density tensor to (1, size, size), keeping its sum.

    Bilinear resize followed by a multiplicative renormalization back to
    the original total; an all-zero map stays all-zero.
    """
    total = density.sum()
    resized = F.interpolate(
        density.unsqueeze(0), size=(size, size), mode="bilinear", align_corners=False
    ).squeeze(0)
    new_total = resized.sum()
    if float(new_total) == 0.0:
        return resized
    return resized * (total / new_total)


def load_density(path, size):
    """AGBD file -> float32 tensor (1, size, size) with the original sum."""
    values = torch.from_numpy(agbd.read(path))
    return resize_sum_preserving(values.unsqueeze(0), size)


def flip_horizontal(tensor):
    """Mirror the last (width) axis; a permutation, so sums are unchanged."""
    return torch.flip(tensor, dims=[-1])


class DensityDataset(Dataset):
    """Pairs of (RGB, ground-truth density [, depth]) from a manifest.

    Args:
        manifest_path: manifest CSV written by the map-generation toolkit
        size: model input/output resolution (images and maps are resized)
        split: keep only rows with this split label; None keeps all rows
        need_depth: also load depth maps (required for a depth-head model)

    Raises:
        TrainingDataError: no usable rows, or a kept row is missing its
            ground-truth density map (or depth map when need_depth).
    """

    def __init__(self, manifest_path, size, split="train", need_depth=False):
        rows = read_manifest(manifest_path)
        if split is not None:
            rows = [r for r in rows if r.split == split]
        if not rows:
            raise TrainingDataError(
                f"{manifest_path}: no rows with split {split!r}"
            )
        missing = [r.sample_id for r in rows if not r.density_map_path]
        if missing:
            raise TrainingDataError(
                "missing ground-truth density maps for: " + ", ".join(missing)
            )
        if need_depth:
            missing = [r.sample_id for r in rows if not r.depth_path]
            if missing:
                raise TrainingDataError(
                    "missing depth maps for: " + ", ".join(missing)
                )
        self.rows = rows
        self.size = int(size)
        self.need_depth = bool(need_depth)

    @property
    def sample_ids(self):
        return [r.sample_id for r in self.rows]

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, index):
        row = self.rows[index]
        item = {
            "rgb": load_rgb(row.resolve(row.rgb_path), self.size),
            "density": load_density(row.resolve(row.density_map_path), self.size),
        }
        if self.need_depth:
            item["depth"] = load_depth(row.resolve(row.depth_path), self.size)
        return item
