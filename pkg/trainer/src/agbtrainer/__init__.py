"""Density-map regression trainer.

Learns per-pixel biomass rasters from RGB images: a windowed-attention
encoder with four upsampling decoder blocks and a SoftPlus head,
trained with an L1 + sum-consistency loss (optionally plus a depth
head sharing the first three decoder blocks). Exchanges data with the
map-generation toolkit purely through files: manifest CSV, AGBD
rasters, PNGs and predictions CSV.
"""

from . import agbd
from .data import (
    DensityDataset,
    ManifestRow,
    MANIFEST_FIELDS,
    TrainingDataError,
    flip_horizontal,
    load_density,
    load_depth,
    load_rgb,
    read_manifest,
    resize_sum_preserving,
)
from .losses import DEFAULT_LOSS_CONFIG, LossConfig, density_loss
from .models import (
    BACKBONE_SCALES,
    DensityRegressor,
    MicroHead,
    ModelConfig,
    PATCH_SIZE,
    WINDOW_SIZE,
    build_model,
)
from .predict import PREDICTION_FIELDS, predict_manifest, predict_map
from .train import TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "agbd",
    "DensityDataset",
    "ManifestRow",
    "MANIFEST_FIELDS",
    "TrainingDataError",
    "flip_horizontal",
    "load_density",
    "load_depth",
    "load_rgb",
    "read_manifest",
    "resize_sum_preserving",
    "DEFAULT_LOSS_CONFIG",
    "LossConfig",
    "density_loss",
    "BACKBONE_SCALES",
    "DensityRegressor",
    "MicroHead",
    "ModelConfig",
    "PATCH_SIZE",
    "WINDOW_SIZE",
    "build_model",
    "PREDICTION_FIELDS",
    "predict_manifest",
    "predict_map",
    "TrainConfig",
    "load_checkpoint",
    "save_checkpoint",
    "train",
    "__version__",
]
