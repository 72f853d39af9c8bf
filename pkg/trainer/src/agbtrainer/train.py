"""Training loop, checkpointing and the loss curve.

Single-stream optimization (data loading may use worker processes): for
each minibatch, optionally flip images and targets horizontally, run
the model, apply the density loss, and take one Adam step. The per-step
minibatch losses form the returned curve.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from torch.utils.data import DataLoader

from .data import DensityDataset, flip_horizontal
from .losses import DEFAULT_LOSS_CONFIG, LossConfig, density_loss
from .models import DensityRegressor, ModelConfig

__all__ = ["TrainConfig", "train", "save_checkpoint", "load_checkpoint"]

log = logging.getLogger("agbtrainer")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization knobs; defaults favor the desk-scale Tiny backbone."""

    epochs: int = 40
    batch_size: int = 2
    learning_rate: float = 1e-3
    loss: LossConfig = field(default_factory=LossConfig)
    augment_flip: bool = True
    seed: int = 0
    num_workers: int = 0
    max_steps: int = None  # stop after this many optimizer steps if set

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1; got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1; got {self.batch_size}")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValueError(f"learning_rate must be > 0; got {self.learning_rate!r}")
        if self.num_workers < 0:
            raise ValueError(f"num_workers must be >= 0; got {self.num_workers}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1 when set; got {self.max_steps}")


def train(model, manifest_path, cfg=TrainConfig(), checkpoint_path=None):
    """Fit the model on a manifest's train split; returns the loss curve.

    Args:
        model: a DensityRegressor (its config decides input size / depth)
        manifest_path: manifest CSV with a "train" split and ground-truth
            density maps (and depth maps for a depth-head model)
        cfg: TrainConfig
        checkpoint_path: if set, the trained weights, configs and curve
            are serialized there

    Returns:
        list of per-step minibatch losses (floats), one per optimizer step.

    Raises:
        TrainingDataError: no train rows, or rows missing ground truth.
    """
    dataset = DensityDataset(
        manifest_path,
        size=model.config.input_size,
        split="train",
        need_depth=model.config.depth_head,
    )
    generator = torch.Generator().manual_seed(cfg.seed)
    loader = DataLoader(
        dataset,
        batch_size=cfg.batch_size,
        shuffle=True,
        generator=generator,
        num_workers=cfg.num_workers,
    )
    flip_rng = torch.Generator().manual_seed(cfg.seed + 1)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)

    curve = []
    model.train()
    done = False
    for epoch in range(cfg.epochs):
        for batch in loader:
            rgb, gt = batch["rgb"], batch["density"]
            gt_depth = batch.get("depth")
            if cfg.augment_flip and torch.rand((), generator=flip_rng) < 0.5:
                rgb, gt = flip_horizontal(rgb), flip_horizontal(gt)
                if gt_depth is not None:
                    gt_depth = flip_horizontal(gt_depth)

            if model.config.depth_head:
                density, depth = model(rgb)
                loss = density_loss(density, gt, depth, gt_depth, cfg=cfg.loss)
            else:
                loss = density_loss(model(rgb), gt, cfg=cfg.loss)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            curve.append(float(loss.detach()))

            if cfg.max_steps is not None and len(curve) >= cfg.max_steps:
                done = True
                break
        log.info("epoch %d/%d: loss %.6f", epoch + 1, cfg.epochs, curve[-1])
        if done:
            break

    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model, cfg, curve)
    return curve


def save_checkpoint(path, model, cfg=None, curve=()):
    """Serialize weights plus both configs and the loss curve."""
    payload = {
        "model_state": model.state_dict(),
        "model_config": asdict(model.config),
        "train_config": None if cfg is None else asdict(cfg),
        "loss_curve": list(curve),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    return path


def load_checkpoint(path):
    """Rebuild the model from a checkpoint; returns (model, loss_curve)."""
    payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    model = DensityRegressor(ModelConfig(**payload["model_config"]))
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model, list(payload.get("loss_curve", []))
