"""Training loss for density-map regression.

Per image: mean L1 between predicted and ground-truth maps, plus a
weighted absolute gap between their totals (keeping the predicted map's
integral honest), plus an optional weighted mean L1 between depth maps.
The batch loss is the mean of the per-image losses.
"""

import math
from dataclasses import dataclass

__all__ = ["LossConfig", "DEFAULT_LOSS_CONFIG", "density_loss"]


@dataclass(frozen=True)
class LossConfig:
    """Weights of the sum-consistency and depth terms."""

    alpha1: float = 1e-5
    alpha2: float = 1.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0; got {value!r}")


DEFAULT_LOSS_CONFIG = LossConfig()


def density_loss(pred, gt, pred_depth=None, gt_depth=None, cfg=DEFAULT_LOSS_CONFIG):
    """Batch loss over (B, 1, H, W) or (B, H, W) tensors.

    Depth tensors must be given both or neither; shapes must match their
    counterparts exactly.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {tuple(pred.shape)} != target {tuple(gt.shape)}")
    if (pred_depth is None) != (gt_depth is None):
        raise ValueError("give both pred_depth and gt_depth, or neither")
    batch = pred.shape[0]
    p = pred.reshape(batch, -1)
    g = gt.reshape(batch, -1)
    per_image = (p - g).abs().mean(dim=1) + cfg.alpha1 * (p.sum(dim=1) - g.sum(dim=1)).abs()
    if pred_depth is not None:
        if pred_depth.shape != gt_depth.shape:
            raise ValueError(
                f"depth shape {tuple(pred_depth.shape)} != target {tuple(gt_depth.shape)}"
            )
        dp = pred_depth.reshape(batch, -1)
        dg = gt_depth.reshape(batch, -1)
        per_image = per_image + cfg.alpha2 * (dp - dg).abs().mean(dim=1)
    return per_image.mean()
