"""Windowed-attention regression network for density rasters.

A hierarchical encoder (4x4 patch embedding, multi-head self-attention
inside non-overlapping 7x7 windows, 2x2 patch merging between stages)
feeds a stack of four upsampling decoder blocks with encoder skip
connections. A convolution + SoftPlus head produces a strictly
non-negative raster, bilinearly resized to the input resolution. An
optional depth head shares the first three decoder blocks and owns its
own final block and output convolution.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

__all__ = [
    "PATCH_SIZE",
    "WINDOW_SIZE",
    "BACKBONE_SCALES",
    "ModelConfig",
    "DensityRegressor",
    "MicroHead",
    "build_model",
]

PATCH_SIZE = 4
WINDOW_SIZE = 7
# patching /4, three 2x merges, and 7x7 windows at every stage
_RESOLUTION_STEP = PATCH_SIZE * 8 * WINDOW_SIZE  # 224

_SCALE_PRESETS = {
    "tiny": dict(embed_dim=24, depths=(1, 1, 1, 1), heads=(1, 2, 4, 8), mlp_ratio=2.0),
    "paper-large": dict(
        embed_dim=192, depths=(2, 2, 18, 2), heads=(6, 12, 24, 48), mlp_ratio=4.0
    ),
}
BACKBONE_SCALES = tuple(_SCALE_PRESETS)


@dataclass(frozen=True)
class ModelConfig:
    """Network shape knobs.

    input_size: square RGB input edge in pixels; the output raster has
        the same resolution. Must be a positive multiple of 224 so all
        four stages tile exactly into 7x7 attention windows.
    backbone_scale: "tiny" (desk-scale, default) or "paper-large".
    decoder_blocks: fixed at 4; present so configs are self-describing.
    depth_head: also predict a depth raster from a head that shares the
        first three decoder blocks with the density head.
    """

    input_size: int = 224
    backbone_scale: str = "tiny"
    decoder_blocks: int = 4
    depth_head: bool = False

    def __post_init__(self):
        if self.backbone_scale not in _SCALE_PRESETS:
            raise ValueError(
                f"backbone_scale must be one of {BACKBONE_SCALES}; got {self.backbone_scale!r}"
            )
        if self.decoder_blocks != 4:
            raise ValueError(
                f"the decoder is a fixed stack of 4 blocks; got {self.decoder_blocks}"
            )
        if self.input_size < _RESOLUTION_STEP or self.input_size % _RESOLUTION_STEP:
            raise ValueError(
                f"input_size must be a positive multiple of {_RESOLUTION_STEP};"
                f" got {self.input_size}"
            )


def _window_partition(x, window):
    """(B, H, W, C) -> (B * n_windows, window * window, C)."""
    b, h, w, c = x.shape
    x = x.view(b, h // window, window, w // window, window, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window * window, c)


def _window_merge(windows, window, height, width):
    """Inverse of _window_partition."""
    b = windows.shape[0] * window * window // (height * width)
    x = windows.view(b, height // window, width // window, window, window, -1)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(b, height, width, -1)


class TransformerBlock(nn.Module):
    """Pre-norm window attention + MLP, both with residual connections."""

    def __init__(self, dim, heads, window=WINDOW_SIZE, mlp_ratio=2.0):
        super().__init__()
        self.window = window
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(
            nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim)
        )

    def forward(self, x):
        # x: (B, H, W, C) with H and W multiples of the window size
        _, height, width, _ = x.shape
        windows = _window_partition(self.norm1(x), self.window)
        attended, _ = self.attn(windows, windows, windows, need_weights=False)
        x = x + _window_merge(attended, self.window, height, width)
        return x + self.mlp(self.norm2(x))


class PatchMerging(nn.Module):
    """Concatenate 2x2 neighborhoods and project 4C -> 2C (downsample x2)."""

    def __init__(self, dim):
        super().__init__()
        self.norm = nn.LayerNorm(4 * dim)
        self.reduce = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x):
        merged = torch.cat(
            [x[:, 0::2, 0::2], x[:, 1::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 1::2]],
            dim=-1,
        )
        return self.reduce(self.norm(merged))


class Encoder(nn.Module):
    """Four-stage hierarchical encoder; returns one feature map per stage."""

    def __init__(self, embed_dim, depths, heads, mlp_ratio):
        super().__init__()
        self.patch_embed = nn.Conv2d(3, embed_dim, kernel_size=PATCH_SIZE, stride=PATCH_SIZE)
        self.stages = nn.ModuleList()
        self.mergers = nn.ModuleList()
        for i, (depth, n_heads) in enumerate(zip(depths, heads)):
            dim = embed_dim * 2**i
            self.stages.append(
                nn.ModuleList(
                    [TransformerBlock(dim, n_heads, mlp_ratio=mlp_ratio) for _ in range(depth)]
                )
            )
            if i < len(depths) - 1:
                self.mergers.append(PatchMerging(dim))

    def forward(self, rgb):
        x = self.patch_embed(rgb).permute(0, 2, 3, 1)  # (B, H, W, C)
        features = []
        for i, stage in enumerate(self.stages):
            for block in stage:
                x = block(x)
            features.append(x.permute(0, 3, 1, 2))  # channel-first for the decoder
            if i < len(self.mergers):
                x = self.mergers[i](x)
        return features


class DecoderBlock(nn.Module):
    """Upsample x2, concatenate the skip feature (if any), then refine."""

    def __init__(self, in_channels, skip_channels, out_channels):
        super().__init__()
        self.project = nn.Conv2d(in_channels + skip_channels, out_channels, kernel_size=1)
        self.refine = nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1)
        self.act = nn.GELU()

    def forward(self, x, skip=None):
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        if skip is not None:
            x = torch.cat([x, skip], dim=1)
        x = self.act(self.project(x))
        return self.act(self.refine(x))


class DensityRegressor(nn.Module):
    """RGB -> non-negative density raster (and optionally a depth raster).

    forward returns a (B, 1, S, S) tensor, or a (density, depth) pair of
    such tensors when the config enables the depth head. SoftPlus runs
    before the final bilinear resize, so outputs are strictly positive
    for every input.
    """

    def __init__(self, config):
        super().__init__()
        if not isinstance(config, ModelConfig):
            raise ValueError(f"expected a ModelConfig; got {type(config).__name__}")
        self.config = config
        preset = _SCALE_PRESETS[config.backbone_scale]
        dims = [preset["embed_dim"] * 2**i for i in range(4)]

        self.encoder = Encoder(
            preset["embed_dim"], preset["depths"], preset["heads"], preset["mlp_ratio"]
        )
        # blocks 1-3 are shared between the density and depth heads
        self.shared_decoder = nn.ModuleList(
            [
                DecoderBlock(dims[3], dims[2], dims[2]),  # S/32 -> S/16
                DecoderBlock(dims[2], dims[1], dims[1]),  # S/16 -> S/8
                DecoderBlock(dims[1], dims[0], dims[0]),  # S/8  -> S/4
            ]
        )
        tail = dims[0] // 2
        self.density_block = DecoderBlock(dims[0], 0, tail)  # S/4 -> S/2
        self.density_out = nn.Conv2d(tail, 1, kernel_size=3, padding=1)
        if config.depth_head:
            self.depth_block = DecoderBlock(dims[0], 0, tail)
            self.depth_out = nn.Conv2d(tail, 1, kernel_size=3, padding=1)

    def _trunk(self, rgb):
        f1, f2, f3, f4 = self.encoder(rgb)
        x = self.shared_decoder[0](f4, f3)
        x = self.shared_decoder[1](x, f2)
        return self.shared_decoder[2](x, f1)

    def _finish(self, block, out_conv, trunk, size):
        raster = F.softplus(out_conv(block(trunk)))
        return F.interpolate(raster, size=(size, size), mode="bilinear", align_corners=False)

    def forward(self, rgb):
        size = self.config.input_size
        if rgb.ndim != 4 or rgb.shape[1] != 3 or rgb.shape[2:] != (size, size):
            raise ValueError(
                f"expected input of shape (B, 3, {size}, {size}); got {tuple(rgb.shape)}"
            )
        trunk = self._trunk(rgb)
        density = self._finish(self.density_block, self.density_out, trunk, size)
        if not self.config.depth_head:
            return density
        depth = self._finish(self.depth_block, self.depth_out, trunk, size)
        return density, depth


class MicroHead(nn.Module):
    """Two-parameter float64 head (scale, bias) for finite-difference checks."""

    def __init__(self, scale=0.8, bias=-0.2):
        super().__init__()
        self.scale = nn.Parameter(torch.tensor(float(scale), dtype=torch.float64))
        self.bias = nn.Parameter(torch.tensor(float(bias), dtype=torch.float64))

    def forward(self, x):
        return F.softplus(self.scale * x + self.bias)


def build_model(config=ModelConfig()):
    """Construct the regression network for a validated config."""
    return DensityRegressor(config)
