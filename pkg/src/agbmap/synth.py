"""Procedural forest scenes rendered with a pinhole camera.

Trees are flat billboards facing the camera: a trunk rectangle (width =
DBH, height = tree height) topped by a circular canopy (diameter =
canopy_diameter, top touching the tree tip). Billboards live in the
vertical plane through the tree position perpendicular to the view
direction, so every pixel of one tree shares that tree's camera-space
depth and occlusion reduces to per-tree depth comparison.

Rasterization is exact: each pixel center is tested against the
silhouette in world units (no anti-aliasing), because index maps must be
crisp. The world frame is x/y on the ground, z up; the camera looks
horizontally with a yaw about z.

Canonical per-pixel geometry, for pixel center (u, v) and a tree whose
billboard sits at forward distance ``depth``:

    s = (u - W/2) * depth / focal - lateral0   # horizontal offset from axis, m
    h = cam_z - (v - H/2) * depth / focal      # height above ground, m

with ``lateral0`` the lateral offset of the tree axis. Trunk coverage is
|s| <= dbh/2 and 0 <= h <= height; canopy coverage is the ellipse test.
"""

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from . import agbd
from .allometry import DEFAULT_ALLOMETRY
from .dataset import (
    SampleRecord,
    serialize_scene_metadata,
    write_instance_map_png16,
    write_manifest,
)
from .density import DEFAULT_MIN_AREA_FRACTION, build_density_map, integrate
from .errors import AgbMapError
from .scene import SceneMetadata, TreeRecord

__all__ = [
    "SynthParams",
    "Camera",
    "default_camera",
    "generate_scene",
    "render_instance_map",
    "render_rgb_placeholder",
    "derive_scene_seed",
    "synth_corpus",
]

_MIN_RENDER_DEPTH = 1e-6  # trees this close to (or behind) the camera are skipped


@dataclass(frozen=True)
class SynthParams:
    """Knobs for procedural scene generation; all draws are uniform."""

    n_trees: int = 12
    plot_extent_m: tuple = (20.0, 20.0)
    dbh_range_cm: tuple = (8.0, 45.0)
    height_range_m: tuple = (4.0, 25.0)
    canopy_range_m: tuple = (1.5, 7.0)
    species_mix: float = 0.5  # fraction of birch vs broadleaf
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1; got {self.n_trees}")
        for name, lo_min in (
            ("plot_extent_m", 0.0),
            ("dbh_range_cm", 0.0),
            ("height_range_m", 0.0),
        ):
            lo, hi = getattr(self, name)
            if not (lo > lo_min and hi >= lo):
                raise ValueError(f"{name} must satisfy 0 < low <= high; got {(lo, hi)}")
        lo, hi = self.canopy_range_m
        if not (lo >= 0 and hi >= lo):
            raise ValueError(f"canopy_range_m must satisfy 0 <= low <= high; got {(lo, hi)}")
        if not (0 <= self.species_mix <= 1):
            raise ValueError(f"species_mix must lie in [0, 1]; got {self.species_mix}")


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: position in m, yaw about the up axis, focal in px."""

    position: tuple = (10.0, -12.0, 1.7)
    yaw: float = math.pi / 2
    focal_px: float = 115.0
    image_width_px: int = 128
    image_height_px: int = 128

    def __post_init__(self):
        x, y, z = self.position
        if not all(math.isfinite(v) for v in (x, y, z)) or z <= 0:
            raise ValueError(f"camera position must be finite with z > 0; got {self.position}")
        if not (self.focal_px > 0 and math.isfinite(self.focal_px)):
            raise ValueError(f"focal_px must be > 0; got {self.focal_px}")
        for name in ("image_width_px", "image_height_px"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not math.isfinite(self.yaw):
            raise ValueError("yaw must be finite")


def default_camera(params, image_width_px=128, image_height_px=128):
    """A camera south of the plot looking north across all of it."""
    extent_w, extent_d = params.plot_extent_m
    return Camera(
        position=(0.5 * extent_w, -0.6 * extent_d, 1.7),
        yaw=math.pi / 2,
        focal_px=0.9 * image_width_px,
        image_width_px=image_width_px,
        image_height_px=image_height_px,
    )


def generate_scene(params, scene_id="scene", image_size=(128, 128)):
    """Draw a random forest plot; deterministic for a fixed params.seed."""
    rng = np.random.default_rng(params.seed)
    n = params.n_trees
    extent_w, extent_d = params.plot_extent_m
    xs = rng.uniform(0.0, extent_w, n)
    ys = rng.uniform(0.0, extent_d, n)
    dbh = rng.uniform(*params.dbh_range_cm, n)
    height = rng.uniform(*params.height_range_m, n)
    canopy = rng.uniform(*params.canopy_range_m, n)
    is_birch = rng.random(n) < params.species_mix
    trees = tuple(
        TreeRecord(
            id=i + 1,
            species="birch" if is_birch[i] else "broadleaf",
            dbh_cm=float(dbh[i]),
            height_m=float(height[i]),
            canopy_diameter_m=float(canopy[i]),
            ground_x_m=float(xs[i]),
            ground_y_m=float(ys[i]),
        )
        for i in range(n)
    )
    return SceneMetadata(
        scene_id=scene_id,
        trees=trees,
        image_width_px=int(image_size[0]),
        image_height_px=int(image_size[1]),
    )


def _tree_camera_geometry(tree, camera):
    """(depth, lateral0): forward distance and lateral offset of the tree axis."""
    fx, fy = math.cos(camera.yaw), math.sin(camera.yaw)
    rx, ry = math.sin(camera.yaw), -math.cos(camera.yaw)
    dx = tree.ground_x_m - camera.position[0]
    dy = tree.ground_y_m - camera.position[1]
    return dx * fx + dy * fy, dx * rx + dy * ry


def render_instance_map(scene, camera):
    """Rasterize the scene; returns (instance_map, normalized_depth_map).

    The instance map holds tree ids (0 = background). For every covered
    pixel, the assigned id is the minimum-depth tree covering it; equal
    depths resolve to the lower id. Depth is camera-space forward
    distance divided by the maximum rendered depth, so rendered values
    lie in (0, 1] (near < far) and background pixels are exactly 1.
    Trees at or behind the camera plane are skipped.
    """
    width, height = camera.image_width_px, camera.image_height_px
    cam_z = camera.position[2]
    focal = camera.focal_px

    indices = np.zeros((height, width), dtype=np.int64)
    zbuf = np.full((height, width), np.inf)

    cols = np.arange(width, dtype=np.float64) + 0.5
    rows = np.arange(height, dtype=np.float64) + 0.5

    for tree in sorted(scene.trees, key=lambda t: t.id):
        depth, lat0 = _tree_camera_geometry(tree, camera)
        if depth <= _MIN_RENDER_DEPTH:
            continue
        dbh_m = tree.dbh_cm / 100.0
        a = 0.5 * tree.canopy_diameter_m
        hc = tree.height_m - a

        # conservative pixel bounding box of the silhouette
        smax = max(0.5 * dbh_m, a)
        h_top = max(tree.height_m, hc + a)
        h_bot = min(0.0, hc - a)
        scale = focal / depth
        u_lo = (lat0 - smax) * scale + 0.5 * width
        u_hi = (lat0 + smax) * scale + 0.5 * width
        v_lo = 0.5 * height - (h_top - cam_z) * scale
        v_hi = 0.5 * height - (h_bot - cam_z) * scale
        c0 = max(0, int(math.floor(u_lo)) - 1)
        c1 = min(width, int(math.ceil(u_hi)) + 1)
        r0 = max(0, int(math.floor(v_lo)) - 1)
        r1 = min(height, int(math.ceil(v_hi)) + 1)
        if c0 >= c1 or r0 >= r1:
            continue

        u = cols[c0:c1][np.newaxis, :]
        v = rows[r0:r1][:, np.newaxis]
        s = (u - 0.5 * width) * depth / focal - lat0
        h = cam_z - (v - 0.5 * height) * depth / focal

        covered = (np.abs(s) <= 0.5 * dbh_m) & (h >= 0.0) & (h <= tree.height_m)
        if a > 0:
            su = s / a
            hu = (h - hc) / a
            covered |= su * su + hu * hu <= 1.0

        window = np.s_[r0:r1, c0:c1]
        wins = covered & (depth < zbuf[window])
        indices[window][wins] = tree.id
        zbuf[window][wins] = depth

    rendered = indices > 0
    depth_map = np.ones((height, width), dtype=np.float64)
    if rendered.any():
        depth_map[rendered] = zbuf[rendered] / zbuf[rendered].max()
    return indices, depth_map


_SKY_TOP = np.array([164, 205, 237], dtype=np.float64)
_SKY_HORIZON = np.array([222, 236, 246], dtype=np.float64)
_GROUND = np.array([116, 104, 73], dtype=np.float64)
_SPECIES_COLOR = {
    "birch": np.array([196, 203, 160], dtype=np.float64),
    "broadleaf": np.array([88, 128, 70], dtype=np.float64),
}
_DEFAULT_TREE_COLOR = np.array([120, 120, 120], dtype=np.float64)


def render_rgb_placeholder(scene, instance_map, depth_map):
    """Flat-shaded stand-in for a photorealistic render (trainer smoke tests).

    Sky gradient above the horizon, flat ground below, trees in a species
    color darkened with normalized depth.
    """
    height, width = instance_map.shape
    img = np.empty((height, width, 3), dtype=np.float64)
    horizon = height // 2
    for row in range(height):
        if row < horizon:
            t = row / max(horizon, 1)
            img[row, :] = _SKY_TOP + (_SKY_HORIZON - _SKY_TOP) * t
        else:
            img[row, :] = _GROUND

    color_by_id = {
        t.id: _SPECIES_COLOR.get(t.species, _DEFAULT_TREE_COLOR) for t in scene.trees
    }
    for tree_id, color in color_by_id.items():
        mask = instance_map == tree_id
        if not mask.any():
            continue
        shade = (1.0 - 0.45 * depth_map[mask])[:, np.newaxis]
        img[mask] = color * shade
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def derive_scene_seed(base_seed, index):
    """Stable per-scene seed from the corpus master seed."""
    return int(np.random.SeedSequence(base_seed, spawn_key=(index,)).generate_state(1)[0])


def synth_corpus(
    out_dir,
    n_scenes,
    params=SynthParams(),
    camera=None,
    model=DEFAULT_ALLOMETRY,
    min_area_fraction=None,
    with_density=True,
    on_drop=None,
):
    """Write a full synthetic corpus under ``out_dir``.

    Per scene: metadata text, 16-bit instance PNG, 16-bit depth PNG, RGB
    placeholder PNG and (by default) the AGBD density map with its total
    cached in the manifest. Fully deterministic for a fixed master seed:
    re-running produces byte-identical files. Scenes whose density map
    cannot be built (degenerate plot) stay in the manifest without a
    density entry; the reason goes to ``on_drop(sample_id, reason)``.

    Returns (manifest_path, samples).
    """
    if n_scenes < 1:
        raise ValueError("n_scenes must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if camera is None:
        camera = default_camera(params)
    if min_area_fraction is None:
        min_area_fraction = DEFAULT_MIN_AREA_FRACTION

    samples = []
    for i in range(n_scenes):
        sid = f"scene_{i:04d}"
        scene_params = replace(params, seed=derive_scene_seed(params.seed, i))
        scene = generate_scene(
            scene_params,
            scene_id=sid,
            image_size=(camera.image_width_px, camera.image_height_px),
        )
        instance_map, depth_map = render_instance_map(scene, camera)

        meta_name = f"{sid}.meta.txt"
        inst_name = f"{sid}.instance.png"
        depth_name = f"{sid}.depth.png"
        rgb_name = f"{sid}.rgb.png"
        (out_dir / meta_name).write_text(serialize_scene_metadata(scene), encoding="utf-8")
        write_instance_map_png16(out_dir / inst_name, instance_map)
        Image.fromarray(np.rint(depth_map * 65535.0).astype(np.uint16)).save(
            out_dir / depth_name, format="PNG"
        )
        Image.fromarray(render_rgb_placeholder(scene, instance_map, depth_map)).save(
            out_dir / rgb_name, format="PNG"
        )

        record = SampleRecord(
            sample_id=sid,
            rgb_path=rgb_name,
            instance_map_path=inst_name,
            metadata_path=meta_name,
            depth_path=depth_name,
        )
        if with_density:
            try:
                dmap = build_density_map(
                    scene, instance_map, model=model, min_area_fraction=min_area_fraction
                )
            except AgbMapError as err:
                if on_drop is not None:
                    on_drop(sid, str(err))
            else:
                agbd_name = f"{sid}.agbd"
                agbd.write(out_dir / agbd_name, dmap)
                record.density_map_path = agbd_name
                record.total_agb = integrate(dmap)
        samples.append(record)

    manifest_path = out_dir / "manifest.csv"
    write_manifest(manifest_path, samples)
    return manifest_path, samples
