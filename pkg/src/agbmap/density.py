"""AGB density maps: construction, integration, flipping and rendering.

A density map assigns to every pixel of tree i the constant value
``agb_i / (plot_area * pixel_area_i)``, so summing the whole raster gives
the scene-level AGB in kg/m^2. Trees covering less than a configurable
fraction of the image (default 2%) are left out of the map entirely; they
still count toward the plot area.
"""

import numpy as np

from .allometry import DEFAULT_ALLOMETRY, tree_agb
from .errors import InconsistentSceneError
from .scene import pixel_areas, plot_area
from .validation import check_density_map, check_instance_map

__all__ = [
    "DEFAULT_MIN_AREA_FRACTION",
    "build_density_map",
    "integrate",
    "flip_horizontal",
    "visualize",
]

DEFAULT_MIN_AREA_FRACTION = 0.02
DEFAULT_GAMMA = 0.4

# Low-to-high color ramp following the visible spectrum:
# blue -> green -> yellow -> red, linear between anchors.
_SPECTRAL_STOPS = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])
_SPECTRAL_RGB = np.array(
    [
        [0.0, 0.0, 255.0],
        [0.0, 255.0, 0.0],
        [255.0, 255.0, 0.0],
        [255.0, 0.0, 0.0],
    ]
)


def build_density_map(
    scene,
    instance_map,
    model=DEFAULT_ALLOMETRY,
    min_area_fraction=DEFAULT_MIN_AREA_FRACTION,
):
    """Build the per-pixel AGB density raster for one scene.

    Args:
        scene: SceneMetadata listing every tree in the image
        instance_map: 2-D integer raster of tree indices (0 = background)
        model: allometric coefficients for per-tree biomass
        min_area_fraction: trees whose visible pixel count is below this
            fraction of width*height contribute nothing (small-tree filter)

    Returns:
        float64 array of shape (height, width); background and filtered
        trees hold 0.

    Raises:
        InconsistentSceneError: raster dimensions disagree with the scene
            metadata or an index has no matching tree record.
        DegeneratePlotError / EmptySceneError: propagated from plot_area.
    """
    indices = check_instance_map(instance_map)
    height, width = indices.shape
    if (width, height) != (scene.image_width_px, scene.image_height_px):
        raise InconsistentSceneError(
            f"instance map is {width}x{height} but scene {scene.scene_id!r}"
            f" declares {scene.image_width_px}x{scene.image_height_px}"
        )
    if not (0 <= min_area_fraction <= 1):
        raise ValueError(f"min_area_fraction must lie in [0, 1]; got {min_area_fraction!r}")

    known = {tree.id for tree in scene.trees}
    counts = pixel_areas(indices)
    unknown = sorted(set(counts) - known)
    if unknown:
        raise InconsistentSceneError(
            f"instance map of scene {scene.scene_id!r} references unknown"
            f" tree indices {unknown}"
        )

    area_m2 = plot_area(scene.trees).area_m2
    total_px = width * height

    # Compare as area fractions rather than pixel counts so that an exact
    # boundary (count/total == min_area_fraction) is kept, independent of
    # how the threshold product would round.
    value_by_index = np.zeros(max(known) + 1, dtype=np.float64)
    for tree in scene.trees:
        count = counts.get(tree.id, 0)
        if count == 0 or count / total_px < min_area_fraction:
            continue
        agb = tree_agb(tree.dbh_cm, tree.height_m, tree.wood_density, model=model)
        value_by_index[tree.id] = agb / (area_m2 * count)

    return value_by_index[indices]


def integrate(values):
    """Total AGB of a density map (kg/m^2): the sum of all pixels."""
    arr = check_density_map(values)
    return float(np.sum(arr, dtype=np.float64))


def flip_horizontal(raster):
    """Mirror a raster left-right (flip along the vertical image axis).

    Works for 2-D maps and (H, W, C) images; an involution that leaves
    the integral unchanged, so it is a correctness-preserving augmentation.
    """
    arr = np.asarray(raster)
    if arr.ndim not in (2, 3):
        raise ValueError(f"expected a 2-D or 3-D raster; got shape {arr.shape}")
    return arr[:, ::-1].copy()


def visualize(values, gamma=DEFAULT_GAMMA, colormap="spectral"):
    """Render a density map to an RGB uint8 image.

    Values are normalized to the map maximum, gamma-corrected
    (``t ** gamma``), then mapped either along the visible-spectrum ramp
    (low = blue, high = red) or to plain luminance. An all-zero map comes
    out all-blue (spectral) or all-black (grayscale).
    """
    arr = check_density_map(values)
    if not (np.isfinite(gamma) and gamma > 0):
        raise ValueError(f"gamma must be a positive finite number; got {gamma!r}")
    peak = arr.max()
    t = arr / peak if peak > 0 else np.zeros_like(arr)
    t = t**gamma

    if colormap == "grayscale":
        lum = np.rint(t * 255.0).astype(np.uint8)
        return np.stack([lum, lum, lum], axis=-1)
    if colormap == "spectral":
        channels = [
            np.interp(t, _SPECTRAL_STOPS, _SPECTRAL_RGB[:, c]) for c in range(3)
        ]
        return np.rint(np.stack(channels, axis=-1)).astype(np.uint8)
    raise ValueError(f"unknown colormap {colormap!r}; expected 'spectral' or 'grayscale'")
