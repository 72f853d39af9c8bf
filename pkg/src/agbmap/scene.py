"""Scene metadata: per-image tree records, plot area and per-tree pixel areas.

A scene is the list of trees visible from one camera position together
with the image dimensions. The plot area is the ground-level axis-aligned
bounding box over the tree positions (flat-ground assumption); pixel areas
are per-tree visible pixel counts taken from the instance map.
"""

import math
from dataclasses import dataclass

import numpy as np

from .allometry import density_for_species
from .errors import DegeneratePlotError, EmptySceneError, InvalidTreeError
from .validation import check_instance_map, check_non_negative, check_positive

__all__ = ["TreeRecord", "SceneMetadata", "PlotArea", "plot_area", "pixel_areas"]

# Plots narrower than this are rejected: a near-degenerate bounding box
# makes the density values blow up (the same failure mode the training-set
# filter exists for), so we refuse them at the source.
DEFAULT_MIN_PLOT_AREA_M2 = 1.0


@dataclass(frozen=True)
class TreeRecord:
    """One tree's geometric attributes and ground position."""

    id: int
    species: str
    dbh_cm: float
    height_m: float
    canopy_diameter_m: float
    ground_x_m: float
    ground_y_m: float

    def __post_init__(self):
        if not isinstance(self.id, int) or self.id < 1:
            raise InvalidTreeError("id", self.id)
        density_for_species(self.species)  # validates the species label
        check_positive(self.dbh_cm, "dbh_cm", tree_id=self.id)
        check_positive(self.height_m, "height_m", tree_id=self.id)
        check_non_negative(self.canopy_diameter_m, "canopy_diameter_m", tree_id=self.id)
        for name in ("ground_x_m", "ground_y_m"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidTreeError(name, value, tree_id=self.id)

    @property
    def wood_density(self):
        return density_for_species(self.species)


@dataclass(frozen=True)
class SceneMetadata:
    """Scene id, tree list and image dimensions for one rendered image."""

    scene_id: str
    trees: tuple
    image_width_px: int
    image_height_px: int

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        if not self.trees:
            raise EmptySceneError(f"scene {self.scene_id!r} has no trees")
        for name in ("image_width_px", "image_height_px"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer; got {value!r}")
        seen = set()
        for tree in self.trees:
            if tree.id in seen:
                raise InvalidTreeError("id", tree.id, tree_id=tree.id)
            seen.add(tree.id)

    def tree_by_id(self, tree_id):
        for tree in self.trees:
            if tree.id == tree_id:
                return tree
        raise KeyError(tree_id)


@dataclass(frozen=True)
class PlotArea:
    """Ground-level bounding box over tree positions, in meters."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    @property
    def area_m2(self):
        return (self.max_x - self.min_x) * (self.max_y - self.min_y)


def plot_area(trees, min_area_m2=DEFAULT_MIN_PLOT_AREA_M2):
    """Bounding box over the ground coordinates of all trees in the scene.

    Uses every tree in the metadata, including ones the small-tree filter
    later removes from the density map. Raises EmptySceneError for an
    empty list and DegeneratePlotError when the box area falls below
    ``min_area_m2``.
    """
    trees = list(trees)
    if not trees:
        raise EmptySceneError("cannot compute plot area of an empty scene")
    xs = [t.ground_x_m for t in trees]
    ys = [t.ground_y_m for t in trees]
    box = PlotArea(min(xs), min(ys), max(xs), max(ys))
    if box.area_m2 < min_area_m2:
        raise DegeneratePlotError(
            f"plot area {box.area_m2:.6g} m^2 is below the minimum {min_area_m2:g} m^2"
            f" ({len(trees)} trees)"
        )
    return box


def pixel_areas(instance_map):
    """Per-tree visible pixel counts from an index raster.

    Returns a dict mapping tree id -> pixel count for every id present in
    the map; background (index 0) is excluded. Ids absent from the map are
    simply missing (use ``.get(id, 0)``).
    """
    indices = check_instance_map(instance_map)
    counts = np.bincount(indices.ravel())
    return {int(i): int(c) for i, c in enumerate(counts) if i > 0 and c > 0}
