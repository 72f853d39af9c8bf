"""Per-pixel aboveground-biomass density maps from tree inventories.

The pipeline: scene metadata (tree positions, species, stem and crown
measurements) plus a per-pixel instance segmentation yield a density map
whose integral is the plot's total AGB in kg/m^2. The package also ships
the binary map format, dataset manifests, a synthetic scene generator,
evaluation metrics and a command-line interface.
"""

from . import agbd
from .allometry import (
    AllometricModel,
    DEFAULT_ALLOMETRY,
    WOOD_DENSITY,
    density_for_species,
    tree_agb,
)
from .dataset import (
    ColorIndexTable,
    MANIFEST_FIELDS,
    SampleRecord,
    decode_instance_map,
    filter_samples,
    parse_scene_metadata,
    read_instance_map,
    read_manifest,
    read_scene_metadata,
    serialize_scene_metadata,
    split_dataset,
    write_instance_map_png16,
    write_instance_map_rgb,
    write_manifest,
    write_scene_metadata,
)
from .density import (
    DEFAULT_MIN_AREA_FRACTION,
    build_density_map,
    flip_horizontal,
    integrate,
    visualize,
)
from .errors import (
    AgbMapError,
    DegeneratePlotError,
    EmptySceneError,
    FormatError,
    InconsistentSceneError,
    InvalidTreeError,
    ManifestError,
    MetadataParseError,
    MissingTotalError,
    UndefinedCorrelationError,
    UnknownInstanceColorError,
)
from .estimators import DensityMapBuilder, MedianBaselineRegressor
from .metrics import (
    DEFAULT_LOSS_CONFIG,
    EvalReport,
    LossConfig,
    PREDICTION_FIELDS,
    PredictionPair,
    abs_error_stats,
    evaluate,
    loss,
    median_of,
    per_id_aggregate,
    pruned_spearman,
    read_predictions,
    spearman,
    write_predictions,
)
from .scene import PlotArea, SceneMetadata, TreeRecord, pixel_areas, plot_area
from .synth import Camera, SynthParams, default_camera, generate_scene, synth_corpus

__version__ = "0.1.0"

__all__ = [
    "agbd",
    "AllometricModel",
    "DEFAULT_ALLOMETRY",
    "WOOD_DENSITY",
    "density_for_species",
    "tree_agb",
    "ColorIndexTable",
    "MANIFEST_FIELDS",
    "SampleRecord",
    "decode_instance_map",
    "filter_samples",
    "parse_scene_metadata",
    "read_instance_map",
    "read_manifest",
    "read_scene_metadata",
    "serialize_scene_metadata",
    "split_dataset",
    "write_instance_map_png16",
    "write_instance_map_rgb",
    "write_manifest",
    "write_scene_metadata",
    "DEFAULT_MIN_AREA_FRACTION",
    "build_density_map",
    "flip_horizontal",
    "integrate",
    "visualize",
    "AgbMapError",
    "DegeneratePlotError",
    "EmptySceneError",
    "FormatError",
    "InconsistentSceneError",
    "InvalidTreeError",
    "ManifestError",
    "MetadataParseError",
    "MissingTotalError",
    "UndefinedCorrelationError",
    "UnknownInstanceColorError",
    "DensityMapBuilder",
    "MedianBaselineRegressor",
    "LossConfig",
    "DEFAULT_LOSS_CONFIG",
    "EvalReport",
    "PREDICTION_FIELDS",
    "PredictionPair",
    "abs_error_stats",
    "evaluate",
    "loss",
    "median_of",
    "per_id_aggregate",
    "pruned_spearman",
    "read_predictions",
    "spearman",
    "write_predictions",
    "PlotArea",
    "SceneMetadata",
    "TreeRecord",
    "pixel_areas",
    "plot_area",
    "Camera",
    "SynthParams",
    "default_camera",
    "generate_scene",
    "synth_corpus",
    "__version__",
]
