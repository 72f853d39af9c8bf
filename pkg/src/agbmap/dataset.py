"""On-disk formats: scene metadata text, instance-map PNGs, manifest CSV.

Scene metadata is a line-oriented text document (grammar in
docs/formats.md):

    agbmap-scene v1
    scene_id <text>
    image_size <width> <height>
    tree id=<int> species=<label> dbh_cm=<float> height_m=<float> \
        canopy_diameter_m=<float> ground_x_m=<float> ground_y_m=<float>

Blank lines and ``#`` comments are ignored. Serialization is canonical
(floats via repr), so serialize -> parse -> serialize is byte-stable.

Instance maps are PNGs in one of two encodings, auto-detected on read:
16-bit grayscale holding tree indices directly, or 8-bit RGB with a JSON
color-index sidecar. Manifests are plain CSV with a fixed header; paths
are stored as written and resolved against the manifest's directory.
"""

import csv
import json
import math
import random
from dataclasses import dataclass
from io import BytesIO
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    AgbMapError,
    InvalidTreeError,
    ManifestError,
    MetadataParseError,
    MissingTotalError,
    UnknownInstanceColorError,
)
from .scene import SceneMetadata, TreeRecord
from .validation import check_fraction, check_instance_map

__all__ = [
    "parse_scene_metadata",
    "serialize_scene_metadata",
    "read_scene_metadata",
    "write_scene_metadata",
    "ColorIndexTable",
    "decode_instance_map",
    "read_instance_map",
    "write_instance_map_png16",
    "write_instance_map_rgb",
    "SampleRecord",
    "MANIFEST_FIELDS",
    "read_manifest",
    "write_manifest",
    "split_dataset",
    "filter_samples",
]

_METADATA_HEADER = "agbmap-scene v1"
_TREE_KEYS = (
    "id",
    "species",
    "dbh_cm",
    "height_m",
    "canopy_diameter_m",
    "ground_x_m",
    "ground_y_m",
)


def _format_float(value):
    # repr gives the shortest string that round-trips exactly
    return repr(float(value))


def serialize_scene_metadata(scene):
    """Render SceneMetadata to its canonical text form."""
    lines = [
        _METADATA_HEADER,
        f"scene_id {scene.scene_id}",
        f"image_size {scene.image_width_px} {scene.image_height_px}",
    ]
    for t in scene.trees:
        lines.append(
            f"tree id={t.id} species={t.species}"
            f" dbh_cm={_format_float(t.dbh_cm)}"
            f" height_m={_format_float(t.height_m)}"
            f" canopy_diameter_m={_format_float(t.canopy_diameter_m)}"
            f" ground_x_m={_format_float(t.ground_x_m)}"
            f" ground_y_m={_format_float(t.ground_y_m)}"
        )
    return "\n".join(lines) + "\n"


def _parse_tree_line(rest, lineno):
    fields = {}
    for token in rest.split():
        key, sep, value = token.partition("=")
        if not sep or not value:
            raise MetadataParseError(f"malformed tree token {token!r}", line=lineno)
        if key not in _TREE_KEYS:
            raise MetadataParseError(f"unknown tree key {key!r}", line=lineno)
        if key in fields:
            raise MetadataParseError(f"repeated tree key {key!r}", line=lineno)
        fields[key] = value
    missing = [k for k in _TREE_KEYS if k not in fields]
    if missing:
        raise MetadataParseError(
            f"tree is missing field(s) {', '.join(missing)}", line=lineno
        )
    try:
        tree_id = int(fields["id"])
    except ValueError:
        raise MetadataParseError(f"tree id {fields['id']!r} is not an integer", line=lineno)
    numeric = {}
    for key in _TREE_KEYS[2:]:
        try:
            numeric[key] = float(fields[key])
        except ValueError:
            raise MetadataParseError(
                f"tree id={tree_id}: {key}={fields[key]!r} is not a number", line=lineno
            )
    try:
        return TreeRecord(id=tree_id, species=fields["species"], **numeric)
    except InvalidTreeError as err:
        raise MetadataParseError(str(err), line=lineno) from err


def parse_scene_metadata(data):
    """Parse scene metadata text (bytes or str) into validated SceneMetadata."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as err:
            raise MetadataParseError(f"not valid UTF-8: {err}") from err

    scene_id = None
    image_size = None
    trees = []
    saw_header = False
    for lineno, raw in enumerate(data.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not saw_header:
            if line != _METADATA_HEADER:
                raise MetadataParseError(
                    f"expected header {_METADATA_HEADER!r}, got {line!r}", line=lineno
                )
            saw_header = True
            continue
        keyword, _, rest = line.partition(" ")
        rest = rest.strip()
        if keyword == "scene_id":
            if not rest:
                raise MetadataParseError("scene_id is empty", line=lineno)
            scene_id = rest
        elif keyword == "image_size":
            parts = rest.split()
            if len(parts) != 2:
                raise MetadataParseError("image_size needs width and height", line=lineno)
            try:
                image_size = (int(parts[0]), int(parts[1]))
            except ValueError:
                raise MetadataParseError(f"bad image_size {rest!r}", line=lineno)
        elif keyword == "tree":
            trees.append(_parse_tree_line(rest, lineno))
        else:
            raise MetadataParseError(f"unknown keyword {keyword!r}", line=lineno)

    if not saw_header:
        raise MetadataParseError("empty document")
    if scene_id is None:
        raise MetadataParseError("missing scene_id line")
    if image_size is None:
        raise MetadataParseError("missing image_size line")
    if not trees:
        raise MetadataParseError("scene declares no trees")
    seen = set()
    for t in trees:
        if t.id in seen:
            raise MetadataParseError(f"duplicate tree id={t.id}")
        seen.add(t.id)
    try:
        return SceneMetadata(
            scene_id=scene_id,
            trees=tuple(trees),
            image_width_px=image_size[0],
            image_height_px=image_size[1],
        )
    except (ValueError, AgbMapError) as err:
        raise MetadataParseError(str(err)) from err


def read_scene_metadata(path):
    return parse_scene_metadata(Path(path).read_bytes())


def write_scene_metadata(path, scene):
    Path(path).write_text(serialize_scene_metadata(scene), encoding="utf-8")


# ---------------------------------------------------------------------------
# Instance maps


@dataclass(frozen=True)
class ColorIndexTable:
    """Injective RGB -> tree index mapping for 8-bit RGB instance maps."""

    colors: dict  # (r, g, b) -> index >= 1
    background: tuple = (0, 0, 0)

    def __post_init__(self):
        object.__setattr__(
            self, "colors", {tuple(int(v) for v in k): int(i) for k, i in self.colors.items()}
        )
        object.__setattr__(self, "background", tuple(int(v) for v in self.background))
        indices = list(self.colors.values())
        if len(set(indices)) != len(indices):
            raise ValueError("color table is not injective: two colors share an index")
        if any(i < 1 for i in indices):
            raise ValueError("color table indices must be >= 1 (0 is background)")
        if self.background in self.colors:
            raise ValueError("background color also appears in the color table")

    def to_json(self):
        return json.dumps(
            {
                "background": list(self.background),
                "colors": {",".join(map(str, rgb)): idx for rgb, idx in self.colors.items()},
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        colors = {
            tuple(int(v) for v in key.split(",")): int(idx)
            for key, idx in doc["colors"].items()
        }
        return cls(colors=colors, background=tuple(doc.get("background", (0, 0, 0))))


def _pack_rgb(arr):
    return (
        arr[..., 0].astype(np.int64) << 16
        | arr[..., 1].astype(np.int64) << 8
        | arr[..., 2].astype(np.int64)
    )


def decode_instance_map(png_bytes, color_table=None):
    """Decode an instance-map PNG into an index raster.

    16-bit grayscale PNGs hold indices directly; 8-bit RGB PNGs require a
    ColorIndexTable. An RGB color absent from the table raises
    UnknownInstanceColorError with the first offending pixel position.
    """
    img = Image.open(BytesIO(png_bytes))
    if img.mode in ("I", "I;16", "I;16B"):
        return np.asarray(img, dtype=np.int64)
    if img.mode == "RGB":
        if color_table is None:
            raise ValueError("RGB instance map needs a ColorIndexTable sidecar")
        rgb = np.asarray(img)
        packed = _pack_rgb(rgb)
        lookup = {(r << 16 | g << 8 | b): idx for (r, g, b), idx in color_table.colors.items()}
        bg_r, bg_g, bg_b = color_table.background
        lookup[bg_r << 16 | bg_g << 8 | bg_b] = 0
        uniq, inverse = np.unique(packed, return_inverse=True)
        mapped = np.empty(len(uniq), dtype=np.int64)
        for pos, value in enumerate(uniq):
            if int(value) not in lookup:
                y, x = np.argwhere(packed == value)[0]
                raise UnknownInstanceColorError(rgb[y, x], x=int(x), y=int(y))
            mapped[pos] = lookup[int(value)]
        return mapped[inverse].reshape(packed.shape)
    raise ValueError(
        f"unsupported instance-map PNG mode {img.mode!r};"
        " expected 16-bit grayscale or 8-bit RGB"
    )


def read_instance_map(path, color_table_path=None):
    """Read an instance map from disk, finding the RGB sidecar if needed.

    For RGB maps, the color table is read from ``color_table_path`` or,
    when omitted, from ``<path>.colors.json``.
    """
    path = Path(path)
    data = path.read_bytes()
    img = Image.open(BytesIO(data))
    table = None
    if img.mode == "RGB":
        sidecar = Path(color_table_path) if color_table_path else path.with_name(path.name + ".colors.json")
        if not sidecar.exists():
            raise ManifestError(
                f"RGB instance map {path} has no color table sidecar at {sidecar}"
            )
        table = ColorIndexTable.from_json(sidecar.read_text(encoding="utf-8"))
    return decode_instance_map(data, table)


def write_instance_map_png16(path, indices):
    """Write an index raster as 16-bit grayscale PNG."""
    arr = check_instance_map(indices)
    if arr.max(initial=0) > 0xFFFF:
        raise ValueError("indices exceed 16-bit range")
    Image.fromarray(arr.astype(np.uint16)).save(path, format="PNG")


def write_instance_map_rgb(path, indices, color_table):
    """Write an index raster as 8-bit RGB PNG plus its JSON sidecar."""
    arr = check_instance_map(indices)
    by_index = {idx: rgb for rgb, idx in color_table.colors.items()}
    rgb = np.empty(arr.shape + (3,), dtype=np.uint8)
    rgb[...] = color_table.background
    for idx in np.unique(arr):
        idx = int(idx)
        if idx == 0:
            continue
        if idx not in by_index:
            raise ValueError(f"no color assigned to index {idx}")
        rgb[arr == idx] = by_index[idx]
    path = Path(path)
    Image.fromarray(rgb).save(path, format="PNG")
    sidecar = path.with_name(path.name + ".colors.json")
    sidecar.write_text(color_table.to_json(), encoding="utf-8")
    return sidecar


# ---------------------------------------------------------------------------
# Manifests


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

_SPLITS = ("", "train", "test")


@dataclass
class SampleRecord:
    """One manifest row; optional fields are empty strings / None."""

    sample_id: str
    rgb_path: str = ""
    instance_map_path: str = ""
    metadata_path: str = ""
    depth_path: str = ""
    density_map_path: str = ""
    split: str = ""
    total_agb: float = None

    def __post_init__(self):
        if not self.sample_id:
            raise ManifestError("sample_id must be non-empty")
        if self.split not in _SPLITS:
            raise ManifestError(
                f"sample {self.sample_id!r}: split must be one of {_SPLITS}, got {self.split!r}"
            )
        if self.total_agb is not None:
            value = float(self.total_agb)
            if not (math.isfinite(value) and value >= 0):
                raise ManifestError(
                    f"sample {self.sample_id!r}: total_agb must be finite and >= 0"
                )
            self.total_agb = value


def read_manifest(path):
    """Read a manifest CSV into SampleRecords (raises on a bad header)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ManifestError(f"{path}: empty manifest")
        if tuple(reader.fieldnames) != MANIFEST_FIELDS:
            raise ManifestError(
                f"{path}: bad header {reader.fieldnames!r},"
                f" expected {','.join(MANIFEST_FIELDS)}"
            )
        samples = []
        for lineno, row in enumerate(reader, start=2):
            if any(v is None for v in row.values()):
                raise ManifestError(f"{path}: line {lineno}: wrong number of fields")
            total = row["total_agb"].strip()
            try:
                samples.append(
                    SampleRecord(
                        sample_id=row["sample_id"],
                        rgb_path=row["rgb_path"],
                        instance_map_path=row["instance_map_path"],
                        metadata_path=row["metadata_path"],
                        depth_path=row["depth_path"],
                        density_map_path=row["density_map_path"],
                        split=row["split"],
                        total_agb=float(total) if total else None,
                    )
                )
            except (ValueError, ManifestError) as err:
                raise ManifestError(f"{path}: line {lineno}: {err}") from err
    return samples


def write_manifest(path, samples):
    """Write SampleRecords as a manifest CSV (stable, byte-reproducible)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for s in samples:
            writer.writerow(
                [
                    s.sample_id,
                    s.rgb_path,
                    s.instance_map_path,
                    s.metadata_path,
                    s.depth_path,
                    s.density_map_path,
                    s.split,
                    "" if s.total_agb is None else repr(s.total_agb),
                ]
            )


def split_dataset(samples, train_fraction=0.8, seed=0):
    """Deterministically partition samples into (train, test).

    Shuffles with a seeded PRNG and cuts at round(train_fraction * n),
    so 7075 samples at 0.8 give exactly 5660 training rows. The result is
    an exact partition: every sample lands in exactly one half.
    """
    samples = list(samples)
    if not samples:
        raise ManifestError("cannot split an empty sample list")
    check_fraction(train_fraction, "train_fraction")
    order = list(range(len(samples)))
    random.Random(seed).shuffle(order)
    n_train = round(train_fraction * len(samples))
    train = [samples[i] for i in order[:n_train]]
    test = [samples[i] for i in order[n_train:]]
    return train, test


def filter_samples(samples, max_total_agb=20.0):
    """Split samples into (kept, dropped) by the total-AGB ceiling.

    Order-preserving; every sample must carry a cached total_agb (run
    gen-maps first), otherwise MissingTotalError is raised.
    """
    samples = list(samples)
    for s in samples:
        if s.total_agb is None:
            raise MissingTotalError(
                f"sample {s.sample_id!r} has no total_agb; generate density maps first"
            )
    kept = [s for s in samples if s.total_agb <= max_total_agb]
    dropped = [s for s in samples if s.total_agb > max_total_agb]
    return kept, dropped
