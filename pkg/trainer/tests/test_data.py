"""File I/O: AGBD codec, manifest parsing, resizing, augmentation."""

import struct

import numpy as np
import pytest
import torch
from PIL import Image

from agbtrainer import (
    DensityDataset,
    TrainingDataError,
    agbd,
    flip_horizontal,
    load_depth,
    load_rgb,
    read_manifest,
    resize_sum_preserving,
)

MANIFEST_HEADER = (
    "sample_id,rgb_path,instance_map_path,metadata_path,depth_path,"
    "density_map_path,split,total_agb"
)


def test_agbd_round_trip_against_golden_bytes():
    values = np.array([[0.0, 1.5, 2.25], [3.0, 0.125, 9.5]], dtype=np.float32)
    golden = (
        b"AGBD"
        + bytes([1, 0, 0, 0])
        + struct.pack("<II", 3, 2)
        + values.tobytes(order="C")
    )
    assert agbd.encode(values) == golden
    decoded = agbd.decode(golden)
    np.testing.assert_array_equal(decoded, values)
    assert decoded.dtype == np.float32


def test_agbd_rejects_malformed_input():
    good = agbd.encode(np.ones((2, 2), dtype=np.float32))
    with pytest.raises(ValueError):
        agbd.decode(good[:10])
    with pytest.raises(ValueError):
        agbd.decode(b"XXXX" + good[4:])
    with pytest.raises(ValueError):
        agbd.decode(good + b"\x00")
    with pytest.raises(ValueError):
        agbd.encode(np.ones(4, dtype=np.float32))
    with pytest.raises(ValueError):
        agbd.encode(-np.ones((2, 2), dtype=np.float32))


def test_agbd_file_round_trip(tmp_path):
    values = np.random.default_rng(1).uniform(0, 5, size=(9, 7)).astype(np.float32)
    path = tmp_path / "m.agbd"
    agbd.write(path, values)
    np.testing.assert_array_equal(agbd.read(path), values)


def test_resize_preserves_the_sum():
    rng = np.random.default_rng(2)
    dense = torch.from_numpy(rng.uniform(0, 3, size=(1, 128, 128)).astype(np.float32))
    for size in (224, 448):
        resized = resize_sum_preserving(dense, size)
        assert resized.shape == (1, size, size)
        assert float(resized.sum()) == pytest.approx(float(dense.sum()), rel=1e-5)
    zeros = torch.zeros(1, 16, 16)
    assert torch.equal(resize_sum_preserving(zeros, 224), torch.zeros(1, 224, 224))


def test_flip_keeps_the_total_and_is_an_involution():
    rng = np.random.default_rng(3)
    dense = torch.from_numpy(rng.uniform(0, 3, size=(2, 1, 32, 32)).astype(np.float32))
    flipped = flip_horizontal(dense)
    # the sum runs over a permuted order, so only near-equality holds
    assert float(flipped.sum()) == pytest.approx(float(dense.sum()), rel=1e-6)
    assert torch.equal(flip_horizontal(flipped), dense)
    assert torch.equal(flipped[..., 0], dense[..., -1])


def test_load_rgb_and_depth(tmp_path):
    rgb = np.zeros((64, 48, 3), dtype=np.uint8)
    rgb[:, :, 0] = 255
    rgb_path = tmp_path / "img.png"
    Image.fromarray(rgb).save(rgb_path)
    tensor = load_rgb(rgb_path, 224)
    assert tensor.shape == (3, 224, 224)
    # interpolation weights can overshoot a flat channel by an ulp
    assert float(tensor.max()) == pytest.approx(1.0, rel=1e-6)
    assert float(tensor[1].max()) == 0.0

    depth = np.full((64, 48), 65535, dtype=np.uint16)
    depth_path = tmp_path / "depth.png"
    Image.fromarray(depth).save(depth_path)
    tensor = load_depth(depth_path, 224)
    assert tensor.shape == (1, 224, 224)
    np.testing.assert_allclose(tensor.numpy(), 1.0, rtol=1e-6)


def write_manifest(path, rows):
    lines = [MANIFEST_HEADER] + rows
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def make_sample_files(tmp_path, sid, size=32, total=4.0):
    rng = np.random.default_rng(sum(map(ord, sid)))
    Image.fromarray(
        rng.integers(0, 255, size=(size, size, 3), dtype=np.uint8)
    ).save(tmp_path / f"{sid}.rgb.png")
    Image.fromarray(
        rng.integers(0, 65535, size=(size, size), dtype=np.uint16)
    ).save(tmp_path / f"{sid}.depth.png")
    density = rng.uniform(0, 2, size=(size, size)).astype(np.float32)
    density *= total / density.sum()
    agbd.write(tmp_path / f"{sid}.agbd", density)
    return f"{sid}.rgb.png,,,{sid}.depth.png,{sid}.agbd"


def test_read_manifest_resolves_paths(tmp_path):
    files = make_sample_files(tmp_path, "a")
    write_manifest(tmp_path / "manifest.csv", [f"a,{files},train,4.0"])
    rows = read_manifest(tmp_path / "manifest.csv")
    assert len(rows) == 1
    row = rows[0]
    assert row.sample_id == "a"
    assert row.split == "train"
    assert row.total_agb == 4.0
    assert row.resolve(row.rgb_path) == tmp_path / "a.rgb.png"
    absolute = tmp_path / "elsewhere.png"
    assert row.resolve(str(absolute)) == absolute


def test_read_manifest_rejects_bad_input(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("sample_id,rgb_path\nx,y\n", encoding="utf-8")
    with pytest.raises(TrainingDataError):
        read_manifest(bad)
    bad.write_text(MANIFEST_HEADER + "\na,,,,,,train,notanumber\n", encoding="utf-8")
    with pytest.raises(TrainingDataError):
        read_manifest(bad)


def test_dataset_loads_pairs(tmp_path):
    rows = []
    for sid in ("a", "b", "c"):
        files = make_sample_files(tmp_path, sid)
        rows.append(f"{sid},{files},train,4.0")
    write_manifest(tmp_path / "manifest.csv", rows)

    dataset = DensityDataset(tmp_path / "manifest.csv", size=224, need_depth=True)
    assert len(dataset) == 3
    assert dataset.sample_ids == ["a", "b", "c"]
    item = dataset[0]
    assert item["rgb"].shape == (3, 224, 224)
    assert item["density"].shape == (1, 224, 224)
    assert item["depth"].shape == (1, 224, 224)
    assert float(item["density"].sum()) == pytest.approx(4.0, rel=1e-4)

    plain = DensityDataset(tmp_path / "manifest.csv", size=224)
    assert "depth" not in plain[0]


def test_dataset_requires_ground_truth(tmp_path):
    files = make_sample_files(tmp_path, "a")
    no_density = files.rsplit(",", 1)[0] + ","  # blank density_map_path
    write_manifest(tmp_path / "manifest.csv", [f"a,{no_density},train,4.0"])
    with pytest.raises(TrainingDataError, match="density"):
        DensityDataset(tmp_path / "manifest.csv", size=224)


def test_dataset_requires_depth_when_asked(tmp_path):
    files = make_sample_files(tmp_path, "a")
    parts = files.split(",")
    parts[3] = ""  # blank depth_path
    write_manifest(tmp_path / "manifest.csv", ["a," + ",".join(parts) + ",train,4.0"])
    with pytest.raises(TrainingDataError, match="depth"):
        DensityDataset(tmp_path / "manifest.csv", size=224, need_depth=True)
    DensityDataset(tmp_path / "manifest.csv", size=224)  # fine without depth


def test_dataset_requires_matching_split(tmp_path):
    files = make_sample_files(tmp_path, "a")
    write_manifest(tmp_path / "manifest.csv", [f"a,{files},test,4.0"])
    with pytest.raises(TrainingDataError, match="split"):
        DensityDataset(tmp_path / "manifest.csv", size=224, split="train")
    assert len(DensityDataset(tmp_path / "manifest.csv", size=224, split=None)) == 1
