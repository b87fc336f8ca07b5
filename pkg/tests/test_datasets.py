"""Synthetic generation and the three ingestion formats."""

import json

import numpy as np
import pytest

from certspoof.datasets import (
    ImageDataset,
    SHAPE_CLASS_NAMES,
    ingest_dataset,
    synthetic_shapes,
    write_cifar_binary,
    write_idx_pair,
)


def test_synthetic_shapes_deterministic():
    a = synthetic_shapes(20, shape=(16, 16, 3), seed=7)
    b = synthetic_shapes(20, shape=(16, 16, 3), seed=7)
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.labels, b.labels)
    assert a.content_hash() == b.content_hash()


def test_synthetic_shapes_range_and_shape():
    ds = synthetic_shapes(10, shape=(28, 28, 1), seed=1)
    assert ds.images.shape == (10, 28, 28, 1)
    assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0
    assert ds.num_classes == 8
    assert len(SHAPE_CLASS_NAMES) == 8


def test_synthetic_shapes_all_classes_represented():
    ds = synthetic_shapes(200, shape=(16, 16, 3), seed=3)
    assert set(np.unique(ds.labels)) == set(range(8))


def test_dataset_subset_and_ids():
    ds = synthetic_shapes(10, shape=(8, 8, 1), seed=0, name="probe")
    sub = ds.subset([2, 4])
    assert len(sub) == 2
    assert np.array_equal(sub.images[0], ds.images[2])
    assert ds.image_id(3) == "probe:3"


def test_dataset_validation():
    with pytest.raises(ValueError):
        ImageDataset(images=np.zeros((2, 4, 4, 1)), labels=np.array([0, 5]), num_classes=2)
    with pytest.raises(ValueError):
        ImageDataset(images=np.zeros((4, 4, 1)), labels=np.zeros(1, dtype=np.int64),
                     num_classes=1)


# ---------------------------------------------------------------------------
# idx format
# ---------------------------------------------------------------------------


def test_idx_round_trip(tmp_path):
    ds = synthetic_shapes(12, shape=(14, 14, 1), seed=5, name="gray")
    write_idx_pair(ds, tmp_path / "idx")
    loaded = ingest_dataset(tmp_path / "idx", "idx")
    assert len(loaded) == 12
    assert loaded.image_shape == (14, 14, 1)
    assert np.array_equal(loaded.labels, ds.labels)
    # pixel quantization to bytes, then exact round-trip of the bytes
    assert np.allclose(loaded.images, np.round(ds.images * 255) / 255, atol=1e-12)


def test_idx_truncated_image_file_reports_lengths(tmp_path):
    ds = synthetic_shapes(6, shape=(10, 10, 1), seed=6)
    img_path, _ = write_idx_pair(ds, tmp_path / "idx")
    data = img_path.read_bytes()
    img_path.write_bytes(data[:-10])
    with pytest.raises(ValueError, match=r"expected 616 bytes, found 606"):
        ingest_dataset(tmp_path / "idx", "idx")


def test_idx_bad_magic(tmp_path):
    ds = synthetic_shapes(3, shape=(8, 8, 1), seed=6)
    img_path, _ = write_idx_pair(ds, tmp_path / "idx")
    data = bytearray(img_path.read_bytes())
    data[3] = 7
    img_path.write_bytes(bytes(data))
    with pytest.raises(ValueError, match="magic"):
        ingest_dataset(tmp_path / "idx", "idx")


def test_idx_label_count_mismatch(tmp_path):
    ds = synthetic_shapes(5, shape=(8, 8, 1), seed=8)
    _, lbl_path = write_idx_pair(ds, tmp_path / "idx")
    data = bytearray(lbl_path.read_bytes())
    data[7] = 99
    lbl_path.write_bytes(bytes(data))
    with pytest.raises(ValueError, match="labels for"):
        ingest_dataset(tmp_path / "idx", "idx")


def test_idx_reingestion_idempotent_manifest(tmp_path):
    ds = synthetic_shapes(8, shape=(8, 8, 1), seed=9)
    write_idx_pair(ds, tmp_path / "idx")
    ingest_dataset(tmp_path / "idx", "idx")
    manifest_path = tmp_path / "idx" / "idx.manifest.json"
    first = manifest_path.read_text()
    ingest_dataset(tmp_path / "idx", "idx")
    assert manifest_path.read_text() == first
    manifest = json.loads(first)
    assert manifest["count"] == 8
    assert "content_sha256" in manifest


# ---------------------------------------------------------------------------
# cifar-binary format
# ---------------------------------------------------------------------------


def test_cifar_binary_round_trip(tmp_path):
    ds = synthetic_shapes(9, shape=(32, 32, 3), seed=10)
    write_cifar_binary(ds, tmp_path / "cifar")
    loaded = ingest_dataset(tmp_path / "cifar", "cifar-binary")
    assert len(loaded) == 9
    assert loaded.image_shape == (32, 32, 3)
    assert np.array_equal(loaded.labels, ds.labels)
    assert np.allclose(loaded.images, np.round(ds.images * 255) / 255, atol=1e-12)


def test_cifar_binary_corrupt_length(tmp_path):
    ds = synthetic_shapes(4, shape=(32, 32, 3), seed=11)
    path = write_cifar_binary(ds, tmp_path / "cifar")
    path.write_bytes(path.read_bytes()[:-7])
    with pytest.raises(ValueError, match="3073-byte record"):
        ingest_dataset(tmp_path / "cifar", "cifar-binary")


def test_cifar_binary_missing_files(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(ValueError, match="no .bin files"):
        ingest_dataset(tmp_path / "empty", "cifar-binary")


# ---------------------------------------------------------------------------
# image-directory format
# ---------------------------------------------------------------------------


def test_image_directory_round_trip(tmp_path):
    from PIL import Image

    root = tmp_path / "imgdir"
    rng = np.random.default_rng(0)
    expected = {}
    for cls in ("cat", "dog"):
        (root / cls).mkdir(parents=True)
        for i in range(3):
            arr = (rng.random((12, 12, 3)) * 255).astype(np.uint8)
            Image.fromarray(arr).save(root / cls / f"{i}.png")
            expected[(cls, i)] = arr
    ds = ingest_dataset(root, "image-directory")
    assert len(ds) == 6
    assert ds.num_classes == 2
    assert ds.image_shape == (12, 12, 3)
    # class order is sorted directory order: cat=0, dog=1
    assert np.array_equal(ds.labels, [0, 0, 0, 1, 1, 1])
    assert np.allclose(ds.images[0], expected[("cat", 0)] / 255.0)
    manifest = json.loads((root / "imgdir.manifest.json").read_text())
    assert manifest["class_names"] == ["cat", "dog"]


def test_image_directory_shape_disagreement(tmp_path):
    from PIL import Image

    root = tmp_path / "imgdir"
    (root / "a").mkdir(parents=True)
    Image.fromarray(np.zeros((8, 8), dtype=np.uint8)).save(root / "a" / "0.png")
    Image.fromarray(np.zeros((9, 9), dtype=np.uint8)).save(root / "a" / "1.png")
    with pytest.raises(ValueError, match="disagree on shape"):
        ingest_dataset(root, "image-directory")


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(ValueError, match="unknown dataset format"):
        ingest_dataset(tmp_path, "tar")
