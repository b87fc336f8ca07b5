"""Desk-scale image datasets.

Provides a deterministic synthetic shape-scene generator (classes are
geometric figures drawn over structured backgrounds, so segmentation and
saliency have something to find) and ingestion of three on-disk formats:
idx (ubyte image/label pairs), cifar-binary (label byte + channel-planar
pixels) and image-directory (one sub-directory per class).  All images
are (H, W, C) float64 in [0, 1].
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import make_rng

__all__ = [
    "ImageDataset",
    "synthetic_shapes",
    "SHAPE_CLASS_NAMES",
    "ingest_dataset",
    "write_idx_pair",
    "write_cifar_binary",
]

SHAPE_CLASS_NAMES = (
    "disc", "ring", "square", "frame", "plus", "cross", "hstripes", "vstripes",
)

MANIFEST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ImageDataset:
    """Images with integer labels; images are (N,H,W,C) float64 in [0,1]."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValueError(f"images must be (N,H,W,C), got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def image_id(self, index: int) -> str:
        return f"{self.name}:{index}"

    def subset(self, indices, name: str | None = None) -> "ImageDataset":
        indices = np.asarray(indices)
        return ImageDataset(
            images=self.images[indices],
            labels=self.labels[indices],
            num_classes=self.num_classes,
            name=name or self.name,
        )

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.images).tobytes())
        digest.update(np.ascontiguousarray(self.labels.astype(np.int64)).tobytes())
        return digest.hexdigest()


# ---------------------------------------------------------------------------
# Synthetic shape scenes
# ---------------------------------------------------------------------------


def _shape_mask(kind: int, shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    r = min(h, w) * (0.30 + 0.08 * rng.random())
    cy = h / 2 + rng.uniform(-0.10, 0.10) * h
    cx = w / 2 + rng.uniform(-0.10, 0.10) * w
    dy, dx = yy - cy, xx - cx
    dist2 = dy ** 2 + dx ** 2
    box = (np.abs(dy) <= r) & (np.abs(dx) <= r)
    thick = max(2.0, r * 0.4)
    if kind == 0:      # disc
        return dist2 <= r ** 2
    if kind == 1:      # ring
        return (dist2 <= r ** 2) & (dist2 >= (r - thick) ** 2)
    if kind == 2:      # square
        return box
    if kind == 3:      # frame
        inner = (np.abs(dy) <= r - thick) & (np.abs(dx) <= r - thick)
        return box & ~inner
    if kind == 4:      # plus
        bar = thick / 2
        return ((np.abs(dx) <= bar) & (np.abs(dy) <= r)) | ((np.abs(dy) <= bar) & (np.abs(dx) <= r))
    if kind == 5:      # diagonal cross
        bar = thick / 1.4
        return box & ((np.abs(dy - dx) <= bar) | (np.abs(dy + dx) <= bar))
    if kind == 6:      # horizontal stripes
        period = max(4.0, r * 0.7)
        return box & ((dy % period) < period / 2)
    if kind == 7:      # vertical stripes
        period = max(4.0, r * 0.7)
        return box & ((dx % period) < period / 2)
    raise ValueError(f"unknown shape kind {kind}")


def _random_color(rng: np.random.Generator, channels: int, lo: float, hi: float) -> np.ndarray:
    return rng.uniform(lo, hi, size=channels)


def _render_scene(kind: int, shape: tuple[int, int, int], rng: np.random.Generator,
                  contrast: float) -> np.ndarray:
    h, w, c = shape
    image = np.zeros((h, w, c))
    # background: two flat panels split at a random line, plus a decoy patch
    split = int(rng.integers(h // 3, 2 * h // 3)) if rng.random() < 0.5 else None
    bg1 = _random_color(rng, c, 0.15, 0.45)
    bg2 = _random_color(rng, c, 0.15, 0.45)
    if split is None:
        split_col = int(rng.integers(w // 3, 2 * w // 3))
        image[:, :split_col] = bg1
        image[:, split_col:] = bg2
    else:
        image[:split] = bg1
        image[split:] = bg2
    # decoy rectangle in a corner, colored like the background
    dh, dw = int(rng.integers(h // 6, h // 4)), int(rng.integers(w // 6, w // 4))
    corner = int(rng.integers(0, 4))
    dy0 = 0 if corner < 2 else h - dh
    dx0 = 0 if corner % 2 == 0 else w - dw
    image[dy0:dy0 + dh, dx0:dx0 + dw] = _random_color(rng, c, 0.15, 0.45)
    # foreground shape: consistently brighter than the background by the
    # contrast knob, with mild per-channel variation
    fg = np.clip(image.mean(axis=(0, 1)) + contrast + rng.uniform(-0.04, 0.04, size=c),
                 0.05, 0.98)
    mask = _shape_mask(kind, (h, w), rng)
    image[mask] = fg
    # gentle vertical illumination ramp and pixel noise
    ramp = np.linspace(-0.03, 0.03, h)[:, None, None]
    image = image + ramp + rng.normal(0.0, 0.015, size=image.shape)
    return np.clip(image, 0.0, 1.0)


def synthetic_shapes(count: int, shape: tuple[int, int, int] = (32, 32, 3),
                     num_classes: int = 8, seed: int = 0,
                     contrast: float = 0.35, name: str | None = None) -> ImageDataset:
    """Deterministic dataset of shape scenes.

    ``contrast`` sets how far the figure's brightness sits from the
    background mean; smaller values give harder, more attackable tasks.
    """
    if not 1 <= num_classes <= len(SHAPE_CLASS_NAMES):
        raise ValueError(f"num_classes must lie in [1, {len(SHAPE_CLASS_NAMES)}]")
    rng = make_rng(seed)
    labels = rng.integers(0, num_classes, size=count).astype(np.int64)
    images = np.stack([_render_scene(int(k), shape, rng, contrast) for k in labels])
    auto_name = f"shapes{shape[0]}x{shape[1]}x{shape[2]}-s{seed}"
    return ImageDataset(images=images, labels=labels, num_classes=num_classes,
                        name=name or auto_name)


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def _read_exact(path: Path, expected: int, payload_offset: int) -> bytes:
    data = path.read_bytes()
    if len(data) != expected:
        raise ValueError(
            f"{path}: expected {expected} bytes, found {len(data)} "
            f"(payload starts at byte {payload_offset})"
        )
    return data


def _ingest_idx(root: Path) -> tuple[np.ndarray, np.ndarray]:
    image_files = sorted(root.glob("*images-idx3-ubyte"))
    label_files = sorted(root.glob("*labels-idx1-ubyte"))
    if len(image_files) != 1 or len(label_files) != 1:
        raise ValueError(
            f"{root}: expected exactly one '*images-idx3-ubyte' and one "
            f"'*labels-idx1-ubyte' file, found {len(image_files)}/{len(label_files)}"
        )
    img_path, lbl_path = image_files[0], label_files[0]
    header = img_path.read_bytes()[:16]
    if len(header) < 16 or header[:4] != b"\x00\x00\x08\x03":
        raise ValueError(f"{img_path}: bad idx3 magic at byte 0")
    n, h, w = (int.from_bytes(header[4 + 4 * i:8 + 4 * i], "big") for i in range(3))
    data = _read_exact(img_path, 16 + n * h * w, 16)
    images = np.frombuffer(data, dtype=np.uint8, offset=16).reshape(n, h, w, 1)
    lbl_header = lbl_path.read_bytes()[:8]
    if len(lbl_header) < 8 or lbl_header[:4] != b"\x00\x00\x08\x01":
        raise ValueError(f"{lbl_path}: bad idx1 magic at byte 0")
    n_lbl = int.from_bytes(lbl_header[4:8], "big")
    if n_lbl != n:
        raise ValueError(f"{lbl_path}: {n_lbl} labels for {n} images")
    lbl_data = _read_exact(lbl_path, 8 + n, 8)
    labels = np.frombuffer(lbl_data, dtype=np.uint8, offset=8).astype(np.int64)
    return images.astype(np.float64) / 255.0, labels


def _ingest_cifar_binary(root: Path) -> tuple[np.ndarray, np.ndarray]:
    record = 1 + 32 * 32 * 3
    files = sorted(root.glob("*.bin"))
    if not files:
        raise ValueError(f"{root}: no .bin files found")
    images_parts, labels_parts = [], []
    for path in files:
        data = path.read_bytes()
        if len(data) == 0 or len(data) % record != 0:
            raise ValueError(
                f"{path}: size {len(data)} is not a positive multiple of the "
                f"{record}-byte record (offset of first partial record: {len(data) - len(data) % record})"
            )
        raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, record)
        labels_parts.append(raw[:, 0].astype(np.int64))
        planar = raw[:, 1:].reshape(-1, 3, 32, 32)
        images_parts.append(planar.transpose(0, 2, 3, 1))
    images = np.concatenate(images_parts).astype(np.float64) / 255.0
    return images, np.concatenate(labels_parts)


def _ingest_image_directory(root: Path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    from PIL import Image

    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise ValueError(f"{root}: no class sub-directories found")
    images, labels = [], []
    for label, class_dir in enumerate(class_dirs):
        for file in sorted(class_dir.iterdir()):
            if file.suffix.lower() not in (".png", ".bmp", ".jpg", ".jpeg"):
                continue
            arr = np.asarray(Image.open(file))
            if arr.ndim == 2:
                arr = arr[..., None]
            images.append(arr.astype(np.float64) / 255.0)
            labels.append(label)
    if not images:
        raise ValueError(f"{root}: class sub-directories contain no images")
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise ValueError(f"{root}: images disagree on shape: {sorted(shapes)}")
    return np.stack(images), np.asarray(labels, dtype=np.int64), [d.name for d in class_dirs]


def ingest_dataset(path, fmt: str, manifest_dir=None) -> ImageDataset:
    """Load a dataset from disk, normalize to [0,1] and write its manifest.

    ``fmt`` is one of "idx", "cifar-binary" or "image-directory".
    Re-ingesting the same data yields an identical manifest (idempotent).
    """
    root = Path(path)
    if not root.exists():
        raise ValueError(f"{root}: path does not exist")
    class_names = None
    if fmt == "idx":
        images, labels = _ingest_idx(root)
    elif fmt == "cifar-binary":
        images, labels = _ingest_cifar_binary(root)
    elif fmt == "image-directory":
        images, labels, class_names = _ingest_image_directory(root)
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    num_classes = int(labels.max()) + 1 if len(labels) else 0
    dataset = ImageDataset(images=images, labels=labels, num_classes=num_classes,
                           name=root.name)
    manifest = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "source_format": fmt,
        "source": str(root),
        "count": len(dataset),
        "image_shape": list(dataset.image_shape),
        "num_classes": num_classes,
        "label_histogram": {str(k): int(v) for k, v in
                            zip(*np.unique(labels, return_counts=True))},
        "content_sha256": dataset.content_hash(),
    }
    if class_names is not None:
        manifest["class_names"] = class_names
    out = Path(manifest_dir) if manifest_dir is not None else root
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{root.name}.manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return dataset


# ---------------------------------------------------------------------------
# Writers (fixtures and export)
# ---------------------------------------------------------------------------


def write_idx_pair(dataset: ImageDataset, directory, prefix: str = "t10k") -> tuple[Path, Path]:
    """Write (grayscale) images and labels in idx format; inverse of idx ingest."""
    if dataset.image_shape[2] != 1:
        raise ValueError("idx export supports single-channel images only")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n, h, w, _ = dataset.images.shape
    pixels = np.round(dataset.images[..., 0] * 255.0).astype(np.uint8)
    img_path = directory / f"{prefix}-images-idx3-ubyte"
    lbl_path = directory / f"{prefix}-labels-idx1-ubyte"
    with open(img_path, "wb") as fh:
        fh.write(b"\x00\x00\x08\x03")
        for dim in (n, h, w):
            fh.write(dim.to_bytes(4, "big"))
        fh.write(pixels.tobytes())
    with open(lbl_path, "wb") as fh:
        fh.write(b"\x00\x00\x08\x01")
        fh.write(n.to_bytes(4, "big"))
        fh.write(dataset.labels.astype(np.uint8).tobytes())
    return img_path, lbl_path


def write_cifar_binary(dataset: ImageDataset, directory, filename: str = "data_batch.bin") -> Path:
    """Write 32x32x3 images in cifar-binary format; inverse of that ingest."""
    if dataset.image_shape != (32, 32, 3):
        raise ValueError("cifar-binary export requires 32x32x3 images")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / filename
    pixels = np.round(dataset.images * 255.0).astype(np.uint8).transpose(0, 3, 1, 2)
    with open(path, "wb") as fh:
        for label, planar in zip(dataset.labels, pixels):
            fh.write(bytes([int(label)]))
            fh.write(planar.tobytes())
    return path
