"""Salient-region mask construction.

The attack perturbs only inside a binary mask built in three steps:
a saliency map highlights decision-relevant pixels, a graph-based
segmenter proposes regions that follow natural image boundaries, and the
top-k regions by saliency overlap (together with the uncovered-pixel
candidate U) are unioned into the final mask.  Ablation baselines
(independent random pixels, random region subsets) live here too.

Everything in this module is a pure function of its inputs; masks are
exactly {0,1}-valued uint8 arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .models import (
    Classifier,
    last_conv_activations_and_gradients,
    loss_and_input_gradient,
    supports_conv_saliency,
)

__all__ = [
    "SaliencyMap",
    "RegionProposal",
    "RegionProposalSet",
    "SalientRegionMask",
    "gradcam",
    "input_gradient_saliency",
    "saliency_for",
    "propose_regions",
    "default_min_area",
    "save_region_proposals",
    "load_region_proposals",
    "unmask_candidate",
    "overlap_score",
    "select_salient_region_mask",
    "random_pixel_mask",
    "random_region_mask",
    "full_frame_mask",
]

REGION_FILE_MAGIC = "certspoof-regions v1"


@dataclass(frozen=True)
class SaliencyMap:
    """Per-pixel saliency in [0,1]; max is 1 unless the map is all zero."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise ValueError(f"saliency map must be 2-D, got shape {v.shape}")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("saliency values must lie in [0,1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class RegionProposal:
    """A binary region mask with its pixel count."""

    mask: np.ndarray
    area: int

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "RegionProposal":
        mask = np.ascontiguousarray(mask, dtype=np.uint8)
        return cls(mask=mask, area=int(mask.sum()))

    def __post_init__(self):
        if self.mask.ndim != 2:
            raise ValueError("region mask must be 2-D")
        if not np.isin(self.mask, (0, 1)).all():
            raise ValueError("region mask must be binary")
        if self.area != int(self.mask.sum()):
            raise ValueError("declared area disagrees with the mask")


@dataclass(frozen=True)
class RegionProposalSet:
    proposals: tuple[RegionProposal, ...]
    image_shape: tuple[int, int]

    def __post_init__(self):
        for i, p in enumerate(self.proposals):
            if p.mask.shape != tuple(self.image_shape):
                raise ValueError(
                    f"proposal {i} has shape {p.mask.shape}, expected {tuple(self.image_shape)}"
                )

    def __len__(self) -> int:
        return len(self.proposals)


@dataclass(frozen=True)
class SalientRegionMask:
    """Binarized union of the selected region proposals (index ``len(proposals)``
    denotes the uncovered-pixel candidate U)."""

    mask: np.ndarray
    selected: tuple[int, ...]
    k: int

    def __post_init__(self):
        if not np.isin(self.mask, (0, 1)).all():
            raise ValueError("mask must be binary")

    @property
    def area(self) -> int:
        return int(self.mask.sum())


def full_frame_mask(shape: tuple[int, int]) -> SalientRegionMask:
    """Mask covering every pixel; the unmasked-attack baseline."""
    return SalientRegionMask(mask=np.ones(shape, dtype=np.uint8), selected=(), k=0)


# ---------------------------------------------------------------------------
# Saliency maps
# ---------------------------------------------------------------------------


def _normalize_map(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros_like(values) if hi == 0.0 else np.ones_like(values)
    return (values - lo) / (hi - lo)


def _bilinear_resize(values: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Half-pixel-centered bilinear resize of a 2-D array."""
    h, w = values.shape
    out_h, out_w = out_shape
    if (h, w) == (out_h, out_w):
        return values.astype(np.float64, copy=True)
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    v = values.astype(np.float64)
    top = v[np.ix_(y0, x0)] * (1 - wx) + v[np.ix_(y0, x1)] * wx
    bottom = v[np.ix_(y1, x0)] * (1 - wx) + v[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


def combine_class_activation(acts: np.ndarray, grads: np.ndarray,
                             out_shape: tuple[int, int]) -> np.ndarray:
    """Weight feature maps by their spatially pooled gradients, rectify,
    upsample and min-max normalize."""
    weights = grads.mean(axis=(1, 2))
    cam = np.maximum(np.tensordot(weights, acts, axes=1), 0.0)
    return _normalize_map(_bilinear_resize(cam, out_shape))


def gradcam(clf: Classifier, x: np.ndarray, y: int) -> SaliencyMap:
    """Class-activation saliency from the last conv layer's feature maps.

    :raises TypeError: if the classifier exposes no convolutional layer
    """
    acts, grads = last_conv_activations_and_gradients(clf, x, y)
    return SaliencyMap(combine_class_activation(acts, grads, x.shape[:2]))


def input_gradient_saliency(clf: Classifier, x: np.ndarray, y: int) -> SaliencyMap:
    """Channel-wise L2 magnitude of the input gradient, scaled so the
    maximum is 1 (zero map for a vanishing gradient).  Works for any
    classifier; the fallback when class-activation maps are unavailable."""
    _, grad = loss_and_input_gradient(clf, x, y)
    magnitude = np.sqrt((grad ** 2).sum(axis=2))
    peak = float(magnitude.max())
    if peak == 0.0:
        return SaliencyMap(np.zeros_like(magnitude))
    return SaliencyMap(magnitude / peak)


def saliency_for(clf: Classifier, x: np.ndarray, y: int) -> SaliencyMap:
    """Class-activation saliency when the classifier supports it, else the
    input-gradient fallback."""
    if supports_conv_saliency(clf):
        return gradcam(clf, x, y)
    return input_gradient_saliency(clf, x, y)


# ---------------------------------------------------------------------------
# Region proposals: greedy graph merging on color similarity
# ---------------------------------------------------------------------------


def default_min_area(shape: tuple[int, int]) -> int:
    """Minimum region area: 0.6% of the frame, the fraction a 300-pixel
    floor occupies at 224x224."""
    return int(np.ceil(0.006 * shape[0] * shape[1]))


class _UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:  # path compression
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> int:
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        return a


def _segment_labels(image: np.ndarray, scale: float) -> np.ndarray:
    """Greedy merge of 4-connected pixels in color-difference order.

    Components a, b joined by an edge of weight w merge when w does not
    exceed min over both of (largest internal difference + scale/size);
    the classic adaptive criterion, evaluated in a deterministic order.
    """
    h, w = image.shape[:2]
    flat = image.reshape(h * w, -1).astype(np.float64)
    idx = np.arange(h * w).reshape(h, w)
    pairs = []
    if w > 1:
        pairs.append((idx[:, :-1].ravel(), idx[:, 1:].ravel()))
    if h > 1:
        pairs.append((idx[:-1, :].ravel(), idx[1:, :].ravel()))
    if not pairs:
        return np.zeros((h, w), dtype=np.int64)
    ends_a = np.concatenate([p[0] for p in pairs])
    ends_b = np.concatenate([p[1] for p in pairs])
    weights = np.linalg.norm(flat[ends_a] - flat[ends_b], axis=1)
    order = np.argsort(weights, kind="stable")
    uf = _UnionFind(h * w)
    internal = np.zeros(h * w)
    for e in order:
        a = uf.find(int(ends_a[e]))
        b = uf.find(int(ends_b[e]))
        if a == b:
            continue
        weight = weights[e]
        thr_a = internal[a] + scale / uf.size[a]
        thr_b = internal[b] + scale / uf.size[b]
        if weight <= min(thr_a, thr_b):
            root = uf.union(a, b)
            internal[root] = weight
    labels = np.fromiter((uf.find(i) for i in range(h * w)), dtype=np.int64, count=h * w)
    return labels.reshape(h, w)


def propose_regions(x: np.ndarray, min_area: int | None = None,
                    scale: float = 0.3, presmooth: float = 0.8) -> RegionProposalSet:
    """Segment the image and keep every component of at least ``min_area``
    pixels as a binary region proposal.

    The image is pre-smoothed with a Gaussian of width ``presmooth`` so
    pixel noise does not shatter flat areas (pass 0 to merge on raw
    colors).  Proposals are pairwise disjoint, ordered by the raster
    position of their first pixel, and deterministic for a given image.
    Pixels in smaller components stay uncovered (they belong to the
    unmask candidate).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[..., None]
    shape = x.shape[:2]
    if min_area is None:
        min_area = default_min_area(shape)
    if min_area < 1:
        raise ValueError(f"min_area must be >= 1, got {min_area}")
    if presmooth > 0:
        from scipy.ndimage import gaussian_filter

        x = gaussian_filter(x, sigma=(presmooth, presmooth, 0.0), mode="nearest")
    labels = _segment_labels(x, scale)
    proposals = []
    seen: set[int] = set()
    for root in labels.ravel():  # raster order of first occurrence
        root = int(root)
        if root in seen:
            continue
        seen.add(root)
        mask = (labels == root).astype(np.uint8)
        area = int(mask.sum())
        if area >= min_area:
            proposals.append(RegionProposal(mask=mask, area=area))
    return RegionProposalSet(proposals=tuple(proposals), image_shape=shape)


# ---------------------------------------------------------------------------
# Region-proposal files (run-length encoded, bit-exact round-trip)
# ---------------------------------------------------------------------------


def _encode_runs(mask: np.ndarray) -> list[int]:
    flat = mask.ravel()
    runs = [0]  # first run counts zeros and may be empty
    current = 0
    for v in flat:
        if v == current:
            runs[-1] += 1
        else:
            current = 1 - current
            runs.append(1)
    return runs


def _decode_runs(runs: list[int], size: int) -> np.ndarray:
    total = sum(runs)
    if total != size:
        raise ValueError(f"run lengths sum to {total}, expected {size}")
    flat = np.zeros(size, dtype=np.uint8)
    pos = 0
    value = 0
    for run in runs:
        if run < 0:
            raise ValueError("negative run length")
        if value:
            flat[pos:pos + run] = 1
        pos += run
        value = 1 - value
    return flat


def save_region_proposals(props: RegionProposalSet, path) -> None:
    h, w = props.image_shape
    lines = [REGION_FILE_MAGIC, f"shape {h} {w}", f"count {len(props)}"]
    for i, p in enumerate(props.proposals):
        runs = _encode_runs(p.mask)
        lines.append(f"region {i} area {p.area} runs {len(runs)}")
        lines.append(" ".join(str(r) for r in runs))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_region_proposals(path, image_shape: tuple[int, int],
                          min_area: int = 1) -> RegionProposalSet:
    """Read region proposals, validating shape and minimum area.

    External masks may overlap.  Malformed files and shape mismatches
    raise ``ValueError`` with a description of the offending line.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != REGION_FILE_MAGIC:
        raise ValueError(f"{path}: not a region-proposal file (missing magic header)")
    try:
        shape_tokens = lines[1].split()
        count_tokens = lines[2].split()
        if shape_tokens[0] != "shape" or count_tokens[0] != "count":
            raise IndexError
        h, w = int(shape_tokens[1]), int(shape_tokens[2])
        count = int(count_tokens[1])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed header") from exc
    if (h, w) != tuple(image_shape):
        raise ValueError(f"{path}: file shape {(h, w)} does not match image shape {tuple(image_shape)}")
    proposals = []
    cursor = 3
    for i in range(count):
        if cursor + 1 >= len(lines):
            raise ValueError(f"{path}: truncated before region {i}")
        try:
            header = lines[cursor].split()
            if header[0] != "region":
                raise IndexError
            declared_area = int(header[3])
            n_runs = int(header[5])
            runs = [int(tok) for tok in lines[cursor + 1].split()]
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}: malformed region block at line {cursor + 1}") from exc
        if len(runs) != n_runs:
            raise ValueError(f"{path}: region {i} declares {n_runs} runs, found {len(runs)}")
        mask = _decode_runs(runs, h * w).reshape(h, w)
        area = int(mask.sum())
        if area != declared_area:
            raise ValueError(f"{path}: region {i} area {area} disagrees with declared {declared_area}")
        if area < min_area:
            raise ValueError(f"{path}: region {i} area {area} below minimum {min_area}")
        proposals.append(RegionProposal(mask=mask, area=area))
        cursor += 2
    return RegionProposalSet(proposals=tuple(proposals), image_shape=(h, w))


# ---------------------------------------------------------------------------
# Scoring and selection
# ---------------------------------------------------------------------------


def unmask_candidate(props: RegionProposalSet) -> RegionProposal:
    """Pixels covered by no proposal; may be empty."""
    union = np.zeros(props.image_shape, dtype=np.uint8)
    for p in props.proposals:
        union |= p.mask
    mask = (1 - union).astype(np.uint8)
    return RegionProposal(mask=mask, area=int(mask.sum()))


def overlap_score(region: RegionProposal | np.ndarray, saliency: SaliencyMap | np.ndarray) -> float:
    """Saliency overlap: sum(M * S) / (sum(M) + sum(S)), in [0, 1).

    Defined as 0 when both the region and the map are empty, so empty
    candidates are never preferred.
    """
    mask = region.mask if isinstance(region, RegionProposal) else np.asarray(region)
    values = saliency.values if isinstance(saliency, SaliencyMap) else np.asarray(saliency)
    if mask.shape != values.shape:
        raise ValueError(f"shape mismatch: region {mask.shape} vs saliency {values.shape}")
    denominator = float(mask.sum()) + float(values.sum())
    if denominator == 0.0:
        return 0.0
    return float((mask * values).sum()) / denominator


def select_salient_region_mask(props: RegionProposalSet, saliency: SaliencyMap,
                               k: int = 5) -> SalientRegionMask:
    """Union of the k candidates (proposals plus U) with the highest
    overlap scores.

    Ties break toward the larger area, then the lower candidate index; U
    carries index ``len(props)``.  When fewer than k candidates exist,
    all are used.  The union is binarized.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    candidates = list(props.proposals) + [unmask_candidate(props)]
    ranked = sorted(
        range(len(candidates)),
        key=lambda i: (-overlap_score(candidates[i], saliency), -candidates[i].area, i),
    )
    chosen = tuple(sorted(ranked[:k]))
    mask = np.zeros(props.image_shape, dtype=np.uint8)
    for i in chosen:
        mask |= candidates[i].mask
    return SalientRegionMask(mask=mask, selected=chosen, k=k)


def random_pixel_mask(shape: tuple[int, int], p: float, seed: int) -> SalientRegionMask:
    """Each pixel independently kept with probability p; ablation baseline."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0,1], got {p}")
    rng = make_rng(seed)
    mask = (rng.random(tuple(shape)) < p).astype(np.uint8)
    return SalientRegionMask(mask=mask, selected=(), k=0)


def random_region_mask(props: RegionProposalSet, k: int, seed: int) -> SalientRegionMask:
    """Union of k distinct proposals drawn uniformly at random (all of
    them when fewer exist); ablation baseline."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(props) == 0:
        raise ValueError("cannot sample regions from an empty proposal set")
    rng = make_rng(seed)
    take = min(k, len(props))
    chosen = tuple(sorted(int(i) for i in rng.choice(len(props), size=take, replace=False)))
    mask = np.zeros(props.image_shape, dtype=np.uint8)
    for i in chosen:
        mask |= props.proposals[i].mask
    return SalientRegionMask(mask=mask, selected=chosen, k=k)
