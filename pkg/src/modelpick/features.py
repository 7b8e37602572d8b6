"""Image feature extraction and min-max feature scaling.

The candidate feature set covers keypoint density, brightness statistics,
contrast, edge shape/orientation histograms, main-object geometry, and a hue
histogram. All detectors are deterministic: a FAST-style corner test for
keypoints, Sobel gradients thresholded at a fraction of the per-image maximum
for edges, and 8-connected components for edge grouping.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .images import RasterImage

# Canonical feature order. Histogram features expand to 7 bins each.
CANDIDATE_FEATURES = (
    "n_keypoints",
    "avg_brightness",
    "brightness_rms",
    "avg_perceived_brightness",
    "perceived_brightness_rms",
    "contrast",
    *[f"edge_length{i}" for i in range(1, 8)],
    *[f"edge_angle{i}" for i in range(1, 8)],
    "area_by_perim",
    "aspect_ratio",
    *[f"hue{i}" for i in range(1, 8)],
)

# Default deployed subset (7 features), in canonical order.
DEFAULT_FEATURES = (
    "n_keypoints",
    "avg_perceived_brightness",
    "contrast",
    "edge_length1",
    "area_by_perim",
    "aspect_ratio",
    "hue1",
)

# Corner test: 16-pixel Bresenham circle of radius 3, contiguous arc of 12
# pixels all brighter than center+t or all darker than center-t.
FAST_THRESHOLD = 20.0
FAST_ARC_LENGTH = 12
_FAST_RING = (
    (-3, 0), (-3, 1), (-2, 2), (-1, 3), (0, 3), (1, 3), (2, 2), (3, 1),
    (3, 0), (3, -1), (2, -2), (1, -3), (0, -3), (-1, -3), (-2, -2), (-3, -1),
)

# Edge pixels: Sobel magnitude >= this fraction of the per-image maximum.
EDGE_MAGNITUDE_FRACTION = 0.25
# Edge-length histogram bins component sizes into [1-2, 3-4, 5-8, 9-16,
# 17-32, 33-64, 65+].
_EDGE_LENGTH_BIN_EDGES = np.array([3, 5, 9, 17, 33, 65])

# Pixels with HSV saturation below this have no meaningful hue.
HUE_SATURATION_MIN = 0.1

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class ScalingError(ValueError):
    """Raised for invalid scaling inputs (empty data, unknown features)."""


def _grayscale(pixels: np.ndarray) -> np.ndarray:
    r = pixels[:, :, 0].astype(np.float64)
    g = pixels[:, :, 1].astype(np.float64)
    b = pixels[:, :, 2].astype(np.float64)
    return 0.299 * r + 0.587 * g + 0.114 * b


def _count_keypoints(gray: np.ndarray) -> int:
    h, w = gray.shape
    if h < 7 or w < 7:
        return 0
    center = gray[3:h - 3, 3:w - 3]
    hi = center + FAST_THRESHOLD
    lo = center - FAST_THRESHOLD
    brighter = np.empty((16,) + center.shape, dtype=bool)
    darker = np.empty_like(brighter)
    for k, (dy, dx) in enumerate(_FAST_RING):
        ring = gray[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx]
        brighter[k] = ring > hi
        darker[k] = ring < lo

    def has_arc(flags):
        # circular runs: extend by FAST_ARC_LENGTH-1 and test all 16 windows
        ext = np.concatenate([flags, flags[:FAST_ARC_LENGTH - 1]], axis=0)
        hit = np.zeros(flags.shape[1:], dtype=bool)
        for start in range(16):
            hit |= np.logical_and.reduce(ext[start:start + FAST_ARC_LENGTH])
        return hit

    corners = has_arc(brighter) | has_arc(darker)
    return int(corners.sum())


def _sobel_gradients(gray: np.ndarray):
    """Sobel gx/gy over interior pixels; border pixels carry no gradient."""
    h, w = gray.shape
    if h < 3 or w < 3:
        empty = np.zeros((max(h - 2, 0), max(w - 2, 0)))
        return empty, empty
    nw = gray[:-2, :-2]
    n = gray[:-2, 1:-1]
    ne = gray[:-2, 2:]
    w_ = gray[1:-1, :-2]
    e = gray[1:-1, 2:]
    sw = gray[2:, :-2]
    s = gray[2:, 1:-1]
    se = gray[2:, 2:]
    gx = (ne + 2.0 * e + se) - (nw + 2.0 * w_ + sw)
    gy = (sw + 2.0 * s + se) - (nw + 2.0 * n + ne)
    return gx, gy


def _edge_features(gray: np.ndarray) -> dict[str, float]:
    out: dict[str, float] = {}
    gx, gy = _sobel_gradients(gray)
    mag = np.sqrt(gx * gx + gy * gy)
    max_mag = mag.max() if mag.size else 0.0
    if max_mag > 0.0:
        edge_mask = mag >= EDGE_MAGNITUDE_FRACTION * max_mag
    else:
        edge_mask = np.zeros(mag.shape, dtype=bool)

    # orientation histogram over edge pixels, gradient angle folded to [0, 180)
    n_edge = int(edge_mask.sum())
    angle_hist = np.zeros(7)
    if n_edge:
        theta = np.degrees(np.arctan2(gy[edge_mask], gx[edge_mask])) % 180.0
        bins = np.minimum((theta / (180.0 / 7.0)).astype(np.int64), 6)
        angle_hist = np.bincount(bins, minlength=7) / n_edge
    for i in range(7):
        out[f"edge_angle{i + 1}"] = float(angle_hist[i])

    labels, n_components = ndimage.label(edge_mask, structure=_EIGHT_CONNECTED)
    length_hist = np.zeros(7)
    if n_components:
        sizes = np.bincount(labels.ravel())[1:]  # skip background
        bins = np.digitize(sizes, _EDGE_LENGTH_BIN_EDGES)
        length_hist = np.bincount(bins, minlength=7) / n_components
    for i in range(7):
        out[f"edge_length{i + 1}"] = float(length_hist[i])

    # main object: largest component (ties: first label in raster order)
    if n_components:
        main_label = int(np.argmax(sizes)) + 1
        comp = labels == main_label
        area = int(sizes[main_label - 1])
        padded = np.pad(comp, 1, constant_values=False)
        interior = (
            padded[:-2, 1:-1] & padded[2:, 1:-1]
            & padded[1:-1, :-2] & padded[1:-1, 2:]
        )
        perimeter = int((comp & ~interior).sum())
        rows, cols = np.nonzero(comp)
        bbox_w = int(cols.max() - cols.min()) + 1
        bbox_h = int(rows.max() - rows.min()) + 1
        out["area_by_perim"] = area / perimeter
        out["aspect_ratio"] = bbox_w / bbox_h
    else:
        out["area_by_perim"] = 0.0
        out["aspect_ratio"] = 1.0
    return out


def _hue_histogram(pixels: np.ndarray) -> np.ndarray:
    r = pixels[:, :, 0].astype(np.float64).ravel()
    g = pixels[:, :, 1].astype(np.float64).ravel()
    b = pixels[:, :, 2].astype(np.float64).ravel()
    mx = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    delta = mx - mn
    sat = np.zeros_like(mx)
    np.divide(delta, mx, out=sat, where=mx > 0.0)
    keep = sat >= HUE_SATURATION_MIN
    n_kept = int(keep.sum())
    if n_kept == 0:
        return np.zeros(7)
    r, g, b, mx, delta = r[keep], g[keep], b[keep], mx[keep], delta[keep]
    hue = np.empty_like(mx)
    is_r = mx == r
    is_g = ~is_r & (mx == g)
    is_b = ~is_r & ~is_g
    hue[is_r] = (60.0 * ((g[is_r] - b[is_r]) / delta[is_r])) % 360.0
    hue[is_g] = 60.0 * ((b[is_g] - r[is_g]) / delta[is_g] + 2.0)
    hue[is_b] = 60.0 * ((r[is_b] - g[is_b]) / delta[is_b] + 4.0)
    bins = np.minimum((hue / (360.0 / 7.0)).astype(np.int64), 6)
    return np.bincount(bins, minlength=7) / n_kept


def extract_features(image: RasterImage) -> dict[str, float]:
    """Extract all candidate features, keyed in canonical order.

    Deterministic: identical pixel data always yields identical values.
    """
    pixels = image.pixels
    gray = _grayscale(pixels)

    r = pixels[:, :, 0].astype(np.float64)
    g = pixels[:, :, 1].astype(np.float64)
    b = pixels[:, :, 2].astype(np.float64)
    perceived_sq = 0.241 * (r * r) + 0.691 * (g * g) + 0.068 * (b * b)
    perceived = np.sqrt(perceived_sq)

    feats: dict[str, float] = {
        "n_keypoints": float(_count_keypoints(gray)),
        "avg_brightness": float(gray.mean()),
        "brightness_rms": float(np.sqrt((gray * gray).mean())),
        "avg_perceived_brightness": float(perceived.mean()),
        "perceived_brightness_rms": float(np.sqrt(perceived_sq.mean())),
        "contrast": float(gray.std()),
    }
    feats.update(_edge_features(gray))
    hue_hist = _hue_histogram(pixels)
    for i in range(7):
        feats[f"hue{i + 1}"] = float(hue_hist[i])
    return {name: feats[name] for name in CANDIDATE_FEATURES}


def feature_matrix(feature_dicts, names=CANDIDATE_FEATURES) -> np.ndarray:
    """Stack per-image feature dicts into an (n, len(names)) array."""
    return np.array([[d[n] for n in names] for d in feature_dicts], dtype=np.float64)


@dataclass(frozen=True)
class ScalingRanges:
    """Per-feature (min, max) learned from training data."""

    names: tuple[str, ...]
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if np.any(self.lo > self.hi):
            raise ScalingError("per-feature min exceeds max")

    def to_dict(self) -> dict[str, list[float]]:
        return {n: [float(l), float(h)] for n, l, h in zip(self.names, self.lo, self.hi)}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingRanges":
        names = tuple(d)
        lo = np.array([d[n][0] for n in names], dtype=np.float64)
        hi = np.array([d[n][1] for n in names], dtype=np.float64)
        return cls(names, lo, hi)


def fit_ranges(X: np.ndarray, names) -> ScalingRanges:
    """Record per-feature min/max over the training rows of X."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ScalingError("fit_ranges needs a nonempty (n, d) matrix")
    if X.shape[1] != len(names):
        raise ScalingError(f"matrix has {X.shape[1]} columns, {len(names)} names given")
    return ScalingRanges(tuple(names), X.min(axis=0), X.max(axis=0))


def scale(X: np.ndarray, ranges: ScalingRanges) -> np.ndarray:
    """Min-max scale rows of X to [0, 1] using training-set extrema.

    Values outside the training range clamp to the nearest endpoint. A
    feature that was constant in training maps to 0.5.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != len(ranges.names):
        raise ScalingError(
            f"vector has {X.shape[1]} features, ranges cover {len(ranges.names)}"
        )
    span = ranges.hi - ranges.lo
    out = np.full(X.shape, 0.5)
    nz = span > 0
    out[:, nz] = np.clip((X[:, nz] - ranges.lo[nz]) / span[nz], 0.0, 1.0)
    return out


@dataclass
class FeatureTable:
    """Feature vectors for a corpus, one row per image."""

    image_ids: list[str]
    names: tuple[str, ...]
    values: np.ndarray  # (n_images, n_features)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.image_ids), len(self.names)):
            raise ValueError("feature table shape does not match ids/names")
        self._row_of = {img: i for i, img in enumerate(self.image_ids)}
        if len(self._row_of) != len(self.image_ids):
            raise ValueError("duplicate image_id in feature table")

    def row(self, image_id: str) -> np.ndarray:
        return self.values[self._row_of[image_id]]

    def rows(self, image_ids) -> np.ndarray:
        return self.values[[self._row_of[i] for i in image_ids]]

    def select(self, names) -> "FeatureTable":
        """Project onto a feature subset, preserving the given order."""
        missing = [n for n in names if n not in self.names]
        if missing:
            raise ValueError(f"features not in table: {missing}")
        cols = [self.names.index(n) for n in names]
        return FeatureTable(list(self.image_ids), tuple(names), self.values[:, cols])


def write_features_csv(path, table: FeatureTable) -> None:
    """Write a feature CSV: header of names, one row per image_id."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", *table.names])
        for img, row in zip(table.image_ids, table.values):
            writer.writerow([img, *[repr(float(v)) for v in row]])


def read_features_csv(path) -> FeatureTable:
    with Path(path).open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "image_id":
            raise ValueError(f"{path}: feature CSV must start with image_id column")
        names = tuple(header[1:])
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names) + 1:
                raise ValueError(f"{path}:{lineno}: expected {len(names) + 1} cells")
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    values = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(names)))
    return FeatureTable(ids, names, values)
