"""Classifier performance profiles: per-image, per-model correctness and cost.

A profile stands in for exhaustively running every candidate classifier over
a corpus. From it we derive, per image, the optimum model: the cheapest one
that is correct under the chosen scoring criterion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

NO_MODEL = ""  # label sentinel for images no classifier handles


class Criterion(Enum):
    TOP1 = "top1"
    TOP5 = "top5"

    @classmethod
    def parse(cls, text: str) -> "Criterion":
        try:
            return cls(text.lower())
        except ValueError:
            raise ValueError(f"unknown criterion {text!r}, expected top1 or top5") from None


class ProfileError(ValueError):
    """Raised when a profile file is malformed or inconsistent."""


@dataclass
class ClassifierProfile:
    """Dense matrix of correctness and latency, images x models."""

    image_ids: list[str]
    model_ids: list[str]
    correct_top1: np.ndarray  # bool (n_images, n_models)
    correct_top5: np.ndarray  # bool (n_images, n_models)
    latency: np.ndarray       # float seconds, positive
    energy: np.ndarray | None = None  # float joules, optional

    def __post_init__(self):
        n, m = len(self.image_ids), len(self.model_ids)
        for name in ("correct_top1", "correct_top5", "latency"):
            if getattr(self, name).shape != (n, m):
                raise ProfileError(f"{name} shape mismatch, expected ({n}, {m})")
        if self.energy is not None and self.energy.shape != (n, m):
            raise ProfileError(f"energy shape mismatch, expected ({n}, {m})")
        if np.any(self.latency <= 0):
            raise ProfileError("latencies must be positive")
        if np.any(self.correct_top1 & ~self.correct_top5):
            raise ProfileError("correct_top1 implies correct_top5; profile violates this")
        self._img_index = {img: i for i, img in enumerate(self.image_ids)}
        self._model_index = {mid: j for j, mid in enumerate(self.model_ids)}

    @property
    def n_images(self) -> int:
        return len(self.image_ids)

    def correct(self, criterion: Criterion) -> np.ndarray:
        return self.correct_top1 if criterion is Criterion.TOP1 else self.correct_top5

    def model_index(self, model_id: str) -> int:
        return self._model_index[model_id]

    def image_index(self, image_id: str) -> int:
        return self._img_index[image_id]

    def subset(self, image_ids) -> "ClassifierProfile":
        """Restrict to the given images, preserving model order."""
        rows = [self._img_index[i] for i in image_ids]
        return ClassifierProfile(
            image_ids=list(image_ids),
            model_ids=list(self.model_ids),
            correct_top1=self.correct_top1[rows],
            correct_top5=self.correct_top5[rows],
            latency=self.latency[rows],
            energy=None if self.energy is None else self.energy[rows],
        )


@dataclass(frozen=True)
class OptimumLabel:
    image_id: str
    model_id: str | None  # None when no model is correct


_PROFILE_COLUMNS = ["image_id", "model_id", "correct_top1", "correct_top5", "latency_s"]


def _parse_bool(cell: str, lineno: int, column: str) -> bool:
    if cell == "0":
        return False
    if cell == "1":
        return True
    raise ProfileError(f"row {lineno}: {column} must be 0 or 1, got {cell!r}")


def load_profile(path) -> ClassifierProfile:
    """Load a profile CSV, validating density and per-row consistency."""
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ProfileError(f"{path}: empty file")
        has_energy = header == _PROFILE_COLUMNS + ["energy_j"]
        if not has_energy and header != _PROFILE_COLUMNS:
            raise ProfileError(f"{path}: unexpected header {header}")

        image_ids: list[str] = []
        model_ids: list[str] = []
        seen_images: set[str] = set()
        seen_models: set[str] = set()
        records: dict[tuple[str, str], tuple] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ProfileError(f"row {lineno}: expected {len(header)} cells, got {len(row)}")
            img, mid = row[0], row[1]
            t1 = _parse_bool(row[2], lineno, "correct_top1")
            t5 = _parse_bool(row[3], lineno, "correct_top5")
            if t1 and not t5:
                raise ProfileError(f"row {lineno}: correct_top1=1 with correct_top5=0")
            try:
                lat = float(row[4])
            except ValueError:
                raise ProfileError(f"row {lineno}: bad latency {row[4]!r}") from None
            if not lat > 0:
                raise ProfileError(f"row {lineno}: latency must be positive, got {lat}")
            eng = None
            if has_energy:
                try:
                    eng = float(row[5])
                except ValueError:
                    raise ProfileError(f"row {lineno}: bad energy {row[5]!r}") from None
                if eng < 0:
                    raise ProfileError(f"row {lineno}: energy must be >= 0, got {eng}")
            if (img, mid) in records:
                raise ProfileError(f"row {lineno}: duplicate record for ({img}, {mid})")
            records[(img, mid)] = (t1, t5, lat, eng)
            if img not in seen_images:
                seen_images.add(img)
                image_ids.append(img)
            if mid not in seen_models:
                seen_models.add(mid)
                model_ids.append(mid)

    if not records:
        raise ProfileError(f"{path}: no records")
    n, m = len(image_ids), len(model_ids)
    if len(records) != n * m:
        missing = [
            (img, mid)
            for img in image_ids
            for mid in model_ids
            if (img, mid) not in records
        ]
        raise ProfileError(
            f"{path}: profile not dense, missing {len(missing)} cells, first: {missing[0]}"
        )
    correct_top1 = np.zeros((n, m), dtype=bool)
    correct_top5 = np.zeros((n, m), dtype=bool)
    latency = np.zeros((n, m), dtype=np.float64)
    energy = np.zeros((n, m), dtype=np.float64) if has_energy else None
    for i, img in enumerate(image_ids):
        for j, mid in enumerate(model_ids):
            t1, t5, lat, eng = records[(img, mid)]
            correct_top1[i, j] = t1
            correct_top5[i, j] = t5
            latency[i, j] = lat
            if energy is not None:
                energy[i, j] = eng
    return ClassifierProfile(image_ids, model_ids, correct_top1, correct_top5, latency, energy)


def save_profile(path, profile: ClassifierProfile) -> None:
    header = _PROFILE_COLUMNS + (["energy_j"] if profile.energy is not None else [])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, img in enumerate(profile.image_ids):
            for j, mid in enumerate(profile.model_ids):
                row = [
                    img,
                    mid,
                    int(profile.correct_top1[i, j]),
                    int(profile.correct_top5[i, j]),
                    repr(float(profile.latency[i, j])),
                ]
                if profile.energy is not None:
                    row.append(repr(float(profile.energy[i, j])))
                writer.writerow(row)


def optimum_label_indices(profile: ClassifierProfile, criterion: Criterion) -> np.ndarray:
    """Per-image index of the fastest correct model, -1 when none is correct.

    Latency ties break toward the earlier model in profile order.
    """
    correct = profile.correct(criterion)
    masked = np.where(correct, profile.latency, np.inf)
    idx = np.argmin(masked, axis=1)  # first minimum wins ties
    idx[~correct.any(axis=1)] = -1
    return idx


def optimum_labels(profile: ClassifierProfile, criterion: Criterion) -> list[OptimumLabel]:
    """One label per image: the optimum model, or None if all models fail."""
    idx = optimum_label_indices(profile, criterion)
    return [
        OptimumLabel(img, profile.model_ids[j] if j >= 0 else None)
        for img, j in zip(profile.image_ids, idx)
    ]


def label_array(profile: ClassifierProfile, criterion: Criterion) -> np.ndarray:
    """Optimum labels as a string array, NO_MODEL for unhandled images."""
    idx = optimum_label_indices(profile, criterion)
    models = np.array(profile.model_ids + [NO_MODEL], dtype=object)
    return models[idx]


def oracle_accuracy(profile: ClassifierProfile, criterion: Criterion) -> float:
    """Fraction of images at least one model classifies correctly."""
    return float(profile.correct(criterion).any(axis=1).mean())


def write_labels_csv(path, labels: list[OptimumLabel]) -> None:
    """Label CSV: image_id,model_id with an empty cell for unhandled images."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "model_id"])
        for lab in labels:
            writer.writerow([lab.image_id, lab.model_id or ""])


def read_labels_csv(path) -> list[OptimumLabel]:
    with Path(path).open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image_id", "model_id"]:
            raise ProfileError(f"{path}: unexpected labels header {header}")
        return [OptimumLabel(row[0], row[1] or None) for row in reader if row]
