"""Seeded synthetic profile and feature generation for tests and demos.

Two modes. `staged` plants exact marginal-coverage sets: model i is correct
on a disjoint slice of the corpus sized by its `new_coverage` fraction, so
walkthrough proportions (which model is optimal how often, how much each
addition fixes) are embedded by construction. `random` draws per-image
correctness independently from per-model accuracy rates.

Feature vectors are drawn around a per-group center so images sharing an
optimum model cluster in feature space and a nearest-neighbor front model
has something to learn.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import stage_rng
from .features import DEFAULT_FEATURES, FeatureTable
from .profiles import ClassifierProfile


class SynthSpecError(ValueError):
    pass


@dataclass
class SynthModelSpec:
    model_id: str
    latency_s: float
    new_coverage: float | None = None   # staged: fraction of corpus this model newly covers
    accuracy_top1: float | None = None  # random mode
    accuracy_top5: float | None = None
    latency_jitter: float = 0.0         # +/- fraction of latency_s, uniform


@dataclass
class SynthSpec:
    n_images: int
    mode: str  # "staged" | "random"
    models: list[SynthModelSpec]
    feature_names: tuple[str, ...] = DEFAULT_FEATURES
    feature_noise: float = 0.08
    with_energy: bool = False

    def __post_init__(self):
        if self.n_images < 1:
            raise SynthSpecError("n_images must be >= 1")
        if self.mode not in ("staged", "random"):
            raise SynthSpecError(f"unknown mode {self.mode!r}")
        if not self.models:
            raise SynthSpecError("at least one model required")
        ids = [m.model_id for m in self.models]
        if len(set(ids)) != len(ids):
            raise SynthSpecError("duplicate model_id in spec")
        for m in self.models:
            if m.latency_s <= 0:
                raise SynthSpecError(f"{m.model_id}: latency must be positive")
        if self.mode == "staged":
            shares = [m.new_coverage for m in self.models]
            if any(s is None or not 0 <= s <= 1 for s in shares):
                raise SynthSpecError("staged mode needs new_coverage in [0,1] per model")
            if sum(shares) > 1.0 + 1e-12:
                raise SynthSpecError(f"coverage shares sum to {sum(shares):.4f} > 1")
        else:
            for m in self.models:
                a1, a5 = m.accuracy_top1, m.accuracy_top5
                if a1 is None or not 0 <= a1 <= 1:
                    raise SynthSpecError(f"{m.model_id}: accuracy_top1 in [0,1] required")
                if a5 is None:
                    m.accuracy_top5 = a5 = min(1.0, a1 + (1 - a1) * 0.5)
                if not a1 <= a5 <= 1:
                    raise SynthSpecError(f"{m.model_id}: need accuracy_top1 <= accuracy_top5 <= 1")

    @classmethod
    def from_json_dict(cls, d: dict) -> "SynthSpec":
        models = [
            SynthModelSpec(
                model_id=m["model_id"],
                latency_s=float(m["latency_s"]),
                new_coverage=m.get("new_coverage"),
                accuracy_top1=m.get("accuracy_top1"),
                accuracy_top5=m.get("accuracy_top5"),
                latency_jitter=float(m.get("latency_jitter", 0.0)),
            )
            for m in d["models"]
        ]
        return cls(
            n_images=int(d["n_images"]),
            mode=d.get("mode", "staged"),
            models=models,
            feature_names=tuple(d.get("feature_names", DEFAULT_FEATURES)),
            feature_noise=float(d.get("feature_noise", 0.08)),
            with_energy=bool(d.get("with_energy", False)),
        )


def load_synth_spec(path) -> SynthSpec:
    with Path(path).open("r", encoding="utf-8") as fh:
        return SynthSpec.from_json_dict(json.load(fh))


def _latencies(spec: SynthSpec, rng) -> np.ndarray:
    n, m = spec.n_images, len(spec.models)
    lat = np.empty((n, m))
    for j, ms in enumerate(spec.models):
        if ms.latency_jitter > 0:
            jitter = rng.uniform(-ms.latency_jitter, ms.latency_jitter, size=n)
            lat[:, j] = ms.latency_s * (1.0 + jitter)
        else:
            lat[:, j] = ms.latency_s
    return np.maximum(lat, 1e-9)


def generate(spec: SynthSpec, seed: int) -> tuple[ClassifierProfile, FeatureTable]:
    """Generate a (profile, features) bundle; byte-stable for a given seed."""
    rng = stage_rng(seed, "synth")
    n, m = spec.n_images, len(spec.models)
    image_ids = [f"img{i:06d}" for i in range(n)]
    model_ids = [ms.model_id for ms in spec.models]

    correct_top1 = np.zeros((n, m), dtype=bool)
    if spec.mode == "staged":
        order = rng.permutation(n)
        start = 0
        group = np.full(n, -1)  # index of the model whose slice covers the image
        for j, ms in enumerate(spec.models):
            count = int(round(ms.new_coverage * n))
            slice_ = order[start:start + count]
            correct_top1[slice_, j] = True
            group[slice_] = j
            start += count
        correct_top5 = correct_top1.copy()
    else:
        for j, ms in enumerate(spec.models):
            correct_top1[:, j] = rng.random(n) < ms.accuracy_top1
        correct_top5 = correct_top1.copy()
        for j, ms in enumerate(spec.models):
            a1, a5 = ms.accuracy_top1, ms.accuracy_top5
            extra = (a5 - a1) / (1 - a1) if a1 < 1 else 0.0
            misses = ~correct_top1[:, j]
            correct_top5[misses, j] |= rng.random(int(misses.sum())) < extra
        # group by optimum under top1 for feature clustering
        masked = np.where(correct_top1, _nominal_latency(spec), np.inf)
        group = np.argmin(masked, axis=1)
        group[~correct_top1.any(axis=1)] = -1

    latency = _latencies(spec, rng)
    energy = None
    if spec.with_energy:
        energy = latency * rng.uniform(4.0, 6.0, size=(n, m))  # joules ~ watts x seconds

    profile = ClassifierProfile(image_ids, model_ids, correct_top1, correct_top5,
                                latency, energy)

    d = len(spec.feature_names)
    centers = rng.uniform(0.15, 0.85, size=(m + 1, d))  # last row: no-model group
    feats = np.empty((n, d))
    for i in range(n):
        c = centers[group[i]] if group[i] >= 0 else centers[m]
        feats[i] = c + rng.normal(0.0, spec.feature_noise, size=d)
    feats = np.clip(feats, 0.0, 1.0)
    table = FeatureTable(image_ids, spec.feature_names, feats)
    return profile, table


def _nominal_latency(spec: SynthSpec) -> np.ndarray:
    return np.array([ms.latency_s for ms in spec.models])
