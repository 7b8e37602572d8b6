"""Cascaded KNN front model.

One binary decider per selected classifier, evaluated in selection order over
a single shared training matrix. The K nearest neighbors are computed once
per query; each level only re-reads them under its own binary relabeling
(use this classifier: yes/no), so prediction cost does not grow with cascade
depth. The first level with a positive majority wins; if none fires, the
fallback policy decides.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import ScalingRanges, scale
from .profiles import NO_MODEL

CASCADE_FORMAT_VERSION = 1


class CascadeError(ValueError):
    pass


def k_nearest(X: np.ndarray, query: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Exact brute-force K nearest rows of X to query, Euclidean.

    Ascending distance; exact distance ties break toward the lower row id.
    """
    X = np.asarray(X, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (X.shape[1],):
        raise CascadeError(f"query has {query.shape} shape, matrix rows have {X.shape[1]} features")
    diff = X - query
    dists = np.sqrt((diff * diff).sum(axis=1))
    order = np.argsort(dists, kind="stable")[:k]
    return [(int(i), float(dists[i])) for i in order]


@dataclass
class TrainingMatrix:
    """Scaled feature rows with optimum-model labels and source image ids."""

    X: np.ndarray               # (n, d) floats in [0, 1]
    labels: np.ndarray          # (n,) model_id strings, NO_MODEL for unhandled
    image_ids: list[str]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=object)
        n = self.X.shape[0]
        if self.X.ndim != 2:
            raise CascadeError("X must be 2-D")
        if len(self.labels) != n or len(self.image_ids) != n:
            raise CascadeError("labels/image_ids length mismatch")
        if n and (self.X.min() < 0.0 or self.X.max() > 1.0):
            raise CascadeError("training matrix values must lie in [0, 1]")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class Fallback:
    """What to do when every level votes no."""

    policy: str  # "use_prespecified" | "abstain"
    model_id: str | None = None

    def __post_init__(self):
        if self.policy not in ("use_prespecified", "abstain"):
            raise CascadeError(f"unknown fallback policy {self.policy!r}")
        if self.policy == "use_prespecified" and not self.model_id:
            raise CascadeError("use_prespecified fallback needs a model_id")

    @classmethod
    def abstain(cls) -> "Fallback":
        return cls("abstain")

    @classmethod
    def prespecified(cls, model_id: str) -> "Fallback":
        return cls("use_prespecified", model_id)


@dataclass(frozen=True)
class Prediction:
    choice: str | None          # model to run, None = abstain
    level: int | None           # index of the level that fired, None = fallback
    neighbor_ids: tuple[str, ...]
    confidence: float           # mean neighbor distance, smaller = closer


@dataclass
class Cascade:
    matrix: TrainingMatrix
    levels: list[str]           # model ids, selection-trace order
    k: int
    fallback: Fallback
    feature_names: tuple[str, ...] | None = None
    ranges: ScalingRanges | None = None
    trace_meta: dict | None = None
    level_labels: np.ndarray = field(init=False)  # (n_levels, n_rows) bool

    def __post_init__(self):
        if not self.levels:
            raise CascadeError("cascade needs at least one level")
        if len(set(self.levels)) != len(self.levels):
            raise CascadeError("duplicate model in cascade levels")
        if self.matrix.n_rows == 0:
            raise CascadeError("empty training matrix")
        if not 1 <= self.k <= self.matrix.n_rows:
            raise CascadeError(f"k={self.k} out of range for {self.matrix.n_rows} rows")
        self.level_labels = np.stack(
            [self.matrix.labels == mid for mid in self.levels]
        ).astype(bool)

    def predict(self, query: np.ndarray) -> Prediction:
        """Run the cascade on one scaled query vector.

        The neighbor search happens exactly once; levels vote on the shared
        neighbors. A level fires on a strict majority of positive labels.
        """
        neighbors = k_nearest(self.matrix.X, query, self.k)
        rows = [r for r, _ in neighbors]
        confidence = float(np.mean([d for _, d in neighbors]))
        ids = tuple(self.matrix.image_ids[r] for r in rows)
        for lvl, mid in enumerate(self.levels):
            votes = int(self.level_labels[lvl, rows].sum())
            if votes * 2 > self.k:
                return Prediction(mid, lvl, ids, confidence)
        if self.fallback.policy == "use_prespecified":
            return Prediction(self.fallback.model_id, None, ids, confidence)
        return Prediction(None, None, ids, confidence)

    def predict_batch(self, Q: np.ndarray) -> list[Prediction]:
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        return [self.predict(q) for q in Q]

    def to_json_dict(self) -> dict:
        return {
            "format_version": CASCADE_FORMAT_VERSION,
            "k": self.k,
            "fallback": {"policy": self.fallback.policy, "model_id": self.fallback.model_id},
            "levels": list(self.levels),
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "scaling_ranges": self.ranges.to_dict() if self.ranges else None,
            "matrix": {
                "image_ids": list(self.matrix.image_ids),
                "labels": [str(l) for l in self.matrix.labels],
                "rows": [[float(v) for v in row] for row in self.matrix.X],
            },
            "trace": self.trace_meta,
        }


def train_cascade(matrix: TrainingMatrix, models: list[str], k: int,
                  fallback: Fallback | None = None,
                  feature_names=None, ranges: ScalingRanges | None = None,
                  trace_meta: dict | None = None) -> Cascade:
    """Build a cascade over a shared matrix; one binary level per model.

    Default fallback runs the first model in the cascade. Per-level binary
    labels are derived from the optimum labels, the feature rows are stored
    once.
    """
    if fallback is None:
        fallback = Fallback.prespecified(models[0]) if models else None
    return Cascade(
        matrix=matrix,
        levels=list(models),
        k=k,
        fallback=fallback,
        feature_names=tuple(feature_names) if feature_names else None,
        ranges=ranges,
        trace_meta=trace_meta,
    )


def save_cascade(path, cascade: Cascade) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(cascade.to_json_dict(), fh, indent=2)
        fh.write("\n")


def load_cascade(path) -> Cascade:
    with Path(path).open("r", encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("format_version") != CASCADE_FORMAT_VERSION:
        raise CascadeError(f"unsupported cascade format version {d.get('format_version')}")
    matrix = TrainingMatrix(
        X=np.array(d["matrix"]["rows"], dtype=np.float64),
        labels=np.array(d["matrix"]["labels"], dtype=object),
        image_ids=list(d["matrix"]["image_ids"]),
    )
    ranges = ScalingRanges.from_dict(d["scaling_ranges"]) if d.get("scaling_ranges") else None
    return Cascade(
        matrix=matrix,
        levels=list(d["levels"]),
        k=int(d["k"]),
        fallback=Fallback(d["fallback"]["policy"], d["fallback"].get("model_id")),
        feature_names=tuple(d["feature_names"]) if d.get("feature_names") else None,
        ranges=ranges,
        trace_meta=d.get("trace"),
    )


class FlatKNN:
    """Plain multiclass KNN over the same exact-search machinery.

    Majority vote of the K neighbors; vote ties break toward the label of
    the nearest tied neighbor. Used as the default trainer for feature
    selection and as a test oracle building block.
    """

    def __init__(self, X, y, k: int):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=object)
        if not 1 <= k <= self.X.shape[0]:
            raise CascadeError(f"k={k} out of range for {self.X.shape[0]} rows")
        self.k = k

    def predict_one(self, query):
        neighbors = k_nearest(self.X, query, self.k)
        counts: dict = {}
        for row, _ in neighbors:
            counts[self.y[row]] = counts.get(self.y[row], 0) + 1
        best = max(counts.values())
        for row, _ in neighbors:  # nearest-first among tied labels
            if counts[self.y[row]] == best:
                return self.y[row]

    def predict(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        return np.array([self.predict_one(q) for q in Q], dtype=object)


def knn_trainer(k: int = 5):
    """Trainer factory for the feature-selection seam."""
    def train(X, y):
        return FlatKNN(X, y, min(k, len(y)))
    return train


class _CascadeClassifier:
    """Adapts a cascade to the trainer seam's label-in/label-out contract."""

    def __init__(self, cascade: Cascade):
        self.cascade = cascade

    def predict(self, Q):
        preds = self.cascade.predict_batch(Q)
        return np.array([p.choice if p.choice is not None else NO_MODEL for p in preds],
                        dtype=object)


def cascade_trainer(models: list[str], k: int, fallback: Fallback | None = None):
    """Trainer factory that fits the full cascade; for feature selection runs."""
    def train(X, y):
        matrix = TrainingMatrix(X=X, labels=y, image_ids=[str(i) for i in range(len(y))])
        return _CascadeClassifier(train_cascade(matrix, models, min(k, len(y)), fallback))
    return train


class SequentialDeciders:
    """Early-exit cascade over arbitrary per-level binary deciders.

    Seam for swapping the KNN levels for other classifier families. Each
    decider exposes `predict(X) -> bool array`; the first positive level
    wins, otherwise the fallback applies.
    """

    def __init__(self, levels: list[tuple[str, object]], fallback: Fallback):
        self.levels = levels
        self.fallback = fallback

    def predict(self, query) -> str | None:
        q = np.atleast_2d(np.asarray(query, dtype=np.float64))
        for model_id, decider in self.levels:
            if bool(np.asarray(decider.predict(q)).ravel()[0]):
                return model_id
        return self.fallback.model_id if self.fallback.policy == "use_prespecified" else None
