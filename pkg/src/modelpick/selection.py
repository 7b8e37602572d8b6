"""Feature selection and inference-model-set selection.

Two selection problems live here. Feature selection: drop pairwise-correlated
features (Pearson threshold), then greedily eliminate the least important
ones, where importance is the cross-validated accuracy drop from leaving a
feature out. Model-set selection: start from the model that is optimal for
the most images, then repeatedly add the model that is correct on the largest
share of still-failing images, until the coverage gain drops to the threshold.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .profiles import ClassifierProfile, Criterion, optimum_label_indices


class SelectionError(ValueError):
    pass


def pearson(x, y) -> float:
    """Pearson product-moment correlation; 0.0 when either series is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise SelectionError("pearson needs two equal-length 1-D series")
    if x.size < 2:
        raise SelectionError("pearson needs at least 2 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    denom_sq = (dx * dx).sum() * (dy * dy).sum()
    if denom_sq == 0.0:
        return 0.0
    r = (dx * dy).sum() / np.sqrt(denom_sq)
    return float(np.clip(r, -1.0, 1.0))


def correlation_matrix(X: np.ndarray) -> np.ndarray:
    """Pairwise Pearson matrix over columns of X.

    Exactly symmetric; diagonal is 1 for non-constant columns, 0 for
    constant ones (a constant feature correlates with nothing).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise SelectionError("correlation_matrix needs an (n>=2, d) matrix")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc
    sd = np.sqrt(np.diag(cov))
    nonconst = sd > 0
    denom = np.outer(sd, sd)
    M = np.zeros_like(cov)
    np.divide(cov, denom, out=M, where=denom > 0)
    M = np.clip(M, -1.0, 1.0)
    np.fill_diagonal(M, np.where(nonconst, 1.0, 0.0))
    return M


def prune_correlated(matrix: np.ndarray, names, threshold: float) -> list[str]:
    """Greedy scan in canonical order: keep a feature iff its |PCC| with every
    already-kept feature stays at or below the threshold."""
    if not 0 < threshold <= 1:
        raise SelectionError(f"threshold must be in (0, 1], got {threshold}")
    matrix = np.asarray(matrix)
    if matrix.shape != (len(names), len(names)):
        raise SelectionError("matrix shape does not match feature names")
    kept_idx: list[int] = []
    for i in range(len(names)):
        if all(abs(matrix[i, j]) <= threshold for j in kept_idx):
            kept_idx.append(i)
    return [names[i] for i in kept_idx]


def cross_val_accuracy(X, y, trainer, folds: int, seed: int) -> float:
    """Mean accuracy over a seeded k-fold split of the rows.

    `trainer(X_train, y_train)` must return an object with
    `predict(X) -> labels`.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=object)
    n = X.shape[0]
    folds = min(folds, n)
    if folds < 2:
        raise SelectionError("cross validation needs at least 2 folds")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = rng.permutation(n)
    accs = []
    for f in range(folds):
        test = order[f::folds]
        train = np.setdiff1d(order, test)
        model = trainer(X[train], y[train])
        pred = np.asarray(model.predict(X[test]), dtype=object)
        accs.append(float((pred == y[test]).mean()))
    return float(np.mean(accs))


def feature_importance(X, y, names, trainer, folds: int = 10, seed: int = 0) -> dict[str, float]:
    """Leave-one-out importance, normalized to percentages summing to 100.

    importance_i = max(0, acc_all - acc_without_i). Redundant feature pairs
    mask each other (both drops come out near zero); that is inherent to
    leave-one-out scoring. Returns all zeros if no removal hurts accuracy.
    """
    names = list(names)
    X = np.asarray(X, dtype=np.float64)
    if len(names) < 2:
        raise SelectionError("feature_importance needs at least 2 features")
    if X.shape[1] != len(names):
        raise SelectionError("column count does not match names")
    if len(set(np.asarray(y, dtype=object))) < 2:
        raise SelectionError("degenerate dataset: single label class")
    acc_all = cross_val_accuracy(X, y, trainer, folds, seed)
    raw = []
    for i in range(len(names)):
        cols = [j for j in range(len(names)) if j != i]
        acc_without = cross_val_accuracy(X[:, cols], y, trainer, folds, seed)
        raw.append(max(0.0, acc_all - acc_without))
    total = sum(raw)
    if total == 0.0:
        return {n: 0.0 for n in names}
    return {n: 100.0 * v / total for n, v in zip(names, raw)}


def greedy_eliminate(X, y, names, trainer, stop_size: int = 7,
                     folds: int = 10, seed: int = 0) -> list[str]:
    """Backward elimination: repeatedly drop the feature whose removal costs
    the least cross-validated accuracy, until stop_size features remain.

    Returns the removed features in removal order. Ties break toward the
    earlier feature in the given order.
    """
    if stop_size < 1:
        raise SelectionError("stop_size must be >= 1")
    names = list(names)
    X = np.asarray(X, dtype=np.float64)
    remaining = list(range(len(names)))
    removed: list[str] = []
    while len(remaining) > stop_size:
        best_acc, best_pos = -1.0, None
        for pos, i in enumerate(remaining):
            cols = [j for j in remaining if j != i]
            acc = cross_val_accuracy(X[:, cols], y, trainer, folds, seed)
            if acc > best_acc:
                best_acc, best_pos = acc, pos
        removed.append(names[remaining.pop(best_pos)])
    return removed


def surviving_features(names, removed) -> list[str]:
    gone = set(removed)
    return [n for n in names if n not in gone]


@dataclass(frozen=True)
class SelectionStep:
    model_id: str
    accuracy_before: float  # percentage points, coverage of the set so far
    accuracy_after: float
    gain: float
    included: bool  # False only for the final sub-threshold probe


@dataclass
class SelectionTrace:
    steps: list[SelectionStep]
    criterion: Criterion
    theta: float

    @property
    def selected(self) -> list[str]:
        return [s.model_id for s in self.steps if s.included]

    def to_json_dict(self) -> dict:
        return {
            "criterion": self.criterion.value,
            "theta": self.theta,
            "selected": self.selected,
            "steps": [
                {
                    "model_id": s.model_id,
                    "accuracy_before": s.accuracy_before,
                    "accuracy_after": s.accuracy_after,
                    "gain": s.gain,
                    "included": s.included,
                }
                for s in self.steps
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SelectionTrace":
        steps = [
            SelectionStep(
                s["model_id"], s["accuracy_before"], s["accuracy_after"],
                s["gain"], s["included"],
            )
            for s in d["steps"]
        ]
        return cls(steps, Criterion.parse(d["criterion"]), d["theta"])


def select_models(profile: ClassifierProfile, criterion: Criterion,
                  theta: float = 0.5) -> SelectionTrace:
    """Pick the inference model set by iterative coverage improvement.

    Accuracy of a set counts an image as correct when any chosen model is
    correct for it (coverage). The first pick is the model optimal for the
    most images; each later pick is the model correct on the most
    still-failing images. The loop stops once the coverage gain drops to
    theta percentage points or lower; the sub-threshold probe is recorded
    in the trace but its model is not selected. Argmax ties break toward
    the earlier model in profile order.
    """
    if theta <= 0:
        raise SelectionError(f"theta must be positive, got {theta}")
    if profile.n_images == 0:
        raise SelectionError("empty profile")
    correct = profile.correct(criterion)
    n = profile.n_images
    m = len(profile.model_ids)

    opt = optimum_label_indices(profile, criterion)
    opt_counts = np.bincount(opt[opt >= 0], minlength=m)
    first = int(np.argmax(opt_counts))

    chosen = [first]
    covered = correct[:, first].copy()
    acc = 100.0 * covered.sum() / n
    steps = [SelectionStep(profile.model_ids[first], 0.0, acc, acc, True)]

    while len(chosen) < m:
        failed = ~covered
        remaining = [j for j in range(m) if j not in chosen]
        fixes = [int(correct[failed, j].sum()) for j in remaining]
        pick = remaining[int(np.argmax(fixes))]
        new_covered = covered | correct[:, pick]
        new_acc = 100.0 * new_covered.sum() / n
        gain = new_acc - acc
        included = gain > theta
        steps.append(SelectionStep(profile.model_ids[pick], acc, new_acc, gain, included))
        if not included:
            break
        chosen.append(pick)
        covered = new_covered
        acc = new_acc
    return SelectionTrace(steps, criterion, theta)


def write_trace_json(path, trace: SelectionTrace) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(trace.to_json_dict(), fh, indent=2)
        fh.write("\n")


def read_trace_json(path) -> SelectionTrace:
    with Path(path).open("r", encoding="utf-8") as fh:
        return SelectionTrace.from_json_dict(json.load(fh))


def write_trace_csv(path, trace: SelectionTrace) -> None:
    """Plot-ready step list: one row per step with accuracy before/after."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "model_id", "accuracy_before", "accuracy_after", "gain", "included"])
        for k, s in enumerate(trace.steps, start=1):
            writer.writerow([
                k, s.model_id, repr(s.accuracy_before), repr(s.accuracy_after),
                repr(s.gain), int(s.included),
            ])
