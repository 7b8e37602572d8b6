"""Cross-validation harness and the metric suite.

Policies are compared through per-image decisions: which classifier each one
would run for each test image. From a decision list and the profile we score
accuracy under both criteria, macro precision/recall/F1 against the optimum
labels, end-to-end cost (front-model time plus the chosen classifier's
profiled latency), and how often the choice was latency-optimal. Per-fold
numbers aggregate by geometric mean.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .profiles import NO_MODEL, ClassifierProfile, Criterion, optimum_label_indices

GEOMEAN_FLOOR = 1e-9  # zero metrics are floored here, raw values stay visible per fold


class EvaluationError(ValueError):
    pass


class Decision(NamedTuple):
    image_id: str
    choice: str | None      # None = abstained
    premodel_time_s: float


@dataclass
class FoldPlan:
    """Disjoint test sets covering the corpus, sizes differing by at most 1."""

    test_sets: list[list[str]]

    @property
    def n_folds(self) -> int:
        return len(self.test_sets)

    def all_ids(self) -> list[str]:
        return [img for fold in self.test_sets for img in fold]


def make_folds(image_ids, folds: int, seed: int) -> FoldPlan:
    """Seeded shuffle then round-robin split; deterministic per seed."""
    image_ids = list(image_ids)
    if folds < 1:
        raise EvaluationError("fold count must be >= 1")
    if folds > len(image_ids):
        raise EvaluationError(f"{folds} folds for only {len(image_ids)} images")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = rng.permutation(len(image_ids))
    shuffled = [image_ids[i] for i in order]
    return FoldPlan([shuffled[f::folds] for f in range(folds)])


def geometric_mean(values, floor: float = GEOMEAN_FLOOR) -> float:
    """Geometric mean with zeros floored at `floor` so the product is defined."""
    values = list(values)
    if not values:
        raise EvaluationError("geometric_mean of empty list")
    if any(v < 0 for v in values):
        raise EvaluationError("geometric_mean needs nonnegative values")
    return float(math.exp(sum(math.log(max(v, floor)) for v in values) / len(values)))


_METRIC_FIELDS = (
    "accuracy_top1",
    "accuracy_top5",
    "macro_precision",
    "macro_recall",
    "macro_f1",
    "optimal_choice_rate",
    "abstention_rate",
    "mean_premodel_time_s",
    "mean_model_latency_s",
    "mean_end_to_end_s",
    "mean_energy_j",
)


@dataclass
class FoldMetrics:
    fold: int
    n_test: int
    accuracy_top1: float
    accuracy_top5: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    optimal_choice_rate: float
    abstention_rate: float
    mean_premodel_time_s: float
    mean_model_latency_s: float
    mean_end_to_end_s: float
    mean_energy_j: float | None


def score_decisions(profile: ClassifierProfile, criterion: Criterion,
                    decisions: list[Decision], classes: list[str],
                    fold: int = 0) -> FoldMetrics:
    """Score one fold's decisions against the profile.

    Abstentions count as misses for accuracy and recall; they never enter a
    class's precision denominator. Macro averages run over `classes` (the
    policy's possible model choices). A choice is optimal when it matches
    any latency-minimal correct model, or abstains when nothing is correct.
    """
    if not decisions:
        raise EvaluationError("cannot score an empty decision list")
    n = len(decisions)
    opt_idx = optimum_label_indices(profile, criterion)
    correct_crit = profile.correct(criterion)

    true_labels = []
    pred_labels = []
    hits_top1 = hits_top5 = optimal = abstained = 0
    premodel_time = model_latency = 0.0
    energy_total = 0.0 if profile.energy is not None else None
    for img, choice, ptime in decisions:
        i = profile.image_index(img)
        j = opt_idx[i]
        true_labels.append(profile.model_ids[j] if j >= 0 else NO_MODEL)
        pred_labels.append(choice if choice is not None else NO_MODEL)
        premodel_time += ptime
        if choice is None:
            abstained += 1
            if j < 0:
                optimal += 1
        else:
            c = profile.model_index(choice)
            hits_top1 += int(profile.correct_top1[i, c])
            hits_top5 += int(profile.correct_top5[i, c])
            model_latency += profile.latency[i, c]
            if energy_total is not None:
                energy_total += profile.energy[i, c]
            if correct_crit[i].any():
                best = profile.latency[i, correct_crit[i]].min()
                if correct_crit[i, c] and profile.latency[i, c] == best:
                    optimal += 1

    precisions, recalls, f1s = [], [], []
    for cls in classes:
        tp = sum(1 for t, p in zip(true_labels, pred_labels) if t == cls and p == cls)
        n_pred = sum(1 for p in pred_labels if p == cls)
        n_true = sum(1 for t in true_labels if t == cls)
        prec = tp / n_pred if n_pred else 0.0
        rec = tp / n_true if n_true else 0.0
        f1 = 2.0 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        precisions.append(prec)
        recalls.append(rec)
        f1s.append(f1)

    return FoldMetrics(
        fold=fold,
        n_test=n,
        accuracy_top1=hits_top1 / n,
        accuracy_top5=hits_top5 / n,
        macro_precision=float(np.mean(precisions)),
        macro_recall=float(np.mean(recalls)),
        macro_f1=float(np.mean(f1s)),
        optimal_choice_rate=optimal / n,
        abstention_rate=abstained / n,
        mean_premodel_time_s=premodel_time / n,
        mean_model_latency_s=model_latency / n,
        mean_end_to_end_s=(premodel_time + model_latency) / n,
        mean_energy_j=None if energy_total is None else energy_total / n,
    )


@dataclass
class EvaluationReport:
    policy: str
    criterion: Criterion
    fold_metrics: list[FoldMetrics]

    @property
    def aggregate(self) -> dict[str, float | None]:
        """Geometric mean of each metric across folds."""
        out: dict[str, float | None] = {}
        for name in _METRIC_FIELDS:
            vals = [getattr(fm, name) for fm in self.fold_metrics]
            out[name] = None if any(v is None for v in vals) else geometric_mean(vals)
        return out

    def to_json_dict(self) -> dict:
        return {
            "policy": self.policy,
            "criterion": self.criterion.value,
            "folds": [asdict(fm) for fm in self.fold_metrics],
            "aggregate": self.aggregate,
        }


# A fold trainer maps training image ids to (choose, classes): `choose`
# turns test image ids into decisions, `classes` lists the models the
# policy can pick (for macro averaging).
FoldTrainer = Callable[[list[str]], tuple[Callable[[list[str]], list[Decision]], list[str]]]


def evaluate(profile: ClassifierProfile, trainer: FoldTrainer, plan: FoldPlan,
             criterion: Criterion) -> tuple[EvaluationReport, list[list[Decision]]]:
    """Train on the other folds, test on each fold in turn."""
    covered = set(plan.all_ids())
    missing = [i for i in covered if i not in set(profile.image_ids)]
    if missing:
        raise EvaluationError(f"fold plan contains images missing from profile: {missing[:5]}")
    metrics: list[FoldMetrics] = []
    all_decisions: list[list[Decision]] = []
    for f, test_ids in enumerate(plan.test_sets):
        test_set = set(test_ids)
        train_ids = [i for i in profile.image_ids if i in covered and i not in test_set]
        choose, classes = trainer(train_ids)
        decisions = choose(test_ids)
        metrics.append(score_decisions(profile, criterion, decisions, classes, fold=f))
        all_decisions.append(decisions)
    return EvaluationReport("premodel", criterion, metrics), all_decisions


def constant_policy_report(profile: ClassifierProfile, plan: FoldPlan,
                           criterion: Criterion, model_id: str) -> EvaluationReport:
    metrics = [
        score_decisions(
            profile, criterion,
            [Decision(img, model_id, 0.0) for img in test_ids],
            [model_id], fold=f,
        )
        for f, test_ids in enumerate(plan.test_sets)
    ]
    return EvaluationReport(model_id, criterion, metrics)


def oracle_report(profile: ClassifierProfile, plan: FoldPlan,
                  criterion: Criterion) -> EvaluationReport:
    opt_idx = optimum_label_indices(profile, criterion)
    metrics = []
    for f, test_ids in enumerate(plan.test_sets):
        decisions = []
        for img in test_ids:
            j = opt_idx[profile.image_index(img)]
            decisions.append(Decision(img, profile.model_ids[j] if j >= 0 else None, 0.0))
        metrics.append(score_decisions(profile, criterion, decisions,
                                       list(profile.model_ids), fold=f))
    return EvaluationReport("oracle", criterion, metrics)


def baseline_reports(profile: ClassifierProfile, plan: FoldPlan,
                     criterion: Criterion) -> dict[str, EvaluationReport]:
    """Constant-choice report per candidate model, plus the oracle."""
    reports = {
        mid: constant_policy_report(profile, plan, criterion, mid)
        for mid in profile.model_ids
    }
    reports["oracle"] = oracle_report(profile, plan, criterion)
    return reports


def write_reports_json(path, reports: list[EvaluationReport]) -> None:
    payload = {r.policy: r.to_json_dict() for r in reports}
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_reports_csv(path, reports: list[EvaluationReport]) -> None:
    """Plot-ready: one row per policy per fold, plus a geomean row each."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "fold", "n_test", *_METRIC_FIELDS])
        for rep in reports:
            for fm in rep.fold_metrics:
                writer.writerow([
                    rep.policy, fm.fold, fm.n_test,
                    *[_fmt(getattr(fm, name)) for name in _METRIC_FIELDS],
                ])
            agg = rep.aggregate
            writer.writerow([
                rep.policy, "geomean", sum(fm.n_test for fm in rep.fold_metrics),
                *[_fmt(agg[name]) for name in _METRIC_FIELDS],
            ])


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def write_decisions_csv(path, decisions_by_fold: list[list[Decision]],
                        profile: ClassifierProfile, criterion: Criterion) -> None:
    """Raw per-image decisions, the substrate for metric recomputation."""
    opt_idx = optimum_label_indices(profile, criterion)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "image_id", "choice", "optimum", "premodel_time_s"])
        for f, decisions in enumerate(decisions_by_fold):
            for img, choice, ptime in decisions:
                j = opt_idx[profile.image_index(img)]
                writer.writerow([
                    f, img, choice or "", profile.model_ids[j] if j >= 0 else "",
                    repr(float(ptime)),
                ])
