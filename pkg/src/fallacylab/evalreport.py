"""Evaluation: accuracy and support-weighted precision/recall/F1, per-class
tables, multi-run aggregation, zero-shot guards, and explanation records.

Zero-division convention: a class with zero predicted positives has
precision 0 (likewise recall for zero gold support). The +/- figures use the
sample (n-1) standard deviation. Runtime accounting excludes retriever
pre-encoding, which happens before the timed epochs.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .corpus import DatasetSplit
from .errors import (
    HeterogeneousReports,
    LabelSpaceMismatch,
    LengthMismatch,
    UnknownLabel,
)
from .text import derive_seed


@dataclass(frozen=True)
class RunMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


def _check_labels(gold: Sequence[str], pred: Sequence[str], labels: Sequence[str]) -> None:
    if len(gold) != len(pred):
        raise LengthMismatch(f"gold has {len(gold)} labels, pred has {len(pred)}")
    if not gold:
        raise LengthMismatch("label sequences are empty")
    space = set(labels)
    for y in gold:
        if y not in space:
            raise UnknownLabel(f"gold label {y!r} outside label space")
    for y in pred:
        if y not in space:
            raise UnknownLabel(f"predicted label {y!r} outside label space")


def per_class_prf(
    gold: Sequence[str], pred: Sequence[str], labels: Sequence[str]
) -> dict[str, tuple[float, float, float, int]]:
    """Per class: (precision, recall, f1, gold support)."""
    _check_labels(gold, pred, labels)
    out = {}
    for c in labels:
        tp = sum(1 for g, p in zip(gold, pred) if g == c and p == c)
        fp = sum(1 for g, p in zip(gold, pred) if g != c and p == c)
        fn = sum(1 for g, p in zip(gold, pred) if g == c and p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out[c] = (precision, recall, f1, tp + fn)
    return out


def weighted_metrics(
    gold: Sequence[str], pred: Sequence[str], labels: Sequence[str] | None = None
) -> RunMetrics:
    """Accuracy plus per-class P/R/F1 averaged with gold-support weights."""
    if labels is None:
        labels = sorted(set(gold) | set(pred))
    table = per_class_prf(gold, pred, labels)
    n = len(gold)
    accuracy = sum(1 for g, p in zip(gold, pred) if g == p) / n
    precision = sum(p * s for p, _, _, s in table.values()) / n
    recall = sum(r * s for _, r, _, s in table.values()) / n
    f1 = sum(f * s for _, _, f, s in table.values()) / n
    return RunMetrics(accuracy, precision, recall, f1)


def per_class_f1(
    gold: Sequence[str], pred: Sequence[str], labels: Sequence[str]
) -> dict[str, float]:
    return {c: f for c, (_, _, f, _) in per_class_prf(gold, pred, labels).items()}


@dataclass
class EvalReport:
    """Per-run metrics plus everything the result tables need."""

    task: str
    dataset: str
    method: str
    label_space: list[str]
    seeds: list[int] = field(default_factory=list)
    runs: list[RunMetrics] = field(default_factory=list)
    per_class: dict[str, float] = field(default_factory=dict)
    epoch_seconds: list[float] = field(default_factory=list)
    explanations: list[dict] = field(default_factory=list)
    out_of_domain: bool = False

    def mean(self, metric: str) -> float:
        return float(np.mean([getattr(r, metric) for r in self.runs]))

    def std(self, metric: str) -> float:
        values = [getattr(r, metric) for r in self.runs]
        return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0

    def summary(self) -> dict:
        return {
            m: {"mean": self.mean(m), "std": self.std(m)} for m in METRIC_NAMES
        }

    def to_json(self) -> str:
        return json.dumps(
            {
                "task": self.task,
                "dataset": self.dataset,
                "method": self.method,
                "label_space": self.label_space,
                "seeds": self.seeds,
                "runs": [r.as_dict() for r in self.runs],
                "summary": self.summary(),
                "per_class_f1": self.per_class,
                "epoch_seconds": self.epoch_seconds,
                "out_of_domain": self.out_of_domain,
                "n_explanations": len(self.explanations),
            },
            sort_keys=True,
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        obj = json.loads(text)
        report = cls(
            task=obj["task"],
            dataset=obj["dataset"],
            method=obj["method"],
            label_space=obj["label_space"],
            seeds=obj["seeds"],
            runs=[RunMetrics(**r) for r in obj["runs"]],
            per_class=obj["per_class_f1"],
            epoch_seconds=obj["epoch_seconds"],
            out_of_domain=obj["out_of_domain"],
        )
        return report

    def write_explanations(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.explanations:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def aggregate_runs(reports: Sequence[EvalReport]) -> EvalReport:
    """Merge per-seed reports of one (task, dataset, method) experiment."""
    if not reports:
        raise ValueError("no reports to aggregate")
    first = reports[0]
    for r in reports[1:]:
        if (r.task, r.dataset, r.method) != (first.task, first.dataset, first.method):
            raise HeterogeneousReports(
                f"cannot aggregate {(r.task, r.dataset, r.method)} with "
                f"{(first.task, first.dataset, first.method)}"
            )
    merged = EvalReport(first.task, first.dataset, first.method, list(first.label_space))
    for r in reports:
        merged.seeds.extend(r.seeds)
        merged.runs.extend(r.runs)
        merged.epoch_seconds.extend(r.epoch_seconds)
        merged.explanations.extend(r.explanations)
    classes = first.label_space
    merged.per_class = {
        c: float(np.mean([r.per_class[c] for r in reports if c in r.per_class]))
        for c in classes
        if any(c in r.per_class for r in reports)
    }
    return merged


class Predictor(Protocol):
    """What every trained method exposes for evaluation."""

    label_space: list[str]

    def predict(self, texts: Sequence[str]) -> list[str]: ...

    def weight_hash(self) -> str: ...


def zero_shot_eval(
    predictor: Predictor, split: DatasetSplit, *, dataset: str, method: str
) -> EvalReport:
    """Evaluate with no weight updates; the weight hash must not move."""
    target_labels = set(split.labels())
    if not target_labels <= set(predictor.label_space):
        extra = sorted(target_labels - set(predictor.label_space))
        raise LabelSpaceMismatch(f"target labels {extra} missing from model space")
    before = predictor.weight_hash()
    preds = predictor.predict(split.texts())
    after = predictor.weight_hash()
    if before != after:
        raise RuntimeError("weights changed during zero-shot evaluation")
    gold = split.labels()
    report = EvalReport(
        task=split.label_space,
        dataset=dataset,
        method=method,
        label_space=list(predictor.label_space),
        out_of_domain=True,
    )
    report.runs.append(weighted_metrics(gold, preds, predictor.label_space))
    report.per_class = per_class_f1(gold, preds, predictor.label_space)
    return report


# ---------------------------------------------------------------------------
# trivial reference baselines


def frequency_baseline(
    train_labels: Sequence[str], n: int, seed: int, mode: str = "sample"
) -> list[str]:
    """Predict from the training class distribution: frequency-proportional
    sampling by default, or the majority class with mode='argmax'."""
    counts = Counter(train_labels)
    classes = sorted(counts)
    if mode == "argmax":
        majority = max(classes, key=lambda c: (counts[c], c))
        return [majority] * n
    weights = np.array([counts[c] for c in classes], dtype=np.float64)
    rng = np.random.default_rng(derive_seed("freq", seed))
    picks = rng.choice(len(classes), size=n, p=weights / weights.sum())
    return [classes[i] for i in picks]


def random_baseline(labels: Sequence[str], n: int, seed: int) -> list[str]:
    rng = np.random.default_rng(derive_seed("rand", seed))
    space = sorted(set(labels))
    return [space[i] for i in rng.integers(len(space), size=n)]


# ---------------------------------------------------------------------------
# rendering


def render_table(reports: Sequence[EvalReport], fmt: str = "text") -> str:
    """Main-results style table over aggregated reports."""
    rows = [
        (
            r.method,
            r.task,
            r.dataset,
            r.mean("accuracy"),
            r.mean("precision"),
            r.mean("recall"),
            r.mean("f1"),
            r.std("f1"),
        )
        for r in reports
    ]
    rows.sort(key=lambda t: -t[6])
    if fmt == "csv":
        lines = ["method,task,dataset,accuracy,precision,recall,f1,f1_std"]
        lines += [f"{m},{t},{d},{a:.3f},{p:.3f},{rc:.3f},{f:.3f},{s:.3f}" for m, t, d, a, p, rc, f, s in rows]
        return "\n".join(lines)
    header = f"{'method':<10} {'task':<8} {'dataset':<14} {'acc':>6} {'P':>6} {'R':>6} {'F1':>6} {'±':>6}"
    lines = [header, "-" * len(header)]
    for m, t, d, a, p, rc, f, s in rows:
        lines.append(f"{m:<10} {t:<8} {d:<14} {a:6.3f} {p:6.3f} {rc:6.3f} {f:6.3f} {s:6.3f}")
    return "\n".join(lines)


def render_per_class(report: EvalReport, counts: dict[str, tuple[int, int]] | None = None) -> str:
    """Per-class F1 table, optionally with train/test counts."""
    lines = [f"per-class F1 — {report.method} on {report.dataset} ({report.task})"]
    for c in report.label_space:
        if c not in report.per_class:
            continue
        extra = ""
        if counts and c in counts:
            extra = f"  train={counts[c][0]} test={counts[c][1]}"
        lines.append(f"  {c:<32} {report.per_class[c]:.3f}{extra}")
    return "\n".join(lines)
