"""Segmentation metrics over binarized probability maps.

Counting happens in exact integer arithmetic; every score is a plain ratio
of counts. A score whose denominator is zero is None (explicitly undefined),
never silently 0, and serializes to an empty CSV field. Pixels outside the
field-of-view mask are forced to background and excluded from every count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConfusionCounts",
    "ScoreSet",
    "binarize",
    "confusion",
    "scores",
    "evaluate_set",
    "EvalResult",
    "write_scores_csv",
    "write_fcurve_csv",
    "threshold_sweep",
    "SWEEP_THRESHOLDS",
]

SWEEP_THRESHOLDS = tuple(round(0.05 * k, 2) for k in range(1, 20))  # 0.05 .. 0.95

SCORES_CSV_HEADER = (
    "id,threshold,tp,tn,fp,fn,accuracy,sensitivity,specificity,precision,f_measure"
)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn
        )

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class ScoreSet:
    """Ratio scores; a None field means its denominator was zero."""

    accuracy: float | None
    sensitivity: float | None
    specificity: float | None
    precision: float | None
    recall: float | None
    f_measure: float | None


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def binarize(prob: np.ndarray, threshold: float, mask: np.ndarray | None = None) -> np.ndarray:
    """prob >= threshold as {0, 1}; ties go to vessel. Out-of-mask pixels are 0."""
    prob = np.asarray(prob, dtype=np.float64)
    if prob.size and (prob.min() < 0.0 or prob.max() > 1.0):
        raise ValueError(f"binarize: probabilities must lie in [0, 1], got [{prob.min()}, {prob.max()}]")
    out = (prob >= threshold).astype(np.uint8)
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != prob.shape:
            raise ValueError(f"binarize: mask shape {mask.shape} does not match {prob.shape}")
        out = out * (mask > 0).astype(np.uint8)
    return out


def confusion(pred: np.ndarray, truth: np.ndarray, mask: np.ndarray | None = None) -> ConfusionCounts:
    """Pixel counts over the in-mask region (all pixels when mask is None)."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"confusion: prediction {pred.shape} does not match truth {truth.shape}")
    keep = np.ones(pred.shape, dtype=bool)
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != pred.shape:
            raise ValueError(f"confusion: mask shape {mask.shape} does not match {pred.shape}")
        keep = mask > 0
    p = pred[keep] > 0
    t = truth[keep] > 0
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & t)),
        tn=int(np.count_nonzero(~p & ~t)),
        fp=int(np.count_nonzero(p & ~t)),
        fn=int(np.count_nonzero(~p & t)),
    )


def scores(c: ConfusionCounts) -> ScoreSet:
    """Accuracy, sensitivity, specificity, precision, recall, F-measure."""
    accuracy = _ratio(c.tp + c.tn, c.total)
    sensitivity = _ratio(c.tp, c.tp + c.fn)
    specificity = _ratio(c.tn, c.tn + c.fp)
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = sensitivity
    if precision is None or sensitivity is None or precision + sensitivity == 0:
        f_measure = None
    else:
        f_measure = 2.0 * precision * sensitivity / (precision + sensitivity)
    return ScoreSet(accuracy, sensitivity, specificity, precision, recall, f_measure)


@dataclass(frozen=True)
class EvalResult:
    ids: tuple[str, ...]
    threshold: float
    per_image: tuple[tuple[ConfusionCounts, ScoreSet], ...]
    micro_counts: ConfusionCounts
    micro: ScoreSet
    macro: ScoreSet


def _macro(per_image) -> ScoreSet:
    """Unweighted mean of the defined per-image values, per score."""
    fields = ("accuracy", "sensitivity", "specificity", "precision", "recall", "f_measure")
    values = {}
    for name in fields:
        defined = [getattr(s, name) for _, s in per_image if getattr(s, name) is not None]
        values[name] = sum(defined) / len(defined) if defined else None
    return ScoreSet(**values)


def evaluate_set(items, threshold: float = 0.5) -> EvalResult:
    """Score (id, prob, truth, mask) quadruples; mask may be None.

    Returns per-image scores in input order plus the micro (pooled-count)
    aggregate and a macro (mean-of-defined) aggregate.
    """
    ids = []
    per_image = []
    pooled = ConfusionCounts(0, 0, 0, 0)
    for sample_id, prob, truth, mask in items:
        try:
            pred = binarize(prob, threshold, mask)
            c = confusion(pred, truth, mask)
        except ValueError as exc:
            raise ValueError(f"{sample_id}: {exc}") from exc
        ids.append(sample_id)
        per_image.append((c, scores(c)))
        pooled = pooled + c
    return EvalResult(
        ids=tuple(ids),
        threshold=threshold,
        per_image=tuple(per_image),
        micro_counts=pooled,
        micro=scores(pooled),
        macro=_macro(per_image),
    )


def _cell(value) -> str:
    return "" if value is None else repr(value)


def write_scores_csv(path, result: EvalResult) -> None:
    """One row per image plus __micro__ (pooled) and __macro__ rows."""
    with open(path, "w", newline="") as fh:
        fh.write(SCORES_CSV_HEADER + "\n")
        writer = csv.writer(fh)
        for sample_id, (c, s) in zip(result.ids, result.per_image):
            writer.writerow(_score_row(sample_id, result.threshold, c, s))
        writer.writerow(_score_row("__micro__", result.threshold, result.micro_counts, result.micro))
        m = result.macro
        writer.writerow(
            ["__macro__", repr(result.threshold), "", "", "", "",
             _cell(m.accuracy), _cell(m.sensitivity), _cell(m.specificity), _cell(m.precision), _cell(m.f_measure)]
        )


def _score_row(sample_id, threshold, c: ConfusionCounts, s: ScoreSet):
    return [
        sample_id,
        repr(threshold),
        c.tp,
        c.tn,
        c.fp,
        c.fn,
        _cell(s.accuracy),
        _cell(s.sensitivity),
        _cell(s.specificity),
        _cell(s.precision),
        _cell(s.f_measure),
    ]


def write_fcurve_csv(path, result: EvalResult) -> None:
    """Per-image F-measure in input order (index,id,f_measure)."""
    with open(path, "w", newline="") as fh:
        fh.write("index,id,f_measure\n")
        writer = csv.writer(fh)
        for k, (sample_id, (_, s)) in enumerate(zip(result.ids, result.per_image)):
            writer.writerow([k, sample_id, _cell(s.f_measure)])


def threshold_sweep(items, thresholds=SWEEP_THRESHOLDS) -> list[EvalResult]:
    items = list(items)
    return [evaluate_set(items, t) for t in thresholds]
