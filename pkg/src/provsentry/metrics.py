"""Detection metrics with explicit undefined values on zero denominators."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricReport:
    counts: ConfusionCounts
    precision: float | None
    recall: float | None
    f_score: float | None
    fpr: float | None

    def as_dict(self) -> dict:
        return {
            "tp": self.counts.tp, "fp": self.counts.fp,
            "tn": self.counts.tn, "fn": self.counts.fn,
            "precision": self.precision, "recall": self.recall,
            "f_score": self.f_score, "fpr": self.fpr,
        }


def compute_metrics(predicted, truth) -> MetricReport:
    """Precision, recall, F-score and FPR from parallel boolean sequences.
    Zero-denominator metrics come back as None (undefined), never as 0."""
    predicted = list(predicted)
    truth = list(truth)
    if len(predicted) != len(truth):
        raise ValueError(f"{len(predicted)} predictions vs {len(truth)} truths")
    c = ConfusionCounts()
    for p, t in zip(predicted, truth):
        if p and t:
            c.tp += 1
        elif p and not t:
            c.fp += 1
        elif not p and t:
            c.fn += 1
        else:
            c.tn += 1
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) else None
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) else None
    if precision is None or recall is None or (precision + recall) == 0.0:
        f_score = None
    else:
        f_score = 2.0 * precision * recall / (precision + recall)
    fpr = c.fp / (c.fp + c.tn) if (c.fp + c.tn) else None
    return MetricReport(c, precision, recall, f_score, fpr)


def format_table(reports: dict[str, MetricReport]) -> str:
    """Human-readable metrics table, one row per granularity."""
    def fmt(x):
        return "undefined" if x is None else f"{x:.4f}"

    lines = [f"{'granularity':<12} {'precision':>10} {'recall':>10} "
             f"{'f-score':>10} {'fpr':>10}  tp/fp/tn/fn"]
    for name, r in reports.items():
        c = r.counts
        lines.append(f"{name:<12} {fmt(r.precision):>10} {fmt(r.recall):>10} "
                     f"{fmt(r.f_score):>10} {fmt(r.fpr):>10}  "
                     f"{c.tp}/{c.fp}/{c.tn}/{c.fn}")
    return "\n".join(lines)
