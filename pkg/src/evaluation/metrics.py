"""Stance metrics: per-class F1, F_avg, accuracy and Cohen's kappa."""

from collections.abc import Sequence
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from pydantic import BaseModel
from sklearn.metrics import confusion_matrix

from ..datamodel import LABEL_ORDER, StanceLabel
from ..errors import MetricError

_HUNDREDTH = Decimal("0.01")


def to_percent(value: float) -> float:
    """Fraction -> percentage rounded half-up to 2 decimals (0.84185 -> 84.19)."""
    # Format first so 0.84185 is rounded as written, not as its binary neighbour.
    scaled = Decimal(format(value * 100, ".9f"))
    return float(scaled.quantize(_HUNDREDTH, rounding=ROUND_HALF_UP))


def percent_half_up(count: int, total: int) -> float:
    """100 * count / total rounded half-up to 2 decimals; 0 when total is 0."""
    if total == 0:
        return 0.0
    return to_percent(count / total)


class MetricReport(BaseModel):
    """Classification metrics over the three stance classes."""

    f_favor: float
    f_against: float
    f_none: float
    f_avg: float
    accuracy: float
    precision: dict[str, float]
    recall: dict[str, float]
    confusion: list[list[int]]
    n: int


class MeanMetrics(BaseModel):
    """Seed-averaged headline metrics."""

    f_favor: float
    f_against: float
    f_avg: float
    accuracy: float

    def as_percent(self) -> dict[str, float]:
        return {k: to_percent(v) for k, v in self.model_dump().items()}


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def compute_metrics(gold: Sequence[StanceLabel], predicted: Sequence[StanceLabel]) -> MetricReport:
    """
    Per-class precision/recall/F1, accuracy and F_avg = (F_favor + F_against) / 2.

    Confusion rows are gold labels and columns predictions, both in LABEL_ORDER.

    Raises:
        MetricError: on empty input or a length mismatch.
    """
    if len(gold) != len(predicted):
        raise MetricError(f"length mismatch: {len(gold)} gold vs {len(predicted)} predicted")
    if not gold:
        raise MetricError("no predictions to score")

    indices = list(range(len(LABEL_ORDER)))
    matrix = confusion_matrix(
        [StanceLabel(g).index for g in gold],
        [StanceLabel(p).index for p in predicted],
        labels=indices,
    )
    precision: dict[str, float] = {}
    recall: dict[str, float] = {}
    f1: dict[str, float] = {}
    for label in LABEL_ORDER:
        k = label.index
        tp = int(matrix[k, k])
        predicted_k = int(matrix[:, k].sum())
        gold_k = int(matrix[k, :].sum())
        precision[label.value] = tp / predicted_k if predicted_k else 0.0
        recall[label.value] = tp / gold_k if gold_k else 0.0
        f1[label.value] = _f1(precision[label.value], recall[label.value])

    f_favor = f1[StanceLabel.FAVOR.value]
    f_against = f1[StanceLabel.AGAINST.value]
    return MetricReport(
        f_favor=f_favor,
        f_against=f_against,
        f_none=f1[StanceLabel.NONE.value],
        f_avg=(f_favor + f_against) / 2,
        accuracy=int(np.trace(matrix)) / len(gold),
        precision=precision,
        recall=recall,
        confusion=matrix.astype(int).tolist(),
        n=len(gold),
    )


def cohen_kappa(
    annotations_a: Sequence[StanceLabel],
    annotations_b: Sequence[StanceLabel],
    three_class: bool = False,
) -> float:
    """
    Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    By default only items both annotators marked Favor or Against are used;
    ``three_class=True`` keeps None as well. Returns 1.0 when p_e = 1.

    Raises:
        MetricError: on a length mismatch or when no items remain.
    """
    if len(annotations_a) != len(annotations_b):
        raise MetricError(f"length mismatch: {len(annotations_a)} vs {len(annotations_b)}")
    labels = LABEL_ORDER if three_class else (StanceLabel.FAVOR, StanceLabel.AGAINST)
    pairs = [
        (labels.index(StanceLabel(a)), labels.index(StanceLabel(b)))
        for a, b in zip(annotations_a, annotations_b)
        if StanceLabel(a) in labels and StanceLabel(b) in labels
    ]
    if not pairs:
        raise MetricError("no annotations to compare")

    a_idx, b_idx = zip(*pairs)
    matrix = confusion_matrix(a_idx, b_idx, labels=list(range(len(labels)))).astype(np.float64)
    n = matrix.sum()
    p_o = np.trace(matrix) / n
    p_e = float(np.sum(matrix.sum(axis=1) * matrix.sum(axis=0)) / (n * n))
    if p_e == 1.0:
        return 1.0
    return float((p_o - p_e) / (1 - p_e))


def mean_metrics(reports: Sequence[MetricReport]) -> MeanMetrics:
    """Arithmetic mean of headline metrics across runs."""
    if not reports:
        raise MetricError("no reports to average")
    return MeanMetrics(
        f_favor=float(np.mean([r.f_favor for r in reports])),
        f_against=float(np.mean([r.f_against for r in reports])),
        f_avg=float(np.mean([r.f_avg for r in reports])),
        accuracy=float(np.mean([r.accuracy for r in reports])),
    )


def accuracy_by_tweet_count(
    gold: Sequence[StanceLabel],
    predicted: Sequence[StanceLabel],
    tweet_counts: Sequence[int],
) -> dict[str, dict[str, float]]:
    """Accuracy bucketed by how many tweets each user posted (1, 2-3, 4+; 0 kept separate)."""
    buckets: dict[str, list[bool]] = {}
    for g, p, count in zip(gold, predicted, tweet_counts):
        if count == 0:
            key = "0"
        elif count == 1:
            key = "1"
        elif count <= 3:
            key = "2-3"
        else:
            key = "4+"
        buckets.setdefault(key, []).append(StanceLabel(g) == StanceLabel(p))
    return {
        key: {"n": float(len(hits)), "accuracy": sum(hits) / len(hits)}
        for key, hits in sorted(buckets.items())
    }
