# harness/metrics.py
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import pearsonr, spearmanr
from sklearn.metrics import matthews_corrcoef

from nlp.reformulation import (
    BucketSpec,
    LabelSet,
    normalize_whitespace,
    span_to_label,
    span_to_value,
)
from nlp.tasks import METRICS

logger = logging.getLogger(__name__)

Gold = Union[str, int, float]


@dataclass(frozen=True)
class MetricReport:
    metric: str
    value: float
    n: int
    valid_predictions: int

    def __post_init__(self) -> None:
        if not self.n >= self.valid_predictions >= 0:
            raise ValueError("MetricReport needs n ≥ valid_predictions ≥ 0")

    def to_dict(self) -> dict:
        return asdict(self)


def normalize_answer(text: str) -> str:
    """Exact-match normalisation: trim, collapse whitespace, lowercase."""
    return normalize_whitespace(text).lower()


def _labels_of(items: Sequence[Gold], labels: LabelSet) -> tuple[list[int], int]:
    out, valid = [], 0
    for item in items:
        if isinstance(item, str):
            idx, ok = span_to_label(item, labels)
        else:
            idx, ok = int(item), True
        out.append(idx)
        valid += ok
    return out, valid


def _values_of(items: Sequence[Gold], buckets: BucketSpec) -> tuple[np.ndarray, int]:
    out, valid = [], 0
    for item in items:
        if isinstance(item, str):
            val, ok = span_to_value(item, buckets)
        else:
            val, ok = float(item), True
        out.append(val)
        valid += ok
    return np.asarray(out, dtype=np.float64), valid


def _correlation(fn, x: np.ndarray, y: np.ndarray, name: str) -> float:
    if len(x) < 2 or np.all(x == x[0]) or np.all(y == y[0]):
        logger.warning("%s correlation undefined for constant or single-element input; using 0", name)
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        stat = fn(x, y)[0]
    if np.isnan(stat):
        logger.warning("%s correlation is NaN; using 0", name)
        return 0.0
    return float(stat)


def compute_metric(
    preds: Sequence[str],
    golds: Sequence[Gold],
    metric: str,
    *,
    labels: Optional[LabelSet] = None,
    buckets: Optional[BucketSpec] = None,
) -> MetricReport:
    """
    `preds` are extracted span texts. `golds` are gold span texts, or already
    decoded label indices / values.
    """
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions but {len(golds)} gold answers")
    if metric not in METRICS:
        raise ValueError(f"Unknown metric {metric!r}; choose from {METRICS}")
    n = len(preds)

    if metric == "exact_match":
        hits = [normalize_answer(p) == normalize_answer(str(g)) for p, g in zip(preds, golds)]
        value = float(np.mean(hits)) if n else 0.0
        return MetricReport(metric, value, n, sum(bool(p.strip()) for p in preds))

    if metric in ("accuracy", "matthews"):
        if labels is None:
            raise ValueError(f"{metric} needs a LabelSet")
        pred_labels, valid = _labels_of(preds, labels)
        gold_labels, _ = _labels_of(golds, labels)
        if not n:
            return MetricReport(metric, 0.0, 0, 0)
        if metric == "accuracy":
            value = float(np.mean(np.asarray(pred_labels) == np.asarray(gold_labels)))
        else:
            value = float(matthews_corrcoef(gold_labels, pred_labels))
        return MetricReport(metric, value, n, valid)

    if buckets is None:
        raise ValueError(f"{metric} needs a BucketSpec")
    pred_values, valid = _values_of(preds, buckets)
    gold_values, _ = _values_of(golds, buckets)
    pearson = _correlation(pearsonr, pred_values, gold_values, "Pearson")
    spearman = _correlation(spearmanr, pred_values, gold_values, "Spearman")
    return MetricReport(metric, (pearson + spearman) / 2.0, n, valid)
