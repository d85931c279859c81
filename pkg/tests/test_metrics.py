import logging

import numpy as np
import pytest

from harness.metrics import compute_metric, normalize_answer
from nlp.reformulation import BucketSpec, LabelSet

SENTIMENT = LabelSet(("positive", "negative"))
STS = BucketSpec(0.0, 5.0, 21)


def test_normalize_answer():
    assert normalize_answer("  10 July\n 1856 ") == "10 july 1856"


def test_exact_match():
    report = compute_metric(["10 July 1856", " paris", "", "x"], ["10 july 1856", "Paris", "a", "y"], "exact_match")
    assert report.value == pytest.approx(0.5)
    assert (report.n, report.valid_predictions) == (4, 3)
    assert report.to_dict() == {"metric": "exact_match", "value": 0.5, "n": 4, "valid_predictions": 3}


def test_accuracy_reads_labels_back_from_spans():
    preds = ["negative", "or negative", "positive", "positive"]
    report = compute_metric(preds, [1, 1, 1, "positive"], "accuracy", labels=SENTIMENT)
    assert report.value == pytest.approx(0.75)
    assert report.valid_predictions == 3


def test_matthews_correlation():
    preds = ["positive", "negative", "positive", "negative"]
    assert compute_metric(preds, [0, 1, 0, 1], "matthews", labels=SENTIMENT).value == pytest.approx(1.0)
    assert compute_metric(preds, [1, 0, 1, 0], "matthews", labels=SENTIMENT).value == pytest.approx(-1.0)


def test_correlation_average():
    preds = ["0.0", "1.0", "2.5", "5.0"]
    report = compute_metric(preds, [0.0, 1.0, 2.5, 5.0], "pearson_spearman_avg", buckets=STS)
    assert report.value == pytest.approx(1.0)
    assert report.valid_predictions == 4


def test_constant_predictions_give_zero_correlation(caplog):
    with caplog.at_level(logging.WARNING, logger="harness.metrics"):
        report = compute_metric(["1.0"] * 3, [0.0, 1.0, 2.0], "pearson_spearman_avg", buckets=STS)
    assert report.value == 0.0
    assert "undefined" in caplog.text


def test_empty_input():
    assert compute_metric([], [], "exact_match").value == 0.0
    assert compute_metric([], [], "accuracy", labels=SENTIMENT).n == 0


def test_metric_errors():
    with pytest.raises(ValueError, match="predictions"):
        compute_metric(["a"], [], "exact_match")
    with pytest.raises(ValueError, match="Unknown metric"):
        compute_metric(["a"], ["a"], "bleu")
    with pytest.raises(ValueError, match="LabelSet"):
        compute_metric(["a"], [0], "accuracy")
    with pytest.raises(ValueError, match="BucketSpec"):
        compute_metric(["a"], [0.0], "pearson_spearman_avg")


@pytest.mark.parametrize(
    "metric, preds, golds, kwargs",
    [
        ("exact_match", ["a b", "c", "", "d", "e f"], ["a b", "x", "y", "D", "e"], {}),
        ("accuracy", ["positive", "negative", "negative", "or", "positive"], [0, 1, 0, 1, 1], {"labels": SENTIMENT}),
        ("matthews", ["positive", "negative", "negative", "positive", "positive"], [0, 1, 0, 1, 0], {"labels": SENTIMENT}),
        ("pearson_spearman_avg", ["0.0", "1.5", "2.5", "4.0", "3.0"], [0.2, 1.0, 3.0, 4.5, 2.5], {"buckets": STS}),
    ],
)
def test_metrics_ignore_example_order(metric, preds, golds, kwargs):
    expected = compute_metric(preds, golds, metric, **kwargs)
    rng = np.random.default_rng(0)
    for _ in range(5):
        order = rng.permutation(len(preds))
        shuffled = compute_metric([preds[i] for i in order], [golds[i] for i in order], metric, **kwargs)
        assert shuffled.value == pytest.approx(expected.value, rel=1e-12, abs=1e-12)
        assert shuffled.valid_predictions == expected.valid_predictions
