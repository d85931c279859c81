"""Desk-scale training runs; each takes minutes on a laptop CPU."""
import pytest

from harness.experiments import ComparisonSetup, compare_intermediate_training
from harness.synthetic import SUITE_INFO, generate_synthetic_suite
from model.encoder import EncoderConfig
from model.span_model import SpanExtractionModel
from nlp.tokenizer import build_vocabulary
from training.plan import RunConfig, TaskSpec, TrainingPlan
from training.trainer import evaluate_task, run_plan

pytestmark = pytest.mark.slow

MAX_LEN = 64
MODEL = {"num_layers": 2, "hidden_dim": 32, "num_heads": 4, "ffn_dim": 64, "max_positions": MAX_LEN}


def train_suite(kind, n, dev_n, epochs, learning_rate=3e-3):
    train, dev = generate_synthetic_suite(kind, n, seed=0, vocab_size=64, dev_n=dev_n)
    vocab = build_vocabulary(t for ex in train + dev for t in (ex.source_text, ex.auxiliary_text))
    info = SUITE_INFO[kind]
    task = TaskSpec(kind, tuple(train), tuple(dev), info.metric, info.labels, info.buckets)
    config = EncoderConfig.from_dict({**MODEL, "vocab_size": len(vocab)})
    run = RunConfig(batch_size=10, epochs=epochs, learning_rate=learning_rate, seed=0)
    model = SpanExtractionModel.initialize(config, 0)
    result = run_plan(model, TrainingPlan.chain([task]), run, vocab=vocab, max_len=MAX_LEN)
    return result, evaluate_task(model, task, vocab=vocab, max_len=MAX_LEN, config=run)


def test_lookup_qa_is_learned_exactly():
    result, report = train_suite("lookup_qa", 200, 50, epochs=150)
    losses = [r.loss for r in result.records]
    assert losses[-1] < losses[0]
    assert report.value == pytest.approx(1.0)


def test_cue_classification_is_learned():
    _, report = train_suite("cue_classification", 200, 50, epochs=60)
    assert report.value >= 0.95


def test_overlap_regression_correlates():
    _, report = train_suite("overlap_regression", 400, 100, epochs=150)
    assert report.value >= 0.9


def test_intermediate_training_helps_a_small_target():
    setup = ComparisonSetup(target_n=50, seeds=5)
    report = compare_intermediate_training(
        setup,
        model_config=MODEL,
        run=RunConfig(batch_size=10, epochs=10, learning_rate=3e-3),
        max_len=MAX_LEN,
    )
    scratch, intermediate = (c["median"] for c in report["columns"])
    assert intermediate >= scratch
