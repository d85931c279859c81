# harness/experiments.py
"""
Low-data transfer comparison: a subsampled target task trained from scratch
versus after a stage on a related intermediate task, over several seeds.
"""
from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass
from typing import Any, Optional

from harness.synthetic import SUITE_INFO, generate_synthetic_suite
from model.encoder import EncoderConfig
from model.span_model import SpanExtractionModel
from nlp.reformulation import SpanExample
from nlp.tokenizer import Vocabulary, build_vocabulary
from training.plan import RunConfig, TaskSpec, TrainingPlan
from training.trainer import evaluate_task, run_plan, subsample

logger = logging.getLogger(__name__)

SCRATCH_COLUMN = "from_scratch"
INTERMEDIATE_COLUMN = "intermediate_then_target"


@dataclass(frozen=True)
class ComparisonSetup:
    target_kind: str = "cue_classification"
    intermediate_kind: str = "cue_classification"
    target_n: int = 50
    target_pool_n: int = 1000
    target_dev_n: int = 200
    intermediate_n: int = 1000
    intermediate_dev_n: int = 100
    seeds: int = 5
    vocab_size: int = 64
    data_seed: int = 0
    target_epochs: Optional[int] = None
    intermediate_epochs: Optional[int] = None


def _task(name: str, kind: str, train, dev, epochs: Optional[int]) -> TaskSpec:
    info = SUITE_INFO[kind]
    return TaskSpec(
        name=name,
        train=tuple(train),
        dev=tuple(dev),
        metric=info.metric,
        labels=info.labels,
        buckets=info.buckets,
        epochs=epochs,
    )


def _vocabulary(*datasets: list[SpanExample]) -> Vocabulary:
    return build_vocabulary(
        text for data in datasets for ex in data for text in (ex.source_text, ex.auxiliary_text)
    )


def compare_intermediate_training(
    setup: ComparisonSetup,
    *,
    model_config: dict[str, Any],
    run: RunConfig,
    max_len: int,
) -> dict[str, Any]:
    """
    Seeds run.seed … run.seed + setup.seeds - 1. Each seed draws its own
    target subset, shared by both arms, and initialises both models alike.
    """
    target_pool, target_dev = generate_synthetic_suite(
        setup.target_kind,
        setup.target_pool_n,
        setup.data_seed,
        setup.vocab_size,
        dev_n=setup.target_dev_n,
    )
    inter_train, inter_dev = generate_synthetic_suite(
        setup.intermediate_kind,
        setup.intermediate_n,
        setup.data_seed + 1,
        setup.vocab_size,
        dev_n=setup.intermediate_dev_n,
    )
    vocab = _vocabulary(target_pool, target_dev, inter_train, inter_dev)
    config = EncoderConfig.from_dict({**model_config, "vocab_size": len(vocab)})
    intermediate = _task("intermediate", setup.intermediate_kind, inter_train, inter_dev, setup.intermediate_epochs)

    seeds = list(range(run.seed, run.seed + setup.seeds))
    columns = {SCRATCH_COLUMN: [], INTERMEDIATE_COLUMN: []}
    for seed in seeds:
        target = _task(
            "target",
            setup.target_kind,
            subsample(target_pool, setup.target_n, seed),
            target_dev,
            setup.target_epochs,
        )
        for column, tasks in (
            (SCRATCH_COLUMN, [target]),
            (INTERMEDIATE_COLUMN, [intermediate, target]),
        ):
            model = SpanExtractionModel.initialize(config, seed)
            run_plan(model, TrainingPlan.chain(tasks), run, vocab=vocab, max_len=max_len, seed=seed)
            score = evaluate_task(model, target, vocab=vocab, max_len=max_len, config=run).value
            columns[column].append(score)
            logger.info("seed %d %s: %s %.4f", seed, column, target.metric, score)

    report = {
        "target": setup.target_kind,
        "intermediate": setup.intermediate_kind,
        "metric": SUITE_INFO[setup.target_kind].metric,
        "target_train_size": setup.target_n,
        "seeds": seeds,
        "columns": [
            {"name": name, "scores": scores, "median": statistics.median(scores)}
            for name, scores in columns.items()
        ],
    }
    logger.info(
        "Median %s: %s %.4f vs %s %.4f",
        report["metric"],
        SCRATCH_COLUMN,
        report["columns"][0]["median"],
        INTERMEDIATE_COLUMN,
        report["columns"][1]["median"],
    )
    return report
