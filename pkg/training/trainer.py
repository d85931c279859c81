# training/trainer.py
"""
Fine-tuning, multi-task cycling, intermediate-task chains and restarts.

All randomness flows from integer seeds through np.random.default_rng, so a
(plan, run config, seed) triple fixes every shuffle, batch and update.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterator, Mapping, Optional, Sequence, TypeVar

import numpy as np

from harness.metrics import MetricReport
from harness.pipeline import (
    batch_count,
    encode_examples,
    evaluate,
    iter_batches,
    make_batch,
)
from model.encoder import EncoderConfig
from model.span_model import SpanExtractionModel
from nlp.tokenizer import Vocabulary
from training.optimizer import Adam, OptimizerState
from training.plan import RunConfig, Stage, TaskSpec, TrainingPlan

logger = logging.getLogger(__name__)

T = TypeVar("T")

LEARNING_RATE_GRID = (3e-4, 1e-3, 3e-3)

StageHook = Callable[[int, SpanExtractionModel, OptimizerState], None]


# ───────────────────────────────────────────────────────────────── Reports
@dataclass(frozen=True)
class EpochRecord:
    """One line of the run report."""

    stage: str
    task: str
    epoch: int
    step: int
    loss: float
    metric: Optional[float] = None
    metric_name: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class StageReport:
    stage: str
    steps: int = 0
    records: list[EpochRecord] = field(default_factory=list)
    best_metric: dict[str, float] = field(default_factory=dict)
    final_metric: dict[str, float] = field(default_factory=dict)

    def add(self, record: EpochRecord) -> None:
        self.records.append(record)
        if record.metric is None:
            return
        self.final_metric[record.task] = record.metric
        best = self.best_metric.get(record.task)
        if best is None or record.metric > best:
            self.best_metric[record.task] = record.metric


@dataclass
class PlanResult:
    model: SpanExtractionModel
    stages: list[StageReport]
    optimizer_state: OptimizerState
    seed: int

    @property
    def records(self) -> list[EpochRecord]:
        return [r for s in self.stages for r in s.records]


@dataclass
class RestartResult:
    best: PlanResult
    best_seed: int
    scores: dict[int, float]
    target_task: str


# ──────────────────────────────────────────────────────────────── Sampling
def subsample(dataset: Sequence[T], n: int, seed: int) -> list[T]:
    """n distinct items drawn without replacement, kept in dataset order."""
    if n < 1:
        raise ValueError("subsample size must be ≥ 1")
    if n >= len(dataset):
        return list(dataset)
    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(len(dataset), size=n, replace=False))
    return [dataset[i] for i in picked]


def multitask_batches(
    tasks: Sequence[tuple[str, Sequence[T]]],
    batch_size: int,
    rng: np.random.Generator,
) -> Iterator[tuple[str, list[T]]]:
    """
    Endless (task name, batch) stream: one batch per task in declaration
    order. A task whose epoch runs out is reshuffled and continues.
    """
    if not tasks:
        raise ValueError("multitask_batches needs at least one task")
    for name, items in tasks:
        if not items:
            raise ValueError(f"Task {name} has no examples")

    orders: list[Optional[np.ndarray]] = [None] * len(tasks)
    cursors = [0] * len(tasks)
    while True:
        for i, (name, items) in enumerate(tasks):
            if orders[i] is None or cursors[i] >= len(items):
                orders[i] = rng.permutation(len(items))
                cursors[i] = 0
            idx = orders[i][cursors[i] : cursors[i] + batch_size]
            cursors[i] += batch_size
            yield name, [items[j] for j in idx]


# ─────────────────────────────────────────────────────────────── Training
def _stage_config(config: RunConfig, stage: Stage) -> RunConfig:
    return config.with_overrides(stage.overrides)


def _task_epochs(config: RunConfig, stage: Stage, task: TaskSpec) -> int:
    if "epochs" in stage.overrides or task.epochs is None:
        return config.epochs
    return task.epochs


def _training_examples(task: TaskSpec, config: RunConfig, seed: int):
    n = task.subsample_n or config.subsample_n
    if n is None:
        return list(task.train)
    picked = subsample(task.train, n, seed)
    logger.info("Task %s: subsampled %d of %d training examples", task.name, len(picked), len(task.train))
    return picked


def evaluate_task(
    model: SpanExtractionModel,
    task: TaskSpec,
    *,
    vocab: Vocabulary,
    max_len: int,
    config: RunConfig,
) -> Optional[MetricReport]:
    if not task.dev:
        return None
    return evaluate(
        model,
        task.dev,
        vocab,
        metric=task.metric,
        max_len=max_len,
        labels=task.labels,
        buckets=task.buckets,
        mode=config.decode_mode,
        max_span_len=config.max_span_len,
    )


def _record(
    report: StageReport,
    model: SpanExtractionModel,
    task: TaskSpec,
    *,
    epoch: int,
    step: int,
    loss: float,
    vocab: Vocabulary,
    max_len: int,
    config: RunConfig,
) -> None:
    metric = evaluate_task(model, task, vocab=vocab, max_len=max_len, config=config)
    record = EpochRecord(
        stage=report.stage,
        task=task.name,
        epoch=epoch,
        step=step,
        loss=loss,
        metric=None if metric is None else metric.value,
        metric_name=None if metric is None else metric.metric,
    )
    report.add(record)
    logger.info(
        "[%s] %s epoch %d step %d: loss %.4f %s",
        report.stage,
        task.name,
        epoch,
        step,
        loss,
        "" if metric is None else f"{metric.metric} {metric.value:.4f}",
    )


def run_stage(
    model: SpanExtractionModel,
    stage: Stage,
    tasks: Mapping[str, TaskSpec],
    config: RunConfig,
    seed: int,
    *,
    vocab: Vocabulary,
    max_len: int,
    optimizer_state: Optional[OptimizerState] = None,
) -> tuple[StageReport, OptimizerState]:
    """
    Train `model` in place on one stage. A single task iterates plain shuffled
    epochs; several tasks cycle one batch each until the step budget is spent.
    Returns the stage report and the optimizer state it ended with.
    """
    config = _stage_config(config, stage)
    rng = np.random.default_rng(seed)
    specs = [tasks[name] for name in stage.tasks]
    encoded = {
        spec.name: encode_examples(_training_examples(spec, config, seed), vocab, max_len)
        for spec in specs
    }
    for name, items in encoded.items():
        if not items:
            raise ValueError(f"Task {name}: no trainable examples after encoding")

    per_epoch = sum(batch_count(len(items), config.batch_size) for items in encoded.values())
    if len(specs) == 1:
        total_steps = _task_epochs(config, stage, specs[0]) * per_epoch
    else:
        total_steps = config.max_steps or config.epochs * per_epoch

    optimizer = Adam(
        model.parameters(),
        learning_rate=config.learning_rate,
        betas=(config.beta1, config.beta2),
        epsilon=config.epsilon,
        clip_norm=config.clip_norm,
        total_steps=total_steps if config.linear_decay else None,
        state=optimizer_state,
    )
    report = StageReport(stage=stage.name)
    logger.info(
        "Stage %s: %d task(s), %d steps, lr %g, batch %d, seed %d",
        stage.name,
        len(specs),
        total_steps,
        config.learning_rate,
        config.batch_size,
        seed,
    )

    if len(specs) == 1:
        spec = specs[0]
        items = encoded[spec.name]
        for epoch in range(1, _task_epochs(config, stage, spec) + 1):
            epoch_loss = 0.0
            for batch in iter_batches(items, config.batch_size, vocab, rng):
                loss, grads = model.loss_and_grads(batch, rng=rng)
                optimizer.step(grads)
                epoch_loss += loss
                report.steps += 1
            _record(
                report,
                model,
                spec,
                epoch=epoch,
                step=report.steps,
                loss=epoch_loss / len(items),
                vocab=vocab,
                max_len=max_len,
                config=config,
            )
        return report, optimizer.state

    stream = multitask_batches(
        [(spec.name, encoded[spec.name]) for spec in specs], config.batch_size, rng
    )
    window_loss = {spec.name: 0.0 for spec in specs}
    window_count = {spec.name: 0 for spec in specs}
    epoch = 0
    for step in range(1, total_steps + 1):
        name, items = next(stream)
        loss, grads = model.loss_and_grads(make_batch(items, vocab), rng=rng)
        optimizer.step(grads)
        window_loss[name] += loss
        window_count[name] += len(items)
        report.steps = step
        if step % per_epoch == 0 or step == total_steps:
            epoch += 1
            for spec in specs:
                count = window_count[spec.name]
                _record(
                    report,
                    model,
                    spec,
                    epoch=epoch,
                    step=step,
                    loss=window_loss[spec.name] / count if count else float("nan"),
                    vocab=vocab,
                    max_len=max_len,
                    config=config,
                )
                window_loss[spec.name], window_count[spec.name] = 0.0, 0
    return report, optimizer.state


def _stage_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def run_plan(
    model: SpanExtractionModel,
    plan: TrainingPlan,
    config: RunConfig,
    *,
    vocab: Vocabulary,
    max_len: int,
    seed: Optional[int] = None,
    on_stage_start: Optional[StageHook] = None,
    on_stage_end: Optional[StageHook] = None,
) -> PlanResult:
    """
    Run every stage in order on the same model. Weights carry over between
    stages; the optimizer state is zeroed at each boundary when the plan says so.
    """
    seed = config.seed if seed is None else seed
    state = OptimizerState.zeros_like(model.parameters())
    reports: list[StageReport] = []
    for index, stage in enumerate(plan.stages):
        if index > 0 and plan.reset_optimizer_between_stages:
            state = OptimizerState.zeros_like(model.parameters())
            logger.info("Optimizer reset before stage %s; weights %s", stage.name, model.params_digest()[:12])
        if on_stage_start is not None:
            on_stage_start(index, model, state)
        report, state = run_stage(
            model,
            stage,
            plan.tasks,
            config,
            _stage_seed(seed, index),
            vocab=vocab,
            max_len=max_len,
            optimizer_state=state,
        )
        reports.append(report)
        if on_stage_end is not None:
            on_stage_end(index, model, state)
    return PlanResult(model=model, stages=reports, optimizer_state=state, seed=seed)


def random_restarts(
    plan: TrainingPlan,
    config: RunConfig,
    k: Optional[int] = None,
    *,
    model_config: EncoderConfig,
    vocab: Vocabulary,
    max_len: int,
) -> RestartResult:
    """
    k full runs from fresh initialisations with seeds seed+0 … seed+k-1.
    The best run by the target task's final dev metric wins; ties go to the
    lowest seed. A single run needs no dev split and is then left unscored.
    """
    k = config.restarts if k is None else k
    if k < 1:
        raise ValueError("random_restarts needs k ≥ 1")
    target = plan.tasks[plan.target_task]
    if not target.dev and k > 1:
        raise ValueError(f"Target task {target.name} has no dev split to select restarts by")

    best: Optional[PlanResult] = None
    best_seed, best_score = config.seed, -np.inf
    scores: dict[int, float] = {}
    for seed in range(config.seed, config.seed + k):
        model = SpanExtractionModel.initialize(model_config, seed)
        result = run_plan(model, plan, config, vocab=vocab, max_len=max_len, seed=seed)
        if not target.dev:
            logger.info("Target task %s has no dev split; run seed %d is not scored", target.name, seed)
            return RestartResult(best=result, best_seed=seed, scores={}, target_task=target.name)
        score = evaluate_task(model, target, vocab=vocab, max_len=max_len, config=config).value
        scores[seed] = score
        logger.info("Restart seed %d: %s %s = %.4f", seed, target.name, target.metric, score)
        if best is None or score > best_score:
            best, best_seed, best_score = result, seed, score
    return RestartResult(best=best, best_seed=best_seed, scores=scores, target_task=target.name)


def learning_rate_grid(
    plan: TrainingPlan,
    config: RunConfig,
    *,
    model_config: EncoderConfig,
    vocab: Vocabulary,
    max_len: int,
    rates: Sequence[float] = LEARNING_RATE_GRID,
) -> tuple[float, dict[float, RestartResult]]:
    """Coarse learning-rate search; the first rate wins ties."""
    target = plan.tasks[plan.target_task]
    if not target.dev:
        raise ValueError(f"Target task {target.name} has no dev split to compare learning rates by")
    results: dict[float, RestartResult] = {}
    best_rate, best_score = rates[0], -np.inf
    for rate in rates:
        result = random_restarts(
            plan,
            config.with_overrides({"learning_rate": rate}),
            model_config=model_config,
            vocab=vocab,
            max_len=max_len,
        )
        results[rate] = result
        score = result.scores[result.best_seed]
        if score > best_score:
            best_rate, best_score = rate, score
    logger.info("Learning-rate grid: best %g (%.4f)", best_rate, best_score)
    return best_rate, results
