# training/plan.py
"""
Run configuration and training plans.

A plan is an ordered list of stages. A stage with one task is plain
fine-tuning; a stage with several tasks is multi-task training. Chaining
stages (intermediate → target) is supplementary training on intermediate
tasks; model weights carry over and, by default, the optimizer restarts.

Plan file (JSON):

    {
      "vocab": "vocab.txt",                     # optional; built from train data otherwise
      "max_len": 128,                           # optional; SPANEX_MAX_LEN otherwise
      "model": {"num_layers": 2, "hidden_dim": 32, ...},
      "run": {"batch_size": 20, "epochs": 5, "learning_rate": 1e-3, "seed": 0},
      "tasks": {
        "mnli": {"train": "mnli_train.jsonl", "dev": "mnli_dev.jsonl", "template": "mnli"},
        "rte":  {"train": "rte_train.jsonl",  "dev": "rte_dev.jsonl",  "template": "rte"}
      },
      "stages": [{"tasks": ["mnli"]}, {"tasks": ["rte"], "overrides": {"epochs": 3}}],
      "reset_optimizer_between_stages": true,
      "selection_task": "rte"
    }
"""
from __future__ import annotations

import dataclasses
import json
import logging
import pathlib
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

from harness.datasets import load_dataset
from model.span_decoder import DEFAULT_MAX_SPAN_LEN, DecodeMode
from nlp.reformulation import BucketSpec, LabelSet, SpanExample, TaskKind
from nlp.tasks import METRICS, get_template
from utils import settings

logger = logging.getLogger(__name__)


def _reject_unknown(cls, raw: Mapping[str, Any], what: str) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"Unknown {what} keys: {sorted(unknown)}")


@dataclass(frozen=True)
class RunConfig:
    batch_size: int = 20
    epochs: int = 5
    learning_rate: float = 1e-3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    subsample_n: Optional[int] = None
    restarts: int = 1
    # total optimizer steps for a multi-task stage; defaults to `epochs` passes
    max_steps: Optional[int] = None
    linear_decay: bool = False
    clip_norm: Optional[float] = None
    decode_mode: DecodeMode = DecodeMode.INDEPENDENT
    max_span_len: int = DEFAULT_MAX_SPAN_LEN

    def __post_init__(self) -> None:
        object.__setattr__(self, "decode_mode", DecodeMode(self.decode_mode))
        if self.batch_size < 1:
            raise ValueError("batch_size must be ≥ 1")
        if self.epochs < 1:
            raise ValueError("epochs must be ≥ 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be ≥ 1")
        if self.subsample_n is not None and self.subsample_n < 1:
            raise ValueError("subsample_n must be ≥ 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be ≥ 1")

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "RunConfig":
        _reject_unknown(cls, raw, "run config")
        return cls(**raw)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        _reject_unknown(RunConfig, overrides, "run override")
        return dataclasses.replace(self, **overrides)


@dataclass(frozen=True)
class TaskSpec:
    """A named dataset pair plus what is needed to score it."""

    name: str
    train: tuple[SpanExample, ...]
    dev: tuple[SpanExample, ...] = ()
    metric: str = "exact_match"
    labels: Optional[LabelSet] = None
    buckets: Optional[BucketSpec] = None
    epochs: Optional[int] = None
    subsample_n: Optional[int] = None

    def __post_init__(self) -> None:
        if self.metric not in METRICS:
            raise ValueError(f"Task {self.name}: unknown metric {self.metric!r}")
        if self.metric in ("accuracy", "matthews") and self.labels is None:
            raise ValueError(f"Task {self.name}: metric {self.metric} needs labels")
        if self.metric == "pearson_spearman_avg" and self.buckets is None:
            raise ValueError(f"Task {self.name}: metric {self.metric} needs buckets")
        if not self.train:
            raise ValueError(f"Task {self.name} has no training examples")

    @property
    def kind(self) -> TaskKind:
        return self.train[0].task_kind


@dataclass(frozen=True)
class Stage:
    tasks: tuple[str, ...]
    overrides: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not self.tasks:
            raise ValueError("A stage needs at least one task")
        if len(set(self.tasks)) != len(self.tasks):
            raise ValueError(f"Task names repeat within a stage: {self.tasks}")
        RunConfig().with_overrides(self.overrides)

    @property
    def name(self) -> str:
        return "+".join(self.tasks)


@dataclass(frozen=True)
class TrainingPlan:
    stages: tuple[Stage, ...]
    tasks: Mapping[str, TaskSpec]
    reset_optimizer_between_stages: bool = True
    selection_task: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ValueError("A training plan needs at least one stage")
        for stage in self.stages:
            missing = [t for t in stage.tasks if t not in self.tasks]
            if missing:
                raise ValueError(f"Stage {stage.name} names undefined tasks: {missing}")
        if self.selection_task is not None and self.selection_task not in self.tasks:
            raise ValueError(f"Selection task {self.selection_task!r} is not defined")

    @property
    def target_task(self) -> str:
        """Task whose dev metric picks the best restart: explicit, else the last stage's first."""
        return self.selection_task or self.stages[-1].tasks[0]

    @classmethod
    def chain(
        cls,
        tasks: Sequence[TaskSpec],
        *,
        reset_optimizer_between_stages: bool = True,
    ) -> "TrainingPlan":
        """One single-task stage per task, in order: I1 → I2 → … → T."""
        return cls(
            stages=tuple(Stage((t.name,)) for t in tasks),
            tasks={t.name: t for t in tasks},
            reset_optimizer_between_stages=reset_optimizer_between_stages,
        )


@dataclass(frozen=True)
class PlanFile:
    """Everything a plan file describes beyond the TrainingPlan itself."""

    plan: TrainingPlan
    run: RunConfig
    model: Mapping[str, Any]
    vocab_path: Optional[pathlib.Path]
    max_len: int


def _task_from_dict(name: str, raw: Mapping[str, Any], base: pathlib.Path) -> TaskSpec:
    allowed = {"train", "dev", "template", "metric", "labels", "buckets", "epochs", "subsample_n"}
    unknown = set(raw) - allowed
    if unknown:
        raise ValueError(f"Task {name}: unknown keys {sorted(unknown)}")
    if "train" not in raw:
        raise ValueError(f"Task {name}: a 'train' dataset path is required")

    template = get_template(raw["template"]) if "template" in raw else None
    labels = template.labels if template else None
    buckets = template.buckets if template else None
    metric = template.metric if template else "exact_match"
    epochs = template.epochs if template else None
    if "labels" in raw:
        labels = LabelSet(tuple(raw["labels"]))
    if "buckets" in raw:
        b = raw["buckets"]
        buckets = BucketSpec(float(b["min_value"]), float(b["max_value"]), int(b["bucket_count"]))
    metric = raw.get("metric", metric)
    epochs = raw.get("epochs", epochs)

    train = tuple(load_dataset(base / raw["train"]))
    dev = tuple(load_dataset(base / raw["dev"])) if raw.get("dev") else ()
    return TaskSpec(
        name=name,
        train=train,
        dev=dev,
        metric=metric,
        labels=labels,
        buckets=buckets,
        epochs=epochs,
        subsample_n=raw.get("subsample_n"),
    )


def load_plan(path: str | pathlib.Path) -> PlanFile:
    """Read a plan file; dataset paths are relative to the plan's directory."""
    path = pathlib.Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"Plan file {path} is not valid JSON: {e}") from e

    allowed = {
        "vocab",
        "max_len",
        "model",
        "run",
        "tasks",
        "stages",
        "reset_optimizer_between_stages",
        "selection_task",
    }
    unknown = set(raw) - allowed
    if unknown:
        raise ValueError(f"Unknown plan keys: {sorted(unknown)}")

    base = path.parent
    tasks = {name: _task_from_dict(name, spec, base) for name, spec in raw.get("tasks", {}).items()}
    stages = tuple(
        Stage(tuple(s["tasks"]), dict(s.get("overrides", {}))) for s in raw.get("stages", [])
    )
    plan = TrainingPlan(
        stages=stages,
        tasks=tasks,
        reset_optimizer_between_stages=raw.get("reset_optimizer_between_stages", True),
        selection_task=raw.get("selection_task"),
    )
    logger.info(
        "Loaded plan %s: %d stages over tasks %s",
        path,
        len(stages),
        ", ".join(tasks),
    )
    return PlanFile(
        plan=plan,
        run=RunConfig.from_dict(raw.get("run", {})),
        model=dict(raw.get("model", {})),
        vocab_path=(base / raw["vocab"]) if raw.get("vocab") else None,
        max_len=int(raw.get("max_len") or settings.get_int("SPANEX_MAX_LEN")),
    )
