# nlp/tasks.py
"""Reformulation templates for the benchmark tasks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from nlp.reformulation import (
    BucketSpec,
    Layout,
    LabelSet,
    TaskKind,
    classify_to_span,
    qa_to_span,
    regress_to_span,
)

METRICS = ("exact_match", "accuracy", "matthews", "pearson_spearman_avg")


@dataclass(frozen=True)
class TaskTemplate:
    name: str
    kind: TaskKind
    metric: str
    labels: Optional[LabelSet] = None
    # raw dataset label value for each description, same order as labels
    raw_labels: tuple[str, ...] = ()
    definitional_labels: Optional[LabelSet] = None
    buckets: Optional[BucketSpec] = None
    single_sentence: bool = False
    mark_unanswerable: bool = False
    epochs: Optional[int] = None

    def __post_init__(self) -> None:
        if self.metric not in METRICS:
            raise ValueError(f"Unknown metric {self.metric!r} for task {self.name}")
        if self.kind is TaskKind.CLASSIFICATION:
            if self.labels is None:
                raise ValueError(f"Classification task {self.name} needs labels")
            if self.raw_labels and len(self.raw_labels) != len(self.labels):
                raise ValueError(f"Task {self.name}: raw_labels and labels differ in length")
        if self.kind is TaskKind.REGRESSION and self.buckets is None:
            raise ValueError(f"Regression task {self.name} needs a bucket spec")

    def label_index(self, raw: str) -> int:
        try:
            return self.raw_labels.index(raw.strip())
        except ValueError as e:
            raise ValueError(f"Task {self.name}: unknown raw label {raw!r}") from e

    def render_inputs(
        self,
        text_a: Optional[str],
        text_b: Optional[str],
        *,
        definitional: bool = False,
        layout: Layout = "segmented",
    ) -> tuple[str, str]:
        """(source, auxiliary) for unlabeled input, laid out as in training."""
        if self.kind is TaskKind.QA:
            ex = qa_to_span(text_a or "", text_b or "", mark_unanswerable=True)
            source = ex.source_text if self.mark_unanswerable else (text_a or "")
            return source, ex.auxiliary_text
        if self.kind is TaskKind.REGRESSION:
            ex = regress_to_span(text_a, text_b, self.buckets, self.buckets.min_value)
            return ex.source_text, ex.auxiliary_text
        labels = self.labels
        if definitional and self.definitional_labels is not None:
            labels = self.definitional_labels
        if self.single_sentence:
            ex = classify_to_span(None, text_a, labels, 0)
        else:
            ex = classify_to_span(text_a, text_b, labels, 0, layout=layout)
        return ex.source_text, ex.auxiliary_text


_NLI = LabelSet(("entailment", "contradiction", "neutral"))
_NLI_DEFINITIONS = LabelSet(
    (
        "entailment means the second sentence must be true",
        "contradiction means the second sentence cannot be true",
        "neutral means the second sentence might be true",
    )
)
_ENTAILMENT_OR_NOT = LabelSet(("entailment", "not"))
STS_BUCKETS = BucketSpec(0.0, 5.0, 21)

TASK_TEMPLATES: dict[str, TaskTemplate] = {
    t.name: t
    for t in (
        TaskTemplate(
            "sst",
            TaskKind.CLASSIFICATION,
            "accuracy",
            labels=LabelSet(("positive", "negative")),
            raw_labels=("1", "0"),
            definitional_labels=LabelSet(
                ("positive means the review likes the film", "negative means the review dislikes the film")
            ),
            single_sentence=True,
        ),
        TaskTemplate(
            "cola",
            TaskKind.CLASSIFICATION,
            "matthews",
            labels=LabelSet(("acceptable", "ungrammatical")),
            raw_labels=("1", "0"),
            single_sentence=True,
        ),
        TaskTemplate(
            "mnli",
            TaskKind.CLASSIFICATION,
            "accuracy",
            labels=_NLI,
            raw_labels=("entailment", "contradiction", "neutral"),
            definitional_labels=_NLI_DEFINITIONS,
        ),
        TaskTemplate(
            "rte",
            TaskKind.CLASSIFICATION,
            "accuracy",
            labels=_ENTAILMENT_OR_NOT,
            raw_labels=("entailment", "not_entailment"),
        ),
        TaskTemplate(
            "qnli",
            TaskKind.CLASSIFICATION,
            "accuracy",
            labels=_ENTAILMENT_OR_NOT,
            raw_labels=("entailment", "not_entailment"),
        ),
        TaskTemplate(
            "qqp",
            TaskKind.CLASSIFICATION,
            "accuracy",
            labels=LabelSet(("duplicate", "distinct")),
            raw_labels=("1", "0"),
            epochs=2,
        ),
        TaskTemplate(
            "mrpc",
            TaskKind.CLASSIFICATION,
            "accuracy",
            labels=LabelSet(("equivalent", "not")),
            raw_labels=("1", "0"),
        ),
        TaskTemplate("stsb", TaskKind.REGRESSION, "pearson_spearman_avg", buckets=STS_BUCKETS),
        TaskTemplate("squad", TaskKind.QA, "exact_match", epochs=2),
        TaskTemplate("squad2", TaskKind.QA, "exact_match", mark_unanswerable=True, epochs=2),
        TaskTemplate("zre", TaskKind.QA, "exact_match", mark_unanswerable=True),
    )
}


def get_template(name: str) -> TaskTemplate:
    try:
        return TASK_TEMPLATES[name.lower()]
    except KeyError as e:
        raise KeyError(f"Unknown task template {name!r}; known: {sorted(TASK_TEMPLATES)}") from e
