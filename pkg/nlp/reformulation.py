# nlp/reformulation.py
"""
Classification, regression and QA examples, all rewritten as one problem:
extract a span of a *source* text, guided by an *auxiliary* text.

Classification appends the label descriptions to the source ("positive or
negative?"), regression appends the rendered bucket values ("0.0 0.25 … 5.0"),
and QA uses the context unchanged.
"""
from __future__ import annotations

import difflib
import logging
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Literal, Optional

import numpy as np

logger = logging.getLogger(__name__)

UNANSWERABLE = "unanswerable"

CharRange = tuple[int, int]
Layout = Literal["segmented", "unsegmented"]

_WORD_RE = re.compile(r"\w+")


class ReformulationError(ValueError):
    """An example cannot be turned into (or read back from) a span."""


class TaskKind(str, Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"
    QA = "qa"


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


# ───────────────────────────────────────────────────────────── Domain types
@dataclass(frozen=True)
class SpanExample:
    source_text: str
    auxiliary_text: str
    gold_char_span: CharRange
    task_kind: TaskKind
    gold_label: Optional[int] = None
    gold_value: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))
        start, end = self.gold_char_span
        object.__setattr__(self, "gold_char_span", (int(start), int(end)))
        if not 0 <= start < end <= len(self.source_text):
            raise ReformulationError(
                f"Gold span {self.gold_char_span} is empty or outside a source of "
                f"{len(self.source_text)} characters"
            )
        if self.task_kind is TaskKind.CLASSIFICATION and self.gold_label is None:
            raise ReformulationError("Classification examples need a gold label")
        if self.task_kind is TaskKind.REGRESSION and self.gold_value is None:
            raise ReformulationError("Regression examples need a gold value")

    @property
    def gold_text(self) -> str:
        start, end = self.gold_char_span
        return self.source_text[start:end]


@dataclass(frozen=True)
class LabelSet:
    """
    Natural-language label descriptions and how they are joined into the
    option list: "a or b?" for two labels, "a, b, or c?" for more.
    """

    descriptions: tuple[str, ...]
    separator: str = ", "
    final_separator: str = ", or "
    pair_separator: str = " or "
    terminator: str = "?"

    def __post_init__(self) -> None:
        object.__setattr__(self, "descriptions", tuple(self.descriptions))
        descs = self.descriptions
        if len(descs) < 2:
            raise ReformulationError("A label set needs at least two descriptions")
        if any(not d.strip() for d in descs):
            raise ReformulationError("Label descriptions must be non-empty")
        if len(set(descs)) != len(descs):
            raise ReformulationError(f"Label descriptions must be distinct: {descs}")
        for i, a in enumerate(descs):
            for j, b in enumerate(descs):
                if i != j and a in b:
                    raise ReformulationError(
                        f"Label {a!r} is a substring of {b!r}; the option list would be ambiguous"
                    )

    def __len__(self) -> int:
        return len(self.descriptions)

    def render(self) -> tuple[str, list[CharRange]]:
        """Option list text and the character range of each description inside it."""
        descs = self.descriptions
        parts: list[str] = []
        ranges: list[CharRange] = []
        pos = 0
        for i, desc in enumerate(descs):
            if i > 0:
                if len(descs) == 2:
                    joiner = self.pair_separator
                elif i == len(descs) - 1:
                    joiner = self.final_separator
                else:
                    joiner = self.separator
                parts.append(joiner)
                pos += len(joiner)
            parts.append(desc)
            ranges.append((pos, pos + len(desc)))
            pos += len(desc)
        parts.append(self.terminator)
        return "".join(parts), ranges


@dataclass(frozen=True)
class BucketSpec:
    min_value: float
    max_value: float
    bucket_count: int = 21

    def __post_init__(self) -> None:
        if not self.min_value < self.max_value:
            raise ReformulationError(
                f"Bucket range must satisfy min < max, got [{self.min_value}, {self.max_value}]"
            )
        if not 2 <= self.bucket_count <= 64:
            raise ReformulationError(f"bucket_count must be in [2, 64], got {self.bucket_count}")
        if len(set(self.rendered)) != self.bucket_count:
            raise ReformulationError("Rendered bucket values are not pairwise distinct")

    @property
    def width(self) -> float:
        return (self.max_value - self.min_value) / (self.bucket_count - 1)

    @cached_property
    def centers(self) -> np.ndarray:
        centers = self.min_value + np.arange(self.bucket_count) * self.width
        centers[-1] = self.max_value
        return centers + 0.0

    @cached_property
    def rendered(self) -> tuple[str, ...]:
        tol = 1e-9 * (self.max_value - self.min_value)
        chosen = None
        for digits in range(1, 11):
            strs = [f"{c:.{digits}f}" for c in self.centers]
            if len(set(strs)) == len(strs) and all(
                abs(float(s) - c) <= tol for s, c in zip(strs, self.centers)
            ):
                chosen = digits
                break
        if chosen is None:
            chosen = 10
        return tuple(_trim_decimal(f"{c:.{chosen}f}") for c in self.centers)

    def render_list(self) -> tuple[str, list[CharRange]]:
        ranges: list[CharRange] = []
        pos = 0
        for text in self.rendered:
            ranges.append((pos, pos + len(text)))
            pos += len(text) + 1
        return " ".join(self.rendered), ranges


def _trim_decimal(text: str) -> str:
    """'0.250' → '0.25', '5.000' → '5.0', '-0.0' → '0.0'."""
    if "." in text:
        text = text.rstrip("0")
        if text.endswith("."):
            text += "0"
    if float(text) == 0.0:
        text = text.lstrip("-")
    return text


def _append(text_a: str, suffix: str) -> tuple[str, int]:
    """Append `suffix` after the whole of text_a; returns (joined, suffix offset)."""
    if not text_a:
        return suffix, 0
    glue = "" if text_a[-1].isspace() else " "
    offset = len(text_a) + len(glue)
    return f"{text_a}{glue}{suffix}", offset


# ──────────────────────────────────────────────────────────── Forward recipes
def classify_to_span(
    text_a: Optional[str],
    text_b: Optional[str],
    labels: LabelSet,
    gold: int,
    *,
    layout: Layout = "segmented",
) -> SpanExample:
    """
    Single-sentence tasks pass the sentence as `text_b` with `text_a=None`:
    the source then holds only the option list and the sentence is auxiliary.
    Sentence pairs put `text_a` plus the options in the source and `text_b` in
    the auxiliary text; `layout="unsegmented"` moves both sentences to the
    auxiliary side instead.
    """
    if not 0 <= gold < len(labels):
        raise ReformulationError(f"Gold label {gold} outside a label set of {len(labels)}")
    options, ranges = labels.render()

    if text_a is None:
        source, offset = options, 0
        auxiliary = text_b or ""
    elif layout == "unsegmented":
        source, offset = options, 0
        auxiliary = normalize_whitespace(f"{text_a} {text_b or ''}")
    elif layout == "segmented":
        source, offset = _append(text_a, options)
        auxiliary = text_b or ""
    else:
        raise ReformulationError(f"Unknown layout {layout!r}")

    start, end = ranges[gold]
    return SpanExample(
        source_text=source,
        auxiliary_text=auxiliary,
        gold_char_span=(offset + start, offset + end),
        task_kind=TaskKind.CLASSIFICATION,
        gold_label=gold,
    )


def value_to_bucket(v: float, spec: BucketSpec) -> int:
    """Nearest bucket center; exact midpoints go to the lower index."""
    return int(np.argmin(np.abs(spec.centers - v)))


def regress_to_span(
    text_a: Optional[str],
    text_b: Optional[str],
    spec: BucketSpec,
    gold_value: float,
) -> SpanExample:
    value = float(gold_value)
    if not spec.min_value <= value <= spec.max_value:
        clamped = min(max(value, spec.min_value), spec.max_value)
        logger.warning(
            "Regression value %s outside [%s, %s]; clamped to %s",
            value,
            spec.min_value,
            spec.max_value,
            clamped,
        )
        value = clamped

    buckets, ranges = spec.render_list()
    if text_a is None:
        source, offset = buckets, 0
    else:
        source, offset = _append(text_a, buckets)
    start, end = ranges[value_to_bucket(value, spec)]
    return SpanExample(
        source_text=source,
        auxiliary_text=text_b or "",
        gold_char_span=(offset + start, offset + end),
        task_kind=TaskKind.REGRESSION,
        gold_value=value,
    )


def qa_to_span(
    context: str,
    question: str,
    answer_char_span: Optional[CharRange] = None,
    mark_unanswerable: bool = False,
    *,
    answer_text: Optional[str] = None,
) -> SpanExample:
    """
    Context is kept verbatim as the source. With `mark_unanswerable` the token
    "unanswerable" is appended to every example and becomes the gold span when
    there is no answer.
    """
    source = context
    unanswerable_span: Optional[CharRange] = None
    if mark_unanswerable:
        source, offset = _append(context, UNANSWERABLE)
        unanswerable_span = (offset, offset + len(UNANSWERABLE))

    span = answer_char_span
    if span is None and answer_text:
        idx = context.find(answer_text)
        if idx < 0:
            raise ReformulationError(f"Answer text {answer_text!r} not found in context")
        span = (idx, idx + len(answer_text))

    if span is None:
        if unanswerable_span is None:
            raise ReformulationError("No answer given and the dataset is not marked unanswerable")
        span = unanswerable_span
    else:
        start, end = span
        if not 0 <= start < end <= len(context):
            raise ReformulationError(
                f"Answer span {span} is empty or outside a context of {len(context)} characters"
            )

    return SpanExample(
        source_text=source,
        auxiliary_text=question,
        gold_char_span=span,
        task_kind=TaskKind.QA,
    )


# ──────────────────────────────────────────────────────────── Inverse recipes
def _word_bag(text: str) -> Counter[str]:
    return Counter(w.lower() for w in _WORD_RE.findall(text))


def span_to_label(extracted: str, labels: LabelSet) -> tuple[int, bool]:
    """Exact match → (label, True); else best word overlap → (label, False)."""
    norm = normalize_whitespace(extracted)
    for idx, desc in enumerate(labels.descriptions):
        if normalize_whitespace(desc) == norm:
            return idx, True

    bag = _word_bag(norm)
    best_idx, best_overlap = 0, -1
    for idx, desc in enumerate(labels.descriptions):
        overlap = sum((bag & _word_bag(desc)).values())
        if overlap > best_overlap:
            best_idx, best_overlap = idx, overlap
    return best_idx, False


def span_to_value(extracted: str, spec: BucketSpec) -> tuple[float, bool]:
    """Rendered bucket string → (center, True); else closest string → (center, False)."""
    norm = normalize_whitespace(extracted)
    for idx, text in enumerate(spec.rendered):
        if text == norm:
            return float(spec.centers[idx]), True

    best_idx, best_ratio = 0, -1.0
    for idx, text in enumerate(spec.rendered):
        ratio = difflib.SequenceMatcher(None, norm, text).ratio()
        if ratio > best_ratio:
            best_idx, best_ratio = idx, ratio
    return float(spec.centers[best_idx]), False
