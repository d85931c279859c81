# harness/datasets.py
"""
JSONL datasets of SpanExamples, one record per line:

    {"task_kind": "classification", "source": "positive or negative?",
     "auxiliary": "it's slow -- very, very slow", "gold_span": [12, 20], "label": 1}

The canonical form is what `save_dataset` writes: fields in `_FIELDS` order
with `json.dumps` separators, non-ASCII text as raw UTF-8 and numbers as
parsed (an integer `value` stays an integer), one newline after each record.
Loading and saving a file already in that form reproduces it byte for byte.
"""
from __future__ import annotations

import json
import logging
import pathlib
from dataclasses import dataclass
from typing import Any, Iterable, Optional

from nlp.reformulation import ReformulationError, SpanExample, TaskKind
from utils.files import atomic_write_text

logger = logging.getLogger(__name__)

_FIELDS = ("task_kind", "source", "auxiliary", "gold_span", "label", "value")


class DatasetError(ValueError):
    def __init__(self, message: str, *, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class DatasetRecord:
    task_kind: str
    source: str
    auxiliary: str
    gold_span: tuple[int, int]
    label: Optional[int] = None
    value: Optional[int | float] = None

    @classmethod
    def from_example(cls, ex: SpanExample) -> "DatasetRecord":
        return cls(
            task_kind=ex.task_kind.value,
            source=ex.source_text,
            auxiliary=ex.auxiliary_text,
            gold_span=ex.gold_char_span,
            label=ex.gold_label,
            value=ex.gold_value,
        )

    @classmethod
    def from_json(cls, raw: Any) -> "DatasetRecord":
        if not isinstance(raw, dict):
            raise DatasetError("record must be a JSON object")
        unknown = set(raw) - set(_FIELDS)
        if unknown:
            raise DatasetError(f"unknown fields {sorted(unknown)}")
        for key in ("task_kind", "source", "auxiliary", "gold_span"):
            if key not in raw:
                raise DatasetError(f"missing field {key!r}")
        if not isinstance(raw["source"], str) or not isinstance(raw["auxiliary"], str):
            raise DatasetError("source and auxiliary must be strings")
        span = raw["gold_span"]
        if (
            not isinstance(span, list)
            or len(span) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in span)
        ):
            raise DatasetError("gold_span must be a [start, end] pair of integers")
        label = raw.get("label")
        if label is not None and (not isinstance(label, int) or isinstance(label, bool)):
            raise DatasetError("label must be an integer")
        value = raw.get("value")
        if value is not None and (not isinstance(value, (int, float)) or isinstance(value, bool)):
            raise DatasetError("value must be a number")
        return cls(
            task_kind=raw["task_kind"],
            source=raw["source"],
            auxiliary=raw["auxiliary"],
            gold_span=(span[0], span[1]),
            label=label,
            value=value,
        )

    def to_json(self) -> str:
        out: dict[str, Any] = {
            "task_kind": self.task_kind,
            "source": self.source,
            "auxiliary": self.auxiliary,
            "gold_span": list(self.gold_span),
        }
        if self.label is not None:
            out["label"] = self.label
        if self.value is not None:
            out["value"] = self.value
        return json.dumps(out, ensure_ascii=False)

    def to_example(self) -> SpanExample:
        try:
            kind = TaskKind(self.task_kind)
        except ValueError as e:
            raise DatasetError(f"unknown task_kind {self.task_kind!r}") from e
        try:
            return SpanExample(
                source_text=self.source,
                auxiliary_text=self.auxiliary,
                gold_char_span=self.gold_span,
                task_kind=kind,
                gold_label=self.label,
                gold_value=self.value,
            )
        except ReformulationError as e:
            raise DatasetError(str(e)) from e


def load_dataset(path: str | pathlib.Path) -> list[SpanExample]:
    """Parse and validate a JSONL dataset; errors name the offending line."""
    path = pathlib.Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise DatasetError(f"cannot read dataset: {e}", path=str(path)) from e

    examples: list[SpanExample] = []
    # split on "\n" only: U+2028 and friends may appear unescaped inside strings
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as e:
            raise DatasetError(f"invalid JSON: {e.msg}", path=str(path), line=lineno) from e
        try:
            examples.append(DatasetRecord.from_json(raw).to_example())
        except DatasetError as e:
            raise DatasetError(str(e), path=str(path), line=lineno) from e
    logger.info("Loaded %d examples from %s", len(examples), path)
    return examples


def dumps_dataset(examples: Iterable[SpanExample]) -> str:
    return "".join(DatasetRecord.from_example(ex).to_json() + "\n" for ex in examples)


def save_dataset(examples: Iterable[SpanExample], path: str | pathlib.Path) -> pathlib.Path:
    examples = list(examples)
    out = atomic_write_text(path, dumps_dataset(examples))
    logger.info("Wrote %d examples to %s", len(examples), out)
    return out
