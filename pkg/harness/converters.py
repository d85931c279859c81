# harness/converters.py
"""
Public benchmark layouts → SpanExamples.

GLUE tasks are read from the official tab-separated files (a header row
everywhere except CoLA); SQuAD v1.1/v2.0 and ZRE-style QA from SQuAD-layout
JSON. Quotes inside GLUE files are literal, never CSV quoting.
"""
from __future__ import annotations

import csv
import json
import logging
import pathlib
from dataclasses import dataclass
from typing import Optional

from harness.datasets import DatasetError
from nlp.reformulation import (
    Layout,
    ReformulationError,
    SpanExample,
    TaskKind,
    classify_to_span,
    qa_to_span,
    regress_to_span,
)
from nlp.tasks import TaskTemplate, get_template

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GlueColumns:
    text_a: int
    text_b: Optional[int]
    label: int
    header: bool = True
    # rows with a different column count are skipped (QQP has malformed lines)
    width: Optional[int] = None


GLUE_COLUMNS: dict[str, GlueColumns] = {
    "sst": GlueColumns(text_a=0, text_b=None, label=1),
    "cola": GlueColumns(text_a=3, text_b=None, label=1, header=False),
    "mnli": GlueColumns(text_a=8, text_b=9, label=-1),
    "rte": GlueColumns(text_a=1, text_b=2, label=-1),
    "qnli": GlueColumns(text_a=1, text_b=2, label=-1),
    "qqp": GlueColumns(text_a=3, text_b=4, label=-1, width=6),
    "mrpc": GlueColumns(text_a=3, text_b=4, label=0),
    "stsb": GlueColumns(text_a=7, text_b=8, label=-1),
}


def _read_tsv(path: pathlib.Path) -> list[list[str]]:
    try:
        with path.open(encoding="utf-8", newline="") as f:
            return list(csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE))
    except (OSError, UnicodeDecodeError) as e:
        raise DatasetError(f"cannot read TSV: {e}", path=str(path)) from e


def _glue_row(
    row: list[str],
    template: TaskTemplate,
    cols: GlueColumns,
    *,
    definitional: bool,
    layout: Layout,
) -> SpanExample:
    text_a = row[cols.text_a]
    text_b = row[cols.text_b] if cols.text_b is not None else None
    raw_label = row[cols.label]

    if template.kind is TaskKind.REGRESSION:
        return regress_to_span(text_a, text_b, template.buckets, float(raw_label))

    labels = template.labels
    if definitional and template.definitional_labels is not None:
        labels = template.definitional_labels
    gold = template.label_index(raw_label)
    if template.single_sentence:
        return classify_to_span(None, text_a, labels, gold)
    return classify_to_span(text_a, text_b, labels, gold, layout=layout)


def convert_glue(
    path: str | pathlib.Path,
    task: str,
    *,
    definitional: bool = False,
    layout: Layout = "segmented",
) -> list[SpanExample]:
    path = pathlib.Path(path)
    template = get_template(task)
    if template.name not in GLUE_COLUMNS:
        raise ValueError(f"Task {task!r} has no GLUE TSV layout")
    cols = GLUE_COLUMNS[template.name]

    examples: list[SpanExample] = []
    skipped = 0
    for lineno, row in enumerate(_read_tsv(path), start=1):
        if cols.header and lineno == 1:
            continue
        if not row or (cols.width is not None and len(row) != cols.width):
            skipped += 1
            continue
        try:
            examples.append(
                _glue_row(row, template, cols, definitional=definitional, layout=layout)
            )
        except IndexError as e:
            raise DatasetError(f"row has {len(row)} columns", path=str(path), line=lineno) from e
        except (ValueError, ReformulationError) as e:
            raise DatasetError(str(e), path=str(path), line=lineno) from e

    if skipped:
        logger.warning("%s: skipped %d malformed rows", path, skipped)
    logger.info("Converted %d %s examples from %s", len(examples), template.name, path)
    return examples


def convert_squad(
    path: str | pathlib.Path,
    task: str = "squad",
) -> list[SpanExample]:
    """
    One example per question, gold = first listed answer. Unanswerable
    questions (v2 `is_impossible`) need a template that marks them.
    """
    path = pathlib.Path(path)
    template = get_template(task)
    if template.kind is not TaskKind.QA:
        raise ValueError(f"Task {task!r} is not a QA task")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DatasetError(f"cannot read SQuAD JSON: {e}", path=str(path)) from e

    examples: list[SpanExample] = []
    skipped = 0
    for article in raw.get("data", []):
        for paragraph in article.get("paragraphs", []):
            context = paragraph["context"]
            for qa in paragraph.get("qas", []):
                answers = qa.get("answers") or []
                impossible = qa.get("is_impossible", False) or not answers
                if impossible and not template.mark_unanswerable:
                    skipped += 1
                    continue
                span = None
                if not impossible:
                    first = answers[0]
                    start = int(first["answer_start"])
                    span = (start, start + len(first["text"]))
                    if context[span[0] : span[1]] != first["text"]:
                        raise DatasetError(
                            f"question {qa.get('id')}: answer text does not match the context at {start}",
                            path=str(path),
                        )
                try:
                    examples.append(
                        qa_to_span(
                            context,
                            qa["question"],
                            span,
                            mark_unanswerable=template.mark_unanswerable,
                        )
                    )
                except ReformulationError as e:
                    raise DatasetError(f"question {qa.get('id')}: {e}", path=str(path)) from e

    if skipped:
        logger.warning("%s: skipped %d unanswerable questions (template %s)", path, skipped, template.name)
    logger.info("Converted %d %s examples from %s", len(examples), template.name, path)
    return examples


def convert(path: str | pathlib.Path, task: str, **kwargs) -> list[SpanExample]:
    """Dispatch on the task template: QA reads SQuAD JSON, everything else GLUE TSV."""
    if get_template(task).kind is TaskKind.QA:
        return convert_squad(path, task)
    return convert_glue(path, task, **kwargs)
