# utils/reporting.py
from __future__ import annotations

import json
import logging
import pathlib
from typing import Any, Iterable, Mapping

from fpdf import FPDF  # fpdf2

from utils.files import atomic_write_bytes, atomic_write_text

logger = logging.getLogger(__name__)


def dumps_jsonl(records: Iterable[Mapping[str, Any]]) -> str:
    return "".join(json.dumps(dict(r), sort_keys=True) + "\n" for r in records)


def write_jsonl(records: Iterable[Mapping[str, Any]], path: str | pathlib.Path) -> pathlib.Path:
    records = list(records)
    out = atomic_write_text(path, dumps_jsonl(records))
    logger.info("Wrote %d report records to %s", len(records), out)
    return out


def write_json(payload: Mapping[str, Any], path: str | pathlib.Path) -> pathlib.Path:
    out = atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    logger.info("Wrote %s", out)
    return out


def _fmt(value: Any) -> str:
    return f"{value:.4f}" if isinstance(value, float) else str(value)


def export_comparison_pdf(report: Mapping[str, Any], path: str | pathlib.Path) -> pathlib.Path:
    """
    Two-column PDF of a comparison report: per-seed dev scores without and
    with intermediate training, then the medians.
    """
    left, right = report["columns"]
    pdf = FPDF(format="A4")
    pdf.set_auto_page_break(auto=True, margin=15)
    pdf.add_page()
    pdf.set_font("Helvetica", style="B", size=14)
    pdf.cell(0, 10, f"Target {report['target']}: {report['metric']}", new_x="LMARGIN", new_y="NEXT")

    pdf.set_font("Helvetica", size=11)
    for line in (
        f"Intermediate task: {report['intermediate']}",
        f"Target training examples: {report['target_train_size']}",
        "",
    ):
        pdf.cell(0, 7, line, new_x="LMARGIN", new_y="NEXT")

    widths = (30, 70, 70)
    pdf.set_font("Helvetica", style="B", size=11)
    for w, title in zip(widths, ("seed", left["name"], right["name"])):
        pdf.cell(w, 8, title, border=1)
    pdf.ln()
    pdf.set_font("Helvetica", size=11)
    for seed, a, b in zip(report["seeds"], left["scores"], right["scores"]):
        for w, cell in zip(widths, (seed, a, b)):
            pdf.cell(w, 8, _fmt(cell), border=1)
        pdf.ln()
    pdf.set_font("Helvetica", style="B", size=11)
    for w, cell in zip(widths, ("median", left["median"], right["median"])):
        pdf.cell(w, 8, _fmt(cell), border=1)
    pdf.ln()

    out = atomic_write_bytes(path, bytes(pdf.output()))
    logger.info("Wrote comparison PDF to %s", out)
    return out
