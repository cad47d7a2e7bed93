"""SC/IC aggregation over translation records and table rendering."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

from .pipeline import COMPILED_STATUSES, TranslationRecord

COLUMNS = (
    "LLM",
    "Total Translation Task",
    "Successful Compilation(SC)",
    "SC After Error Feedback",
    "SC after Move Prover Feedback",
    "Incomplete Translation (IC)",
    "IC After Error Feedback",
)


@dataclass(frozen=True)
class MetricsReport:
    total_tasks: int = 0
    sc_initial: int = 0
    sc_after_error_feedback: int = 0
    sc_after_prover_feedback: int = 0
    ic_initial: int = 0
    ic_after_feedback: int = 0
    label: str = "run"

    def row(self) -> list:
        return [
            self.label,
            self.total_tasks,
            self.sc_initial,
            self.sc_after_error_feedback,
            self.sc_after_prover_feedback,
            self.ic_initial,
            self.ic_after_feedback,
        ]


def aggregate_metrics(records: Iterable[TranslationRecord], label: str = "run") -> MetricsReport:
    total = sc_initial = sc_error = rescued = 0
    for rec in records:
        total += 1
        if rec.compiled_in_prover_phase:
            rescued += 1
        elif rec.status in COMPILED_STATUSES:
            sc_error += 1
            if rec.compile_attempts == 1:
                sc_initial += 1
    return MetricsReport(
        total_tasks=total,
        sc_initial=sc_initial,
        sc_after_error_feedback=sc_error,
        sc_after_prover_feedback=sc_error + rescued,
        ic_initial=total - sc_initial,
        ic_after_feedback=total - sc_error,
        label=label,
    )


def render_report(reports: MetricsReport | Sequence[MetricsReport], format: str = "markdown") -> str:
    if isinstance(reports, MetricsReport):
        reports = [reports]
    rows = [r.row() for r in reports] or [MetricsReport().row()]
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        writer.writerows(rows)
        return buf.getvalue()
    if format == "markdown":
        lines = ["| " + " | ".join(COLUMNS) + " |", "|" + "|".join("---" for _ in COLUMNS) + "|"]
        lines += ["| " + " | ".join(str(v) for v in row) + " |" for row in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {format!r}")
