"""Human- and machine-readable renderings of an evaluation report.

Formats:
    text / markdown  aligned tables, rounded to 2 decimals
    json             full precision, stable key order
    csv              flat `key,value` rows, full precision (lossless)

The systems table follows the conventional column order: BLEU, BLEU1-4,
METEOR, ROUGE-L, CIDER. The `--percent` switch scales every metric except
CIDER by 100.
"""

from __future__ import annotations

import csv
import io
import json
from typing import Mapping

from .errors import HybridsumError
from .metrics import PERCENT_FIELDS, REPORT_FIELDS
from .pipeline import EvaluationReport

FORMATS = ("text", "markdown", "csv", "json")

_COLUMNS = ("BLEU", "BLEU1", "BLEU2", "BLEU3", "BLEU4", "METEOR", "ROUGE-L", "CIDER")
_SYSTEM_ORDER = ("ir", "nmt", "combined", "oracle")


def _ordered_systems(systems: Mapping[str, object]) -> list[str]:
    known = [s for s in _SYSTEM_ORDER if s in systems]
    return known + sorted(set(systems) - set(known))


def _metric_row(values: Mapping[str, float], percent: bool) -> list[str]:
    row = []
    for name in REPORT_FIELDS:
        value = values[name]
        if percent and name in PERCENT_FIELDS:
            value = value * 100.0
        row.append(f"{value:.2f}")
    return row


def _flatten(payload, prefix: str = "") -> list[tuple[str, str]]:
    rows: list[tuple[str, str]] = []
    if isinstance(payload, dict):
        for key in sorted(payload):
            rows.extend(_flatten(payload[key], f"{prefix}{key}."))
    elif isinstance(payload, (list, tuple)):
        for i, item in enumerate(payload):
            rows.extend(_flatten(item, f"{prefix}{i}."))
    else:
        key = prefix[:-1] if prefix.endswith(".") else prefix
        if isinstance(payload, float):
            value = repr(payload)
        elif payload is None:
            value = ""
        else:
            value = str(payload)
        rows.append((key, value))
    return rows


def render_csv_rows(rows: list[tuple[str, str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["key", "value"])
    writer.writerows(rows)
    return buffer.getvalue()


def parse_csv_rows(text: str) -> list[tuple[str, str]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["key", "value"]:
        raise HybridsumError(f"unexpected CSV header: {header!r}")
    return [(row[0], row[1]) for row in reader if row]


def _render_table(headers: list[str], rows: list[list[str]], markdown: bool) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    if markdown:
        lines = ["| " + " | ".join(h.ljust(widths[i]) for i, h in enumerate(headers)) + " |"]
        lines.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
        for row in rows:
            lines.append("| " + " | ".join(c.ljust(widths[i]) for i, c in enumerate(row)) + " |")
    else:
        lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip()]
        for row in rows:
            lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip())
    return "\n".join(lines)


def _render_tables(report: EvaluationReport, percent: bool, markdown: bool) -> str:
    sections: list[str] = []
    suffix = "(%)" if percent else ""
    headers = ["system"] + [c + (suffix if c != "CIDER" else "") for c in _COLUMNS]
    rows = [
        [name] + _metric_row(report.systems[name].as_dict(), percent)
        for name in _ordered_systems(report.systems)
    ]
    sections.append(_render_table(headers, rows, markdown))

    sections.append(
        f"test size: {report.test_size}  router: {report.router.kind}"
        f" (threshold {report.router.threshold:g})  seed: {report.seed}"
    )
    sections.append(
        f"effort saved: {report.effort.skipped_nmt} of {report.test_size}"
        f" samples skipped generation ({report.effort.fraction:.1%})"
    )

    if report.classifier is not None:
        c = report.classifier
        scale = 100.0 if percent else 1.0
        fmt = (lambda v: f"{v * scale:.2f}")
        rows = [[
            fmt(c.accuracy), fmt(c.precision), fmt(c.recall), fmt(c.f1),
            f"{(report.classifier_combined_bleu or 0.0) * scale:.2f}",
        ]]
        headers = [h + suffix for h in ("accuracy", "precision", "recall", "f1")] + [f"combined BLEU{suffix}"]
        sections.append("router as classifier:\n" + _render_table(headers, rows, markdown))
        if c.degenerate:
            sections.append(f"degenerate classifier denominators: {', '.join(c.degenerate)}")

    if report.partition_ir_better is not None and report.partition_nmt_better is not None:
        scale = 100.0 if percent else 1.0
        headers = ["partition", "count"] + [
            f"{name} BLEU{suffix}" for name in _ordered_systems(report.systems)
        ]
        rows = []
        for label, table in (("retrieval-better", report.partition_ir_better),
                             ("generation-better", report.partition_nmt_better)):
            row = [label, str(table.count)]
            for name in _ordered_systems(report.systems):
                value = table.bleu_by_system.get(name)
                row.append("-" if value is None else f"{value * scale:.2f}")
            rows.append(row)
        total = report.partition_ir_better.count + report.partition_nmt_better.count
        sections.append(_render_table(headers, rows, markdown) + f"\npartition total: {total}")

    if report.significance:
        lines = ["significance (Wilcoxon signed-rank, two-sided):"]
        for name in sorted(report.significance):
            p = report.significance[name]
            lines.append(f"  {name}: " + ("n/a (too few nonzero differences)" if p is None else f"p = {p:.4g}"))
        sections.append("\n".join(lines))

    return "\n\n".join(sections) + "\n"


def render_report(report: EvaluationReport, fmt: str = "text", percent: bool = False) -> str:
    """Render a report; identical inputs produce identical bytes."""
    if fmt not in FORMATS:
        raise HybridsumError(f"unknown report format: {fmt!r}")
    if fmt == "json":
        return json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"
    if fmt == "csv":
        return render_csv_rows(_flatten(report.to_json_dict()))
    return _render_tables(report, percent, markdown=(fmt == "markdown"))
