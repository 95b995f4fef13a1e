"""
File exports for run artefacts: JSON reports, history and trace CSVs and a
Markdown summary.
"""

from pathlib import Path
from typing import Any, Iterable, Mapping

from mtorl.simulator.procedure import TRACE_COLUMNS, RunReport
from mtorl.training.trainer import HISTORY_COLUMNS
from mtorl.utils.fs import write_csv, write_json


def export_json(payload: Any, output_path: Path) -> Path:
    if hasattr(payload, "to_dict"):
        payload = payload.to_dict()
    return write_json(output_path, payload)


def export_history_csv(history: Iterable[Mapping[str, float]], output_path: Path) -> Path:
    return write_csv(output_path, HISTORY_COLUMNS, history)


def export_trace_csv(report: RunReport, output_path: Path) -> Path:
    return write_csv(output_path, TRACE_COLUMNS, report.trace_rows())


def export_markdown(title: str, summary: Mapping[str, Any], output_path: Path) -> Path:
    """
    Export a flat summary as a Markdown file.

    Nested mappings become sub-lists.
    """
    lines = [f"# {title}", ""]
    for key, value in summary.items():
        label = key.replace("_", " ").title()
        if isinstance(value, Mapping):
            lines.append(f"- **{label}:**")
            for sub_key, sub_value in value.items():
                lines.append(f"  - {sub_key}: {_fmt(sub_value)}")
        else:
            lines.append(f"- **{label}:** {_fmt(value)}")
    lines.append("")

    with open(output_path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines))
    return Path(output_path)


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)
