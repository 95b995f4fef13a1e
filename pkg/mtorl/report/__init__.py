"""Report module for mtorl."""

from .status import StatusReporter, get_reporter
from .report_formatter import ReportFormatter
from .exports import export_history_csv, export_json, export_markdown, export_trace_csv

__all__ = [
    "StatusReporter",
    "get_reporter",
    "ReportFormatter",
    "export_history_csv",
    "export_json",
    "export_markdown",
    "export_trace_csv",
]
