"""
Report Components - Console and table output for the gaitid CLI

Components:
- render_status(): One-line progress / result messages with a status prefix
- render_report_table(): Aligned text summary of a sweep
- summary_frame() / write_summary_csv(): method x features x window rows
- per_user_frame() / write_per_user_csv(): per-user rows of a session hold-out run
- benchmark_frame(): per-stage times per window size
"""
import sys
from pathlib import Path
from typing import Iterable, List, Sequence, TextIO, Union

import pandas as pd

from gaitid.evaluation import BenchmarkRow, EvalReport
from gaitid.stage_timer import StageTimer
from gaitid.storage import write_text

STATUS_PREFIX = {
    "info": "ℹ️ ",
    "ok": "✅",
    "warn": "⚠️ ",
    "error": "❌",
    "run": "⚙️ ",
}

SUMMARY_COLUMNS = ["method", "features", "window", "sensor", "sub_activity", "accuracy", "halfwidth", "time_s"]
PER_USER_COLUMNS = ["user", "window", "accuracy", "halfwidth"]


def render_status(kind: str, message: str, stream: TextIO = None):
    """Print a status line; errors go to stderr."""
    if stream is None:
        stream = sys.stderr if kind == "error" else sys.stdout
    print(f"{STATUS_PREFIX.get(kind, '  ')} {message}", file=stream)


def _joined(values: Iterable[str], empty: str = "ALL") -> str:
    values = list(values)
    return "+".join(values) if values else empty


def pipeline_seconds(report: EvalReport) -> float:
    """Extraction through prediction; data loading is never timed."""
    return float(sum(report.stage_seconds(stage) for stage in StageTimer.STAGES))


def summary_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    rows = []
    for report in reports:
        config = report.config
        rows.append({
            "method": config.get("method", "NONE"),
            "features": report.feature_dim,
            "window": config.get("window_size"),
            "sensor": _joined(config.get("sensors", [])),
            "sub_activity": _joined(config.get("sub_activities", [])),
            "accuracy": report.mean_accuracy,
            "halfwidth": report.ci_halfwidth,
            "time_s": pipeline_seconds(report),
        })
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def per_user_frame(report: EvalReport) -> pd.DataFrame:
    """
    One row per user. Half-widths come from the per-user session intervals
    when the report has them, else the overall interval is repeated.
    """
    window = report.config.get("window_size")
    halfwidths = report.split_halfwidths or [report.ci_halfwidth] * len(report.accuracies)
    rows = [
        {"user": descriptor.replace("user ", "", 1), "window": window, "accuracy": accuracy, "halfwidth": halfwidth}
        for descriptor, accuracy, halfwidth in zip(report.split_descriptors, report.accuracies, halfwidths)
    ]
    return pd.DataFrame(rows, columns=PER_USER_COLUMNS)


def _write_frame(frame: pd.DataFrame, path: Union[str, Path], force: bool) -> Path:
    return write_text(path, frame.to_csv(index=False, float_format="%.6f", lineterminator="\n"), force=force)


def write_summary_csv(reports: Sequence[EvalReport], path: Union[str, Path], force: bool = False) -> Path:
    return _write_frame(summary_frame(reports), path, force)


def write_per_user_csv(reports: Sequence[EvalReport], path: Union[str, Path], force: bool = False) -> Path:
    frame = pd.concat([per_user_frame(r) for r in reports], ignore_index=True) if reports \
        else pd.DataFrame(columns=PER_USER_COLUMNS)
    return _write_frame(frame, path, force)


def benchmark_frame(rows: Sequence[BenchmarkRow]) -> pd.DataFrame:
    return pd.DataFrame([row.to_dict() for row in rows])


def render_report_table(reports: Sequence[EvalReport]) -> str:
    """
    Aligned text table, one line per experiment.

    Example:
        name           protocol  windows  features  accuracy  +/-     time_s
        esp30-w50      KFOLD-10  1536     30        0.9812    0.0061  41.2
    """
    frame = pd.DataFrame([{
        "name": r.name,
        "protocol": r.protocol,
        "windows": r.n_windows,
        "features": r.feature_dim,
        "accuracy": f"{r.mean_accuracy:.4f}",
        "+/-": f"{r.ci_halfwidth:.4f}",
        "time_s": f"{pipeline_seconds(r):.2f}",
    } for r in reports])
    if frame.empty:
        return "(no experiments)"
    return frame.to_string(index=False)


def render_split_details(report: EvalReport) -> List[str]:
    """Per-split lines for -v output."""
    lines = [f"{report.name} [{report.protocol}, target {report.target}]"]
    for descriptor, accuracy, train_accuracy in zip(report.split_descriptors, report.accuracies,
                                                   report.train_accuracies):
        lines.append(f"  {descriptor:<28} test {accuracy:.4f}  train {train_accuracy:.4f}")
    if report.fallback_count:
        lines.append(f"  two-stage fallbacks: {report.fallback_count}")
    return lines
