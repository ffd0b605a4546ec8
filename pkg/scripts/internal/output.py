"""Structured output utilities for JSON emission, verdict tables and logging."""

from __future__ import annotations

import logging
import sys
import time
from datetime import datetime
from pathlib import Path
from typing import Any

import orjson
import structlog

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_NON_STR_KEYS | orjson.OPT_SERIALIZE_NUMPY

SIDECAR_LOG = "run_log.json"


def configure_logging(verbose: bool = False) -> None:
    """Route structlog to stderr so stdout stays clean for JSON.

    Args:
        verbose: Log INFO events instead of WARNING and above only
    """
    level = logging.INFO if verbose else logging.WARNING
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.KeyValueRenderer(key_order=["event"], sort_keys=True),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


def dumps(data: Any) -> bytes:
    return orjson.dumps(data, option=JSON_OPTIONS)


def emit(data: dict[str, Any]) -> None:
    """Emit JSON to stdout.

    Args:
        data: Dictionary to emit as JSON
    """
    print(dumps(data).decode())


def write_json(data: dict[str, Any], path: Path) -> Path:
    """Write a JSON artifact (no timestamps) and return its path."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(data))
    return path


def write_log(data: dict[str, Any], directory: Path, log_name: str = "operation") -> Path:
    """Append a timestamped entry to the sidecar log in the output directory.

    The sidecar is the only artifact allowed to carry wall-clock time.

    Args:
        data: Dictionary to log
        directory: Output directory of the run
        log_name: Operation name recorded with the entry

    Returns:
        Path to the sidecar log file
    """
    directory.mkdir(parents=True, exist_ok=True)
    log_file = directory / SIDECAR_LOG

    entries: list[dict[str, Any]] = []
    if log_file.exists():
        try:
            entries = orjson.loads(log_file.read_bytes())
        except orjson.JSONDecodeError:
            entries = []

    entries.append({
        "operation": log_name,
        "timestamp": datetime.now().strftime("%Y-%m-%d_%H-%M-%S"),
        **data,
    })
    log_file.write_bytes(dumps(entries))
    return log_file


def error_response(
    message: str,
    error_type: str = "runtime_error",
    details: dict[str, Any] | None = None,
    exit_code: int | None = None,
) -> dict[str, Any]:
    """Response body for a command that raised.

    Args:
        message: Human-readable error message
        error_type: Error class tag (e.g., "config_error", "step_error")
        details: Structured context such as the offending field or cell
        exit_code: Process exit code the command returns with
    """
    response: dict[str, Any] = {
        "status": "error",
        "error_type": error_type,
        "message": message,
    }
    if exit_code is not None:
        response["exit_code"] = exit_code
    if details:
        response["details"] = details
    return response


def success_response(
    data: dict[str, Any],
    duration_ms: float | None = None,
    config_hash: str | None = None,
) -> dict[str, Any]:
    """Response body for a command that ran to the end.

    Status is "failed" when the result reports passed=False, "success" otherwise.
    """
    response: dict[str, Any] = {"status": "success" if data.get("passed", True) else "failed"}
    if config_hash is not None:
        response["config_hash"] = config_hash
    response.update(data)
    if "verdicts" in data:
        response["failed_verdicts"] = sum(1 for row in data["verdicts"] if not row["passed"])
    if duration_ms is not None:
        response["duration_ms"] = duration_ms
    return response


def format_verdict_table(rows: list[dict[str, Any]]) -> str:
    """Render verdict rows as a fixed-width text table.

    Each row needs name, anchor, lhs, rhs, slack and passed.
    """
    header = ("name", "anchor", "lhs", "rhs", "slack", "verdict")
    body = [
        (
            str(r["name"]),
            str(r["anchor"]),
            f"{r['lhs']:.6g}",
            f"{r['rhs']:.6g}",
            f"{r['slack']:.3g}",
            "PASS" if r["passed"] else "FAIL",
        )
        for r in rows
    ]
    widths = [max(len(col[i]) for col in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


class Timer:
    """Wall-clock duration of a command, in milliseconds.

    Only the JSON response and the sidecar log see it.
    """

    def __init__(self) -> None:
        self._start = 0.0
        self.elapsed_ms = 0.0

    def __enter__(self) -> Timer:
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.elapsed_ms = round((time.perf_counter() - self._start) * 1000.0, 1)
