"""Map raw executions to status codes and pull missing-module names from stderr."""

from __future__ import annotations

import re

from .sandbox import InterpreterConfig, RawExecution, prepare_source, run_snippet
from .taxonomy import (
    EXIT_CODE_EXCEPTION,
    SPAWN_ERROR,
    SUCCESS,
    TIMEOUT,
    UNKNOWN_ERROR,
    StatusCode,
    is_interpreter_error,
    lookup,
)

_EXC_LINE_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_.]*)(:|$)")
_MISSING_MODULE_RES = (
    re.compile(r"^ModuleNotFoundError: No module named '?([A-Za-z0-9_.]+)'?\s*$"),
    re.compile(r"^ImportError: No module named '?([A-Za-z0-9_.]+)'?\s*$"),
)


def _lines(stderr_tail: bytes) -> list[str]:
    return stderr_tail.decode("utf-8", errors="replace").splitlines()


def exception_name(stderr_tail: bytes) -> str | None:
    """Final reported exception in a traceback, scanning from the bottom up."""
    for line in reversed(_lines(stderr_tail)):
        line = line.rstrip()
        if not line:
            continue
        m = _EXC_LINE_RE.match(line)
        if m:
            head = m.group(1).rsplit(".", 1)[-1]
            if is_interpreter_error(head):
                return head
    return None


def classify(raw: RawExecution) -> StatusCode:
    if raw.spawn_error is not None:
        return SPAWN_ERROR
    if raw.timed_out:
        return TIMEOUT
    if raw.exit_status == 0:
        return SUCCESS
    name = exception_name(raw.stderr_tail)
    if name is not None:
        return lookup(name)
    return EXIT_CODE_EXCEPTION if not raw.stderr_tail.strip() else UNKNOWN_ERROR


def classify_pair(source: str, config: InterpreterConfig) -> StatusCode:
    return classify(run_snippet(prepare_source(source), config))


def extract_missing_module(stderr_tail: bytes) -> str | None:
    """Top-level name of the module an import failure complains about."""
    lines = [line for line in _lines(stderr_tail) if line.strip()]
    if not lines:
        return None
    last = lines[-1].strip()
    for pattern in _MISSING_MODULE_RES:
        m = pattern.match(last)
        if m:
            return m.group(1).split(".")[0] or None
    return None
