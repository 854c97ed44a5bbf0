"""End-to-end evaluation of one snippet, installing missing modules on import failures."""

from __future__ import annotations

import logging
import os
import shutil
import tempfile
import threading
import time
from dataclasses import dataclass, field

from .classifier import classify, extract_missing_module
from .corpus import Snippet
from .sandbox import (
    InterpreterConfig,
    RawExecution,
    SandboxEnvironmentError,
    prepare_source,
    run_process,
    run_snippet,
)
from .taxonomy import IMPORT_FAILURES, SPAWN_ERROR, TAXONOMY_VERSION, StatusCode, lookup

logger = logging.getLogger(__name__)

DEFAULT_MAX_INSTALLS = 5
DEFAULT_INSTALL_TIMEOUT = 120.0

_install_locks: dict[tuple[str, ...], threading.Lock] = {}
_install_locks_guard = threading.Lock()


def _install_lock(config: InterpreterConfig) -> threading.Lock:
    # keyed by installer command: configs sharing a package manager share a lock
    key = config.installer_command or (config.id,)
    with _install_locks_guard:
        return _install_locks.setdefault(key, threading.Lock())


@dataclass
class ExecutionOutcome:
    snippet_id: int
    interpreter_id: str
    final_status: StatusCode
    attempts: list[tuple[RawExecution, StatusCode]] = field(default_factory=list)
    installed_modules: list[tuple[str, bool]] = field(default_factory=list)
    total_duration: float = 0.0
    taxonomy_version: str = TAXONOMY_VERSION
    harness_error: str | None = None

    @property
    def succeeded(self) -> bool:
        return self.final_status.is_success

    def to_dict(self) -> dict:
        return {
            "snippet_id": self.snippet_id,
            "interpreter_id": self.interpreter_id,
            "final_status": self.final_status.name,
            "attempts": [{"raw": raw.to_dict(), "status": status.name} for raw, status in self.attempts],
            "installed_modules": [[name, ok] for name, ok in self.installed_modules],
            "total_duration": self.total_duration,
            "taxonomy_version": self.taxonomy_version,
            "harness_error": self.harness_error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ExecutionOutcome:
        return cls(
            snippet_id=int(d["snippet_id"]),
            interpreter_id=d["interpreter_id"],
            final_status=lookup(d["final_status"]),
            attempts=[(RawExecution.from_dict(a["raw"]), lookup(a["status"])) for a in d.get("attempts", [])],
            installed_modules=[(name, bool(ok)) for name, ok in d.get("installed_modules", [])],
            total_duration=float(d.get("total_duration", 0.0)),
            taxonomy_version=d.get("taxonomy_version", TAXONOMY_VERSION),
            harness_error=d.get("harness_error"),
        )


def run_installer(config: InterpreterConfig, module: str, timeout: float = DEFAULT_INSTALL_TIMEOUT) -> RawExecution:
    """Run the config's installer for ``module``, serialized per environment."""
    if not config.installer_command:
        return RawExecution(spawn_error=f"{config.id}: no installer configured")
    workdir = tempfile.mkdtemp(prefix="snipex-install-")
    try:
        with _install_lock(config):
            raw = run_process(
                config.installer_argv(module),
                cwd=workdir,
                env={**os.environ, **config.env_overrides},
                timeout=timeout,
            )
    finally:
        shutil.rmtree(workdir, ignore_errors=True)
    if raw.exit_status != 0:
        logger.info(
            "install of %r for %s failed: %s",
            module,
            config.id,
            raw.spawn_error or ("timeout" if raw.timed_out else f"exit {raw.exit_status}"),
        )
    return raw


def evaluate(
    snippet: Snippet,
    config: InterpreterConfig,
    max_installs: int = DEFAULT_MAX_INSTALLS,
    install_timeout: float = DEFAULT_INSTALL_TIMEOUT,
) -> ExecutionOutcome:
    """Run ``snippet`` under ``config``; on import failures install the module and retry.

    Stops when the status is not an import failure, the missing module was
    already tried, ``max_installs`` is used up, or an installer times out.
    Raises SandboxEnvironmentError when the harness cannot run the snippet.
    """
    if max_installs < 1:
        raise ValueError("max_installs must be >= 1")
    start = time.monotonic()
    source = prepare_source(snippet.content)
    outcome = ExecutionOutcome(snippet.snippet_id, config.id, final_status=SPAWN_ERROR)
    tried: set[str] = set()
    last_run = False
    while True:
        raw = run_snippet(source, config)
        status = classify(raw)
        outcome.attempts.append((raw, status))
        outcome.final_status = status
        if last_run or status.name not in IMPORT_FAILURES or len(tried) >= max_installs:
            break
        module = extract_missing_module(raw.stderr_tail)
        if module is None or module in tried:
            break
        tried.add(module)
        install = run_installer(config, module, install_timeout)
        outcome.installed_modules.append((module, install.exit_status == 0))
        # a hung installer ends the loop after one confirming re-run
        last_run = install.timed_out
    outcome.total_duration = time.monotonic() - start
    return outcome


def evaluate_all(
    snippet: Snippet,
    configs: list[InterpreterConfig],
    max_installs: int = DEFAULT_MAX_INSTALLS,
    install_timeout: float = DEFAULT_INSTALL_TIMEOUT,
) -> list[ExecutionOutcome]:
    """One outcome per config, in order. Harness failures are recorded per entry."""
    if not configs:
        raise ValueError("at least one interpreter config is required")
    ids = [c.id for c in configs]
    if len(set(ids)) != len(ids):
        raise ValueError(f"interpreter ids must be distinct: {ids}")
    outcomes = []
    for config in configs:
        try:
            outcomes.append(evaluate(snippet, config, max_installs, install_timeout))
        except SandboxEnvironmentError as e:
            logger.error("harness failure for snippet %s under %s: %s", snippet.snippet_id, config.id, e)
            outcomes.append(harness_failure(snippet.snippet_id, config.id, str(e)))
    return outcomes


def harness_failure(snippet_id: int, interpreter_id: str, message: str) -> ExecutionOutcome:
    raw = RawExecution(spawn_error=message)
    return ExecutionOutcome(
        snippet_id,
        interpreter_id,
        final_status=SPAWN_ERROR,
        attempts=[(raw, SPAWN_ERROR)],
        harness_error=message,
    )
