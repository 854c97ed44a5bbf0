"""Stateless evaluation worker: lease a job, evaluate it, submit the result."""

from __future__ import annotations

import logging
import os
import threading
import time
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from pathlib import Path

from .classifier import classify
from .coordinator import (
    DEFAULT_LEASE_SECONDS,
    Coordinator,
    LocalClient,
    TransportError,
    snippet_from_wire,
    utc_now_iso,
)
from .corpus import Snippet
from .resolver import (
    DEFAULT_INSTALL_TIMEOUT,
    DEFAULT_MAX_INSTALLS,
    evaluate_all,
    harness_failure,
)
from .sandbox import InterpreterConfig, run_snippet
from .store import JobStore

logger = logging.getLogger(__name__)

DEFAULT_IDLE_SHUTDOWN = 60.0
SUBMIT_RETRIES = 5


class WorkerStartupError(RuntimeError):
    """An interpreter config failed the startup self-test."""


def default_parallelism() -> int:
    return max(1, (os.cpu_count() or 2) // 2)


def self_test(configs: list[InterpreterConfig]):
    for config in configs:
        raw = run_snippet("x=1\n", config)
        status = classify(raw)
        if not status.is_success:
            detail = raw.spawn_error or raw.stderr_tail.decode("utf-8", "replace").strip()[-500:]
            raise WorkerStartupError(f"interpreter {config.id!r} failed self-test ({status.name}): {detail}")


class Worker:
    def __init__(
        self,
        client,
        worker_id: str,
        configs: list[InterpreterConfig],
        parallelism: int | None = None,
        lease_seconds: float = DEFAULT_LEASE_SECONDS,
        idle_shutdown_after: float = DEFAULT_IDLE_SHUTDOWN,
        poll_interval: float = 0.5,
        max_installs: int = DEFAULT_MAX_INSTALLS,
        install_timeout: float = DEFAULT_INSTALL_TIMEOUT,
        backoff_base: float = 0.5,
    ):
        if parallelism is not None and parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        self.client = client
        self.worker_id = worker_id
        self.configs = {c.id: c for c in configs}
        self.parallelism = parallelism or default_parallelism()
        self.lease_seconds = lease_seconds
        self.idle_shutdown_after = idle_shutdown_after
        self.poll_interval = poll_interval
        self.max_installs = max_installs
        self.install_timeout = install_timeout
        self.backoff_base = backoff_base
        self._stop = threading.Event()
        self._held = 0
        self._held_lock = threading.Lock()
        self.max_held = 0
        self.submitted: dict[str, str] = {}

    def stop(self):
        self._stop.set()

    def run(self) -> dict:
        """Loop until stopped or idle for ``idle_shutdown_after`` seconds."""
        active: set[Future] = set()
        idle_since = time.monotonic()
        lease_failures = 0
        with ThreadPoolExecutor(self.parallelism, thread_name_prefix=f"{self.worker_id}-eval") as pool:
            while not self._stop.is_set():
                active = {f for f in active if not f.done()}
                if len(active) < self.parallelism:
                    try:
                        job = self.client.lease(self.worker_id, self.lease_seconds)
                        lease_failures = 0
                    except TransportError as e:
                        lease_failures += 1
                        logger.warning("lease failed (%s), backing off", e)
                        job = None
                        self._stop.wait(min(30.0, self.backoff_base * 2 ** min(lease_failures, 6)))
                    if job is not None:
                        idle_since = time.monotonic()
                        with self._held_lock:
                            self._held += 1
                            self.max_held = max(self.max_held, self._held)
                        active.add(pool.submit(self._process, job))
                        continue
                    if not active and time.monotonic() - idle_since >= self.idle_shutdown_after:
                        logger.info("%s idle for %.0fs, shutting down", self.worker_id, self.idle_shutdown_after)
                        break
                if active:
                    wait(active, timeout=self.poll_interval, return_when=FIRST_COMPLETED)
                else:
                    self._stop.wait(self.poll_interval)
            wait(active)
        return {"worker_id": self.worker_id, "submitted": len(self.submitted), "max_held": self.max_held}

    def _renew_loop(self, job_id: str, done: threading.Event):
        while not done.wait(self.lease_seconds / 2):
            try:
                if not self.client.renew(job_id, self.worker_id, self.lease_seconds):
                    logger.warning("lease on %s lost", job_id)
                    return
            except TransportError as e:
                logger.warning("renewing %s failed: %s", job_id, e)

    def evaluate_job(self, job: dict) -> dict:
        snippet: Snippet = snippet_from_wire(job["snippet"])
        configs = [self.configs.get(iid) for iid in job["interpreter_ids"]]
        known = [c for c in configs if c is not None]
        by_id = {o.interpreter_id: o for o in evaluate_all(snippet, known, self.max_installs, self.install_timeout)} if known else {}
        outcomes = []
        for iid in job["interpreter_ids"]:
            outcome = by_id.get(iid) or harness_failure(snippet.snippet_id, iid, f"worker has no interpreter {iid!r}")
            outcomes.append(outcome.to_dict())
        return {
            "job_id": job["job_id"],
            "worker_id": self.worker_id,
            "outcomes": outcomes,
            "submitted_at": utc_now_iso(),
        }

    def _process(self, job: dict):
        done = threading.Event()
        renewer = threading.Thread(target=self._renew_loop, args=(job["job_id"], done), daemon=True)
        renewer.start()
        try:
            try:
                result = self.evaluate_job(job)
            finally:
                done.set()
            self._submit(result)
        except Exception:
            logger.exception("processing %s crashed; leaving it to lease expiry", job["job_id"])
        finally:
            with self._held_lock:
                self._held -= 1

    def _submit(self, result: dict):
        for attempt in range(SUBMIT_RETRIES + 1):
            try:
                status = self.client.submit(result)
            except TransportError as e:
                if attempt == SUBMIT_RETRIES:
                    logger.error("giving up on submitting %s: %s", result["job_id"], e)
                    return
                delay = self.backoff_base * 2**attempt
                logger.warning("submit of %s failed (%s), retry in %.1fs", result["job_id"], e, delay)
                time.sleep(delay)
                continue
            self.submitted[result["job_id"]] = status
            logger.debug("submitted %s: %s", result["job_id"], status)
            return


def run_local(
    snippets: list[Snippet],
    configs: list[InterpreterConfig],
    results_path: Path | str,
    parallelism: int | None = None,
    store: str = ":memory:",
    max_installs: int = DEFAULT_MAX_INSTALLS,
    install_timeout: float = DEFAULT_INSTALL_TIMEOUT,
) -> dict:
    """Coordinator and one worker in this process, no network. Writes the results export."""
    coordinator = Coordinator(JobStore(store))
    loaded = coordinator.load_jobs(snippets, [c.id for c in configs])
    worker = Worker(
        LocalClient(coordinator),
        "local",
        configs,
        parallelism=parallelism,
        idle_shutdown_after=0.0,
        poll_interval=0.05,
        max_installs=max_installs,
        install_timeout=install_timeout,
    )
    worker.run()
    written = coordinator.export_results(results_path)
    progress = coordinator.progress()
    coordinator.store.close()
    return {"jobs_loaded": loaded, "outcomes_written": written, **{k: progress[k] for k in ("pending", "leased", "done", "dead")}}
