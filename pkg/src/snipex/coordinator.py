"""Job leasing service: core state machine, HTTP API and clients.

Wire format (all timestamps ISO-8601 UTC, snippet content base64)::

    POST /api/v1/jobs/lease   {worker_id, lease_seconds[, job_id]} -> 200 job | 204
    POST /api/v1/results      {job_id, worker_id, outcomes, submitted_at} -> 200 {status} | 404
    GET  /api/v1/progress     -> {pending, leased, done, dead, total, results_per_second}
    GET  /api/v1/taxonomy     -> {version, codes}

Passing ``job_id`` to the lease endpoint renews a lease the worker still
holds (409 when it does not).
"""

from __future__ import annotations

import base64
import json
import logging
import threading
import time
from collections import deque
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

import httpx
from pydantic import BaseModel, Field

from .corpus import Snippet, format_timestamp
from .store import JobStore, StoreError
from .taxonomy import taxonomy_table

logger = logging.getLogger(__name__)

DEFAULT_LEASE_SECONDS = 120.0
DEFAULT_MAX_JOB_ATTEMPTS = 3
RATE_WINDOW_SECONDS = 60.0


class InvalidResult(ValueError):
    """A submitted result does not match its job."""


def job_id_for(snippet_id: int) -> str:
    return f"snippet-{snippet_id}"


def snippet_to_wire(snippet: Snippet) -> dict:
    d = snippet.to_dict()
    d["content_b64"] = base64.b64encode(d.pop("content").encode("utf-8")).decode("ascii")
    return d


def snippet_from_wire(d: dict) -> Snippet:
    d = dict(d)
    d["content"] = base64.b64decode(d.pop("content_b64")).decode("utf-8", errors="replace")
    return Snippet.from_dict(d)


def snippet_meta(d: dict) -> dict:
    """Wire snippet without its content, as attached to exported results."""
    return {k: v for k, v in d.items() if k not in ("content_b64", "content")}


def utc_now_iso() -> str:
    return format_timestamp(datetime.now(timezone.utc))


def _iso(epoch: float) -> str:
    return format_timestamp(datetime.fromtimestamp(epoch, timezone.utc))


class Coordinator:
    """Lease/submit state machine over a JobStore.

    Every mutating call holds one lock, so lease and submit are
    linearizable per job within this process.
    """

    def __init__(
        self,
        store: JobStore,
        max_job_attempts: int = DEFAULT_MAX_JOB_ATTEMPTS,
        clock: Callable[[], float] = time.time,
    ):
        self.store = store
        self.max_job_attempts = max_job_attempts
        self.clock = clock
        self._lock = threading.Lock()
        self._accepted_times: deque[float] = deque()

    def load_jobs(self, snippets: Iterable[Snippet], interpreter_ids: list[str]) -> int:
        if not interpreter_ids:
            raise ValueError("interpreter_ids must be non-empty")
        rows = [(job_id_for(s.snippet_id), s.snippet_id, snippet_to_wire(s), list(interpreter_ids)) for s in snippets]
        with self._lock:
            return self.store.add_jobs(rows)

    def _job_wire(self, row) -> dict:
        return {
            "job_id": row.job_id,
            "snippet": row.payload,
            "interpreter_ids": row.interpreter_ids,
            "lease_expiry": _iso(row.lease_expiry) if row.lease_expiry is not None else None,
            "attempt_count": row.attempt_count,
        }

    def lease_next(self, worker_id: str, lease_seconds: float = DEFAULT_LEASE_SECONDS) -> dict | None:
        if not worker_id:
            raise ValueError("worker_id must be non-empty")
        with self._lock:
            row = self.store.lease(worker_id, lease_seconds, self.clock(), self.max_job_attempts)
        return self._job_wire(row) if row is not None else None

    def renew(self, job_id: str, worker_id: str, lease_seconds: float = DEFAULT_LEASE_SECONDS) -> dict | None:
        with self._lock:
            row = self.store.renew(job_id, worker_id, lease_seconds, self.clock())
        return self._job_wire(row) if row is not None else None

    def submit_result(self, result: dict) -> str:
        job_id = result.get("job_id")
        worker_id = result.get("worker_id")
        outcomes = result.get("outcomes")
        if not job_id or not worker_id or not isinstance(outcomes, list):
            raise InvalidResult("result needs job_id, worker_id and an outcomes list")
        with self._lock:
            job = self.store.get_job(job_id)
            if job is None:
                return "unknown_job"
            got = sorted(o.get("interpreter_id") for o in outcomes)
            if got != sorted(job.interpreter_ids):
                raise InvalidResult(f"outcomes cover {got}, job {job_id} expects {sorted(job.interpreter_ids)}")
            if any(int(o.get("snippet_id", -1)) != job.snippet_id for o in outcomes):
                raise InvalidResult(f"outcomes do not belong to snippet {job.snippet_id}")
            status = self.store.submit(job_id, worker_id, result.get("submitted_at") or utc_now_iso(), outcomes)
            if status == "accepted":
                self._accepted_times.append(self.clock())
        return status

    def progress(self) -> dict:
        now = self.clock()
        with self._lock:
            counts = self.store.counts()
            while self._accepted_times and self._accepted_times[0] < now - RATE_WINDOW_SECONDS:
                self._accepted_times.popleft()
            recent = len(self._accepted_times)
        counts["total"] = sum(counts.values())
        counts["results_per_second"] = recent / RATE_WINDOW_SECONDS
        return counts

    def export_results(self, path: Path | str) -> int:
        """Write one JSON line per (snippet, interpreter) outcome. Returns lines written."""
        return write_results(self.iter_result_records(), path)

    def iter_result_records(self) -> Iterable[dict]:
        with self._lock:
            rows = list(self.store.iter_results())
        for job, worker_id, submitted_at, outcomes in rows:
            order = {iid: i for i, iid in enumerate(job.interpreter_ids)}
            for outcome in sorted(outcomes, key=lambda o: order.get(o["interpreter_id"], len(order))):
                yield {
                    **outcome,
                    "job_id": job.job_id,
                    "worker_id": worker_id,
                    "submitted_at": submitted_at,
                    "snippet": snippet_meta(job.payload),
                }


def write_results(records: Iterable[dict], path: Path | str) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            n += 1
    return n


class LeaseRequest(BaseModel):
    worker_id: str = Field(min_length=1)
    lease_seconds: float = Field(default=DEFAULT_LEASE_SECONDS, gt=0)
    job_id: str | None = None


class ResultSubmission(BaseModel):
    job_id: str = Field(min_length=1)
    worker_id: str = Field(min_length=1)
    outcomes: list[dict]
    submitted_at: str | None = None


def create_app(coordinator: Coordinator):
    from fastapi import FastAPI, HTTPException, Response
    from fastapi.responses import JSONResponse

    app = FastAPI(title="snipex coordinator")

    @app.post("/api/v1/jobs/lease")
    def lease(req: LeaseRequest):
        try:
            if req.job_id is not None:
                job = coordinator.renew(req.job_id, req.worker_id, req.lease_seconds)
                if job is None:
                    raise HTTPException(409, detail="lease not held")
                return job
            job = coordinator.lease_next(req.worker_id, req.lease_seconds)
        except StoreError as e:
            raise HTTPException(503, detail=str(e)) from e
        if job is None:
            return Response(status_code=204)
        return job

    @app.post("/api/v1/results")
    def submit(result: ResultSubmission):
        try:
            status = coordinator.submit_result(result.model_dump())
        except InvalidResult as e:
            raise HTTPException(422, detail=str(e)) from e
        except StoreError as e:
            raise HTTPException(503, detail=str(e)) from e
        if status == "unknown_job":
            return JSONResponse({"status": status}, status_code=404)
        return {"status": status}

    @app.get("/api/v1/progress")
    def progress():
        return coordinator.progress()

    @app.get("/api/v1/taxonomy")
    def taxonomy():
        return taxonomy_table()

    return app


class TransportError(Exception):
    """The coordinator could not be reached or answered with a server error."""


class LocalClient:
    """In-process client speaking the same dicts as the HTTP API."""

    def __init__(self, coordinator: Coordinator):
        self.coordinator = coordinator

    def lease(self, worker_id: str, lease_seconds: float) -> dict | None:
        return self.coordinator.lease_next(worker_id, lease_seconds)

    def renew(self, job_id: str, worker_id: str, lease_seconds: float) -> bool:
        return self.coordinator.renew(job_id, worker_id, lease_seconds) is not None

    def submit(self, result: dict) -> str:
        # round-trip through JSON so both clients hand over identical data
        return self.coordinator.submit_result(json.loads(json.dumps(result)))

    def progress(self) -> dict:
        return self.coordinator.progress()

    def close(self):
        pass


class HttpClient:
    def __init__(self, api_base: str, timeout: float = 30.0):
        self.api_base = api_base.rstrip("/")
        self._http = httpx.Client(base_url=self.api_base, timeout=timeout)

    def _post(self, path: str, body: dict) -> httpx.Response:
        try:
            resp = self._http.post(path, json=body)
        except httpx.HTTPError as e:
            raise TransportError(f"POST {path}: {e}") from e
        if resp.status_code >= 500:
            raise TransportError(f"POST {path}: HTTP {resp.status_code}")
        return resp

    def lease(self, worker_id: str, lease_seconds: float) -> dict | None:
        resp = self._post("/api/v1/jobs/lease", {"worker_id": worker_id, "lease_seconds": lease_seconds})
        if resp.status_code == 204:
            return None
        resp.raise_for_status()
        return resp.json()

    def renew(self, job_id: str, worker_id: str, lease_seconds: float) -> bool:
        resp = self._post(
            "/api/v1/jobs/lease", {"worker_id": worker_id, "lease_seconds": lease_seconds, "job_id": job_id}
        )
        return resp.status_code == 200

    def submit(self, result: dict) -> str:
        resp = self._post("/api/v1/results", result)
        if resp.status_code in (200, 404):
            return resp.json()["status"]
        resp.raise_for_status()
        raise TransportError(f"unexpected status {resp.status_code}")

    def progress(self) -> dict:
        try:
            resp = self._http.get("/api/v1/progress")
        except httpx.HTTPError as e:
            raise TransportError(str(e)) from e
        resp.raise_for_status()
        return resp.json()

    def close(self):
        self._http.close()
