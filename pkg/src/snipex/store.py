"""Job and result persistence.

One SQLAlchemy Core schema serves both backends: an embedded SQLite file
for single-node runs and any relational database reachable by URL for
cluster runs. Each operation runs in one transaction. SQLite stores also
serialize operations in-process, since an in-memory database is a single
shared connection.
"""

from __future__ import annotations

import json
import logging
import threading
from contextlib import nullcontext
from dataclasses import dataclass
from typing import Iterator

from sqlalchemy import (
    Column,
    Float,
    ForeignKey,
    Integer,
    MetaData,
    String,
    Table,
    Text,
    and_,
    create_engine,
    func,
    insert,
    or_,
    select,
    update,
)
from sqlalchemy.engine import Engine
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.pool import StaticPool

logger = logging.getLogger(__name__)

PENDING, LEASED, DONE, DEAD = "pending", "leased", "done", "dead"
STATES = (PENDING, LEASED, DONE, DEAD)

metadata = MetaData()

jobs = Table(
    "jobs",
    metadata,
    Column("seq", Integer, primary_key=True, autoincrement=True),
    Column("job_id", String(64), unique=True, nullable=False),
    Column("snippet_id", Integer, nullable=False),
    Column("payload", Text, nullable=False),
    Column("interpreter_ids", Text, nullable=False),
    Column("state", String(16), nullable=False, index=True),
    Column("lease_owner", String(128)),
    Column("lease_expiry", Float),
    Column("attempt_count", Integer, nullable=False, default=0),
)

results = Table(
    "results",
    metadata,
    Column("job_id", String(64), ForeignKey("jobs.job_id"), primary_key=True),
    Column("worker_id", String(128), nullable=False),
    Column("submitted_at", String(40), nullable=False),
    Column("outcomes", Text, nullable=False),
)


class StoreError(Exception):
    """Persistence failed; the operation may be retried."""


@dataclass(frozen=True)
class JobRow:
    job_id: str
    snippet_id: int
    payload: dict
    interpreter_ids: list[str]
    state: str
    lease_owner: str | None
    lease_expiry: float | None
    attempt_count: int


def _row(r) -> JobRow:
    return JobRow(
        job_id=r.job_id,
        snippet_id=r.snippet_id,
        payload=json.loads(r.payload),
        interpreter_ids=json.loads(r.interpreter_ids),
        state=r.state,
        lease_owner=r.lease_owner,
        lease_expiry=r.lease_expiry,
        attempt_count=r.attempt_count,
    )


def store_url(location: str) -> str:
    """Accept a SQLAlchemy URL, ``:memory:``, or a filesystem path for SQLite."""
    if "://" in location:
        return location
    if location == ":memory:":
        return "sqlite://"
    return f"sqlite:///{location}"


class JobStore:
    def __init__(self, location: str = ":memory:"):
        url = store_url(location)
        kwargs = {}
        if url.startswith("sqlite"):
            kwargs["connect_args"] = {"check_same_thread": False, "timeout": 30}
            if url in ("sqlite://", "sqlite:///:memory:"):
                kwargs["poolclass"] = StaticPool
        self.url = url
        try:
            self.engine: Engine = create_engine(url, **kwargs)
            metadata.create_all(self.engine)
        except SQLAlchemyError as e:
            raise StoreError(f"cannot open store {url}: {e}") from e
        self._sqlite = self.engine.dialect.name == "sqlite"
        self._guard = threading.RLock() if self._sqlite else nullcontext()

    def close(self):
        self.engine.dispose()

    def add_jobs(self, new_jobs: list[tuple[str, int, dict, list[str]]]) -> int:
        """Insert jobs whose id is not yet known. Returns how many were added."""
        with self._guard:
            added = 0
            try:
                with self.engine.begin() as conn:
                    known = set(conn.execute(select(jobs.c.job_id)).scalars())
                    rows = []
                    for job_id, snippet_id, payload, interpreter_ids in new_jobs:
                        if job_id in known:
                            continue
                        known.add(job_id)
                        rows.append(
                            dict(
                                job_id=job_id,
                                snippet_id=snippet_id,
                                payload=json.dumps(payload, sort_keys=True),
                                interpreter_ids=json.dumps(list(interpreter_ids)),
                                state=PENDING,
                                attempt_count=0,
                            )
                        )
                    if rows:
                        conn.execute(insert(jobs), rows)
                    added = len(rows)
            except SQLAlchemyError as e:
                raise StoreError(str(e)) from e
            return added

    def lease(self, worker_id: str, lease_seconds: float, now: float, max_attempts: int) -> JobRow | None:
        with self._guard:
            try:
                with self.engine.begin() as conn:
                    conn.execute(
                        update(jobs)
                        .where(jobs.c.state == LEASED, jobs.c.lease_expiry <= now, jobs.c.attempt_count >= max_attempts)
                        .values(state=DEAD, lease_owner=None, lease_expiry=None)
                    )
                    query = (
                        select(jobs)
                        .where(or_(jobs.c.state == PENDING, and_(jobs.c.state == LEASED, jobs.c.lease_expiry <= now)))
                        .order_by(jobs.c.seq)
                        .limit(1)
                    )
                    if not self._sqlite:
                        query = query.with_for_update(skip_locked=True)
                    r = conn.execute(query).first()
                    if r is None:
                        return None
                    conn.execute(
                        update(jobs)
                        .where(jobs.c.seq == r.seq)
                        .values(
                            state=LEASED,
                            lease_owner=worker_id,
                            lease_expiry=now + lease_seconds,
                            attempt_count=r.attempt_count + 1,
                        )
                    )
                    return _row(conn.execute(select(jobs).where(jobs.c.seq == r.seq)).one())
            except SQLAlchemyError as e:
                raise StoreError(str(e)) from e

    def renew(self, job_id: str, worker_id: str, lease_seconds: float, now: float) -> JobRow | None:
        """Extend a lease the worker still holds; None when it no longer does."""
        with self._guard:
            try:
                with self.engine.begin() as conn:
                    res = conn.execute(
                        update(jobs)
                        .where(jobs.c.job_id == job_id, jobs.c.state == LEASED, jobs.c.lease_owner == worker_id)
                        .values(lease_expiry=now + lease_seconds)
                    )
                    if res.rowcount != 1:
                        return None
                    return _row(conn.execute(select(jobs).where(jobs.c.job_id == job_id)).one())
            except SQLAlchemyError as e:
                raise StoreError(str(e)) from e

    def get_job(self, job_id: str) -> JobRow | None:
        with self._guard:
            with self.engine.connect() as conn:
                r = conn.execute(select(jobs).where(jobs.c.job_id == job_id)).first()
            return _row(r) if r is not None else None

    def submit(self, job_id: str, worker_id: str, submitted_at: str, outcomes: list[dict]) -> str:
        """Record the first result for a job. Returns accepted, duplicate or unknown_job."""
        with self._guard:
            try:
                with self.engine.begin() as conn:
                    job = conn.execute(select(jobs.c.job_id).where(jobs.c.job_id == job_id)).first()
                    if job is None:
                        return "unknown_job"
                    if conn.execute(select(results.c.job_id).where(results.c.job_id == job_id)).first() is not None:
                        return "duplicate"
                    conn.execute(
                        insert(results).values(
                            job_id=job_id,
                            worker_id=worker_id,
                            submitted_at=submitted_at,
                            outcomes=json.dumps(outcomes, sort_keys=True),
                        )
                    )
                    conn.execute(
                        update(jobs).where(jobs.c.job_id == job_id).values(state=DONE, lease_owner=None, lease_expiry=None)
                    )
                    return "accepted"
            except SQLAlchemyError as e:
                raise StoreError(str(e)) from e

    def counts(self) -> dict[str, int]:
        with self._guard:
            with self.engine.connect() as conn:
                rows = conn.execute(select(jobs.c.state, func.count()).group_by(jobs.c.state)).all()
            out = dict.fromkeys(STATES, 0)
            out.update({state: n for state, n in rows})
            return out

    def iter_results(self) -> Iterator[tuple[JobRow, str, str, list[dict]]]:
        """(job, worker_id, submitted_at, outcomes) for every recorded result, by snippet id."""
        query = (
            select(jobs, results.c.worker_id, results.c.submitted_at, results.c.outcomes)
            .join(results, results.c.job_id == jobs.c.job_id)
            .order_by(jobs.c.snippet_id, jobs.c.job_id)
        )
        with self._guard, self.engine.connect() as conn:
            rows = conn.execute(query).all()
        for r in rows:
            yield _row(r), r.worker_id, r.submitted_at, json.loads(r.outcomes)

    def result_count(self) -> int:
        with self._guard:
            with self.engine.connect() as conn:
                return conn.execute(select(func.count()).select_from(results)).scalar_one()
