import json
import threading
import time

import pytest

from snipex.coordinator import Coordinator, LocalClient, TransportError
from snipex.sandbox import InterpreterConfig
from snipex.store import JobStore
from snipex.worker import Worker, WorkerStartupError, default_parallelism, run_local, self_test

from .conftest import make_snippet


def test_default_parallelism_is_positive():
    assert default_parallelism() >= 1


def test_self_test(fast_configs):
    self_test(fast_configs)
    broken = InterpreterConfig("broken", ("/nonexistent/python", "{file}"))
    with pytest.raises(WorkerStartupError, match="broken"):
        self_test([broken])


def test_run_local_end_to_end(tmp_path, fast_configs):
    snippets = [
        make_snippet(1, "print 'hi'\n"),
        make_snippet(2, "print('hi')\n"),
        make_snippet(3, "1/0\n"),
    ]
    stats = run_local(snippets, fast_configs, tmp_path / "r.jsonl", parallelism=2)
    assert stats["done"] == 3 and stats["outcomes_written"] == 6
    records = [json.loads(line) for line in (tmp_path / "r.jsonl").read_text().splitlines()]
    got = {(r["snippet_id"], r["interpreter_id"]): r["final_status"] for r in records}
    assert got == {
        (1, "py2"): "Success",
        (1, "py3"): "SyntaxError",
        (2, "py2"): "Success",
        (2, "py3"): "Success",
        (3, "py2"): "ZeroDivisionError",
        (3, "py3"): "ZeroDivisionError",
    }
    assert all(r["worker_id"] == "local" and r["submitted_at"].endswith("Z") for r in records)


class CountingClient(LocalClient):
    """LocalClient that tracks how many leases are outstanding at once."""

    def __init__(self, coordinator):
        super().__init__(coordinator)
        self.outstanding = 0
        self.peak = 0
        self._lock = threading.Lock()

    def lease(self, worker_id, lease_seconds):
        job = super().lease(worker_id, lease_seconds)
        if job is not None:
            with self._lock:
                self.outstanding += 1
                self.peak = max(self.peak, self.outstanding)
        return job

    def submit(self, result):
        status = super().submit(result)
        with self._lock:
            self.outstanding -= 1
        return status


def test_parallelism_caps_outstanding_leases(py3_config):
    coord = Coordinator(JobStore(":memory:"))
    coord.load_jobs([make_snippet(i, "import time\ntime.sleep(0.3)\n") for i in range(8)], ["py3"])
    client = CountingClient(coord)
    worker = Worker(client, "w", [py3_config], parallelism=3, idle_shutdown_after=0, poll_interval=0.02)
    stats = worker.run()
    assert stats["submitted"] == 8
    assert client.peak == 3 and worker.max_held == 3
    assert coord.progress()["done"] == 8


def test_idle_shutdown(py3_config):
    coord = Coordinator(JobStore(":memory:"))
    worker = Worker(LocalClient(coord), "w", [py3_config], parallelism=1, idle_shutdown_after=0.5, poll_interval=0.05)
    start = time.monotonic()
    worker.run()
    assert 0.5 <= time.monotonic() - start < 3


def test_stop_ends_the_loop(py3_config):
    coord = Coordinator(JobStore(":memory:"))
    worker = Worker(LocalClient(coord), "w", [py3_config], idle_shutdown_after=3600, poll_interval=0.05)
    threading.Timer(0.3, worker.stop).start()
    start = time.monotonic()
    worker.run()
    assert time.monotonic() - start < 3


def test_unknown_interpreter_becomes_harness_failure(py3_config):
    coord = Coordinator(JobStore(":memory:"))
    coord.load_jobs([make_snippet(1)], ["py3", "py9"])
    worker = Worker(LocalClient(coord), "w", [py3_config], parallelism=1, idle_shutdown_after=0)
    worker.run()
    (record,) = [r for r in coord.iter_result_records() if r["interpreter_id"] == "py9"]
    assert record["final_status"] == "SpawnError" and "py9" in record["harness_error"]


def test_renewal_keeps_long_jobs_leased(py3_config):
    coord = Coordinator(JobStore(":memory:"))
    coord.load_jobs([make_snippet(1, "import time\ntime.sleep(1.5)\n")], ["py3"])
    worker = Worker(LocalClient(coord), "a", [py3_config], parallelism=1, lease_seconds=0.4, idle_shutdown_after=0)
    runner = threading.Thread(target=worker.run)
    runner.start()
    deadline = time.monotonic() + 5
    while coord.store.get_job("snippet-1").lease_owner != "a" and time.monotonic() < deadline:
        time.sleep(0.01)
    thief_got = []
    deadline = time.monotonic() + 1.2
    while time.monotonic() < deadline:
        job = coord.lease_next("thief", 0.4)
        if job:
            thief_got.append(job)
        time.sleep(0.05)
    runner.join()
    assert thief_got == []
    assert [r["worker_id"] for r in coord.iter_result_records()] == ["a"]


class FlakyClient(LocalClient):
    def __init__(self, coordinator, failures):
        super().__init__(coordinator)
        self.failures = failures
        self.calls = 0

    def submit(self, result):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransportError("connection refused")
        return super().submit(result)


def test_submit_retries_with_backoff(py3_config):
    coord = Coordinator(JobStore(":memory:"))
    coord.load_jobs([make_snippet(1)], ["py3"])
    client = FlakyClient(coord, failures=3)
    worker = Worker(client, "w", [py3_config], parallelism=1, idle_shutdown_after=0, backoff_base=0.01)
    worker.run()
    assert client.calls == 4 and coord.progress()["done"] == 1


def test_submit_gives_up_after_retries(py3_config):
    coord = Coordinator(JobStore(":memory:"))
    coord.load_jobs([make_snippet(1)], ["py3"])
    client = FlakyClient(coord, failures=100)
    worker = Worker(client, "w", [py3_config], parallelism=1, idle_shutdown_after=0, backoff_base=0.001)
    worker.run()
    assert client.calls == 6
    assert coord.progress()["leased"] == 1


def test_invalid_parallelism(py3_config):
    with pytest.raises(ValueError):
        Worker(None, "w", [py3_config], parallelism=0)
