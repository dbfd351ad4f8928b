"""Colorization job records, a linearizable job table, and a bounded
FIFO worker pool."""

from __future__ import annotations

import json
import queue
import threading
import time
import uuid
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

from .store import NotFoundError

QUEUED, RUNNING, DONE, FAILED = "queued", "running", "done", "failed"
_TRANSITIONS = {QUEUED: {RUNNING, DONE, FAILED}, RUNNING: {DONE, FAILED},
                DONE: set(), FAILED: set()}


@dataclass
class JobRecord:
    job_id: str
    target_id: str
    reference_id: str
    state: str = QUEUED
    result_id: Optional[str] = None
    error: Optional[str] = None
    created_at: float = field(default_factory=time.time)
    finished_at: Optional[float] = None

    def check(self):
        assert (self.state == DONE) == (self.result_id is not None)
        assert (self.state == FAILED) == (self.error is not None)


class JobTable:
    """All transitions happen under one lock; every observable state is
    the result of a legal transition sequence."""

    def __init__(self):
        self._lock = threading.Lock()
        self._jobs = {}

    def create(self, target_id: str, reference_id: str) -> JobRecord:
        job = JobRecord(job_id=uuid.uuid4().hex, target_id=target_id,
                        reference_id=reference_id)
        with self._lock:
            self._jobs[job.job_id] = job
        return job

    def get(self, job_id: str) -> JobRecord:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise NotFoundError(job_id)
        return job

    def transition(self, job_id: str, state: str, result_id=None, error=None):
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise NotFoundError(job_id)
            if state not in _TRANSITIONS[job.state]:
                raise ValueError(
                    f"illegal transition {job.state} -> {state} for {job_id}")
            job.state = state
            if state == DONE:
                job.result_id = result_id
                job.finished_at = time.time()
            elif state == FAILED:
                job.error = error
                job.finished_at = time.time()
            job.check()
            return job

    def all_jobs(self):
        with self._lock:
            return [JobRecord(**asdict(j)) for j in self._jobs.values()]

    def to_json(self) -> str:
        with self._lock:
            return json.dumps({jid: asdict(j) for jid, j in self._jobs.items()},
                              sort_keys=True)

    @classmethod
    def from_json(cls, payload: str) -> "JobTable":
        table = cls()
        for jid, data in json.loads(payload).items():
            record = JobRecord(**data)
            # interrupted work is failed work after a restart
            if record.state in (QUEUED, RUNNING):
                record.state = FAILED
                record.error = "interrupted by shutdown"
            record.check()
            table._jobs[jid] = record
        return table


class WorkerPool:
    """Fixed thread count draining a bounded FIFO queue."""

    def __init__(self, worker_count: int = 2, queue_depth: int = 64):
        self._queue = queue.Queue(maxsize=queue_depth)
        self._threads = []
        self._stop = threading.Event()
        for i in range(worker_count):
            t = threading.Thread(target=self._run, name=f"worker-{i}",
                                 daemon=True)
            t.start()
            self._threads.append(t)

    def submit(self, fn: Callable[[], None]) -> None:
        self._queue.put(fn)

    def _run(self):
        while not self._stop.is_set():
            try:
                fn = self._queue.get(timeout=0.1)
            except queue.Empty:
                continue
            try:
                fn()
            finally:
                self._queue.task_done()

    def drain(self, timeout: float = 60.0) -> None:
        """Block until queued work finishes (tests and shutdown)."""
        deadline = time.time() + timeout
        while time.time() < deadline:
            if self._queue.unfinished_tasks == 0:
                return
            time.sleep(0.01)
        raise TimeoutError("worker pool did not drain in time")

    def shutdown(self):
        self._stop.set()
        for t in self._threads:
            t.join(timeout=1.0)
