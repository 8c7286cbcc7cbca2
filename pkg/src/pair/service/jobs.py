"""Job records, the FIFO worker queue, and the append-only journal.

Every state change is appended to a JSON-lines journal, so job records
survive process restarts; jobs that were queued or running at shutdown come
back as failed with an explanatory error.
"""
from __future__ import annotations

import json
import queue
import threading
import time
import uuid
from pathlib import Path
from typing import Callable

from pydantic import BaseModel

VALID_TRANSITIONS = {
    "queued": {"running", "failed"},
    "running": {"done", "failed"},
    "done": set(),
    "failed": set(),
}


class JobProgress(BaseModel):
    completed: int = 0
    total: int = 0


class Job(BaseModel):
    id: str
    state: str = "queued"
    spec: dict
    progress: JobProgress = JobProgress()
    result_path: str | None = None
    error: str | None = None
    created_at: float
    started_at: float | None = None
    finished_at: float | None = None


class JobStore:
    """Thread-safe job table backed by an append-only journal."""

    def __init__(self, journal_path: str | Path):
        self._path = Path(journal_path)
        self._lock = threading.Lock()
        self._jobs: dict[str, Job] = {}
        self._replay()

    def _replay(self) -> None:
        if not self._path.exists():
            return
        for line in self._path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            self._jobs[record["id"]] = Job(**record)
        interrupted = [
            job for job in self._jobs.values() if job.state in ("queued", "running")
        ]
        for job in interrupted:
            job.state = "failed"
            job.error = "interrupted by service restart"
            job.finished_at = time.time()
            self._append(job)

    def _append(self, job: Job) -> None:
        self._path.parent.mkdir(parents=True, exist_ok=True)
        with open(self._path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(job.model_dump(), sort_keys=True) + "\n")

    def create(self, spec: dict) -> Job:
        job = Job(id=uuid.uuid4().hex, spec=spec, created_at=time.time())
        with self._lock:
            self._jobs[job.id] = job
            self._append(job)
        return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            job = self._jobs.get(job_id)
            return None if job is None else job.model_copy(deep=True)

    def transition(self, job_id: str, state: str, **fields) -> Job:
        with self._lock:
            job = self._jobs[job_id]
            if state not in VALID_TRANSITIONS[job.state]:
                raise ValueError(f"illegal transition {job.state} -> {state}")
            job.state = state
            for key, value in fields.items():
                setattr(job, key, value)
            if state == "running":
                job.started_at = time.time()
            if state in ("done", "failed"):
                job.finished_at = time.time()
            self._append(job)
            return job.model_copy(deep=True)

    def update_progress(self, job_id: str, completed: int, total: int) -> None:
        with self._lock:
            job = self._jobs[job_id]
            if completed < job.progress.completed:
                return  # progress never moves backwards
            job.progress = JobProgress(completed=completed, total=total)


class WorkerPool:
    """FIFO queue drained by one or more worker threads."""

    def __init__(self, run: Callable[[str], None], depth: int, workers: int):
        self._run = run
        self.queue: queue.Queue[str | None] = queue.Queue(maxsize=depth)
        self._threads = [
            threading.Thread(target=self._loop, daemon=True, name=f"pair-worker-{i}")
            for i in range(workers)
        ]

    def start(self) -> None:
        for t in self._threads:
            t.start()

    def submit(self, job_id: str) -> bool:
        try:
            self.queue.put_nowait(job_id)
            return True
        except queue.Full:
            return False

    def stop(self) -> None:
        for _ in self._threads:
            self.queue.put(None)
        for t in self._threads:
            t.join(timeout=10)

    def _loop(self) -> None:
        while True:
            job_id = self.queue.get()
            if job_id is None:
                return
            self._run(job_id)
