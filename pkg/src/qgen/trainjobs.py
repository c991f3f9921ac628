"""External fine-tuning jobs.

Training runs out-of-process behind a user-supplied command template (config
or env TRAIN_CMD); this module renders hyperparameters into an argv list,
supervises the process, and tracks a small lifecycle state machine:
Pending -> Running -> {Completed, Failed, Canceled}.
"""

from __future__ import annotations

import os
import re
import shlex
import signal
import subprocess
import threading
import time
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Optional

from .corpus import make_id, utc_now_iso
from .datastore import Workspace
from .errors import (
    Conflict,
    IllegalTransition,
    MissingExport,
    NotFound,
    SpawnError,
    UnknownPlaceholder,
)

STATES = ("Pending", "Running", "Completed", "Failed", "Canceled")

LEGAL_TRANSITIONS = {
    "Pending": {"Running"},
    "Running": {"Completed", "Failed", "Canceled"},
    "Completed": set(),
    "Failed": set(),
    "Canceled": set(),
}

_PLACEHOLDER_RE = re.compile(r"\{(\w+)\}")


@dataclass(frozen=True)
class TrainingParams:
    base_model: str
    learning_rate: float
    iterations: int
    lora_layers: int
    batch_size: int
    adapter_output_dir: str

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        for name in ("iterations", "lora_layers", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    def to_dict(self) -> dict:
        return {
            "base_model": self.base_model,
            "learning_rate": self.learning_rate,
            "iterations": self.iterations,
            "lora_layers": self.lora_layers,
            "batch_size": self.batch_size,
            "adapter_output_dir": self.adapter_output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingParams":
        return cls(
            base_model=d["base_model"],
            learning_rate=d["learning_rate"],
            iterations=d["iterations"],
            lora_layers=d["lora_layers"],
            batch_size=d["batch_size"],
            adapter_output_dir=d["adapter_output_dir"],
        )


@dataclass
class TrainingJob:
    job_id: str
    dataset_export_dir: str
    params: TrainingParams
    command_template: str
    state: str = "Pending"
    exit_code: Optional[int] = None
    log_path: Optional[str] = None
    pid: Optional[int] = None
    started_at: Optional[str] = None
    ended_at: Optional[str] = None
    created_at: str = field(default_factory=utc_now_iso)

    def transition(self, new_state: str, exit_code: Optional[int] = None) -> None:
        if new_state not in STATES:
            raise IllegalTransition(f"unknown state {new_state!r}")
        if new_state not in LEGAL_TRANSITIONS[self.state]:
            raise IllegalTransition(f"cannot move {self.state} -> {new_state}")
        self.state = new_state
        if new_state == "Running":
            self.started_at = utc_now_iso()
        else:
            self.ended_at = utc_now_iso()
        if new_state == "Failed":
            self.exit_code = exit_code if exit_code is not None else -1

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "dataset_export_dir": self.dataset_export_dir,
            "params": self.params.to_dict(),
            "command_template": self.command_template,
            "state": self.state,
            "exit_code": self.exit_code,
            "log_path": self.log_path,
            "pid": self.pid,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingJob":
        return cls(
            job_id=d["job_id"],
            dataset_export_dir=d["dataset_export_dir"],
            params=TrainingParams.from_dict(d["params"]),
            command_template=d["command_template"],
            state=d["state"],
            exit_code=d["exit_code"],
            log_path=d["log_path"],
            pid=d["pid"],
            started_at=d["started_at"],
            ended_at=d["ended_at"],
            created_at=d["created_at"],
        )


def _plain_decimal(value: float) -> str:
    # 1e-05 must render as 0.00001 for trainers that reject exponents
    return format(Decimal(str(value)), "f")


def render_command(job: TrainingJob) -> list[str]:
    """Substitute template placeholders token by token into an argv list.

    Known placeholders: {data} {model} {lr} {iters} {lora_layers} {batch}
    {out}; any other placeholder aborts before launch. All placeholders are
    optional in the template.
    """
    values = {
        "data": job.dataset_export_dir,
        "model": job.params.base_model,
        "lr": _plain_decimal(job.params.learning_rate),
        "iters": str(job.params.iterations),
        "lora_layers": str(job.params.lora_layers),
        "batch": str(job.params.batch_size),
        "out": job.params.adapter_output_dir,
    }

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise UnknownPlaceholder(f"unknown placeholder {{{name}}} in command template")
        return values[name]

    return [_PLACEHOLDER_RE.sub(substitute, token) for token in shlex.split(job.command_template)]


class JobManager:
    """Launch and supervise training jobs; state is persisted per mutation."""

    def __init__(self, workspace: Workspace, max_concurrent_jobs: int = 1):
        self.ws = workspace
        self.max_concurrent_jobs = max_concurrent_jobs
        self._procs: dict[str, subprocess.Popen] = {}
        self._mutex = threading.Lock()
        self._log_dir = workspace.root / "job-logs"
        self._log_dir.mkdir(exist_ok=True)
        self._recover()

    def _recover(self) -> None:
        # jobs left Running by a crashed supervisor are marked Failed(-1)
        for record in self.ws.list_records("jobs"):
            job = TrainingJob.from_dict(record)
            if job.state == "Running" and not _pid_alive(job.pid):
                job.transition("Failed", exit_code=-1)
                self._save(job)

    def _save(self, job: TrainingJob) -> None:
        self.ws.save("jobs", job.job_id, job.to_dict())

    def create(
        self, dataset_export_dir: str, params: TrainingParams, command_template: str
    ) -> TrainingJob:
        if not Path(dataset_export_dir).is_dir():
            raise MissingExport(f"dataset export dir {dataset_export_dir} does not exist")
        job = TrainingJob(
            job_id=make_id(dataset_export_dir, self.ws.next_counter()),
            dataset_export_dir=dataset_export_dir,
            params=params,
            command_template=command_template,
        )
        render_command(job)  # fail on unknown placeholders before persisting
        self._save(job)
        return job

    def launch(self, job_id: str) -> str:
        with self._mutex:
            job = self.status(job_id)
            running = [
                TrainingJob.from_dict(r)
                for r in self.ws.list_records("jobs")
                if r["state"] == "Running"
            ]
            if len(running) >= self.max_concurrent_jobs:
                raise Conflict("job concurrency limit reached")
            if any(
                r.params.adapter_output_dir == job.params.adapter_output_dir for r in running
            ):
                raise Conflict(
                    f"adapter output dir {job.params.adapter_output_dir} has a running job"
                )
            argv = render_command(job)
            job.log_path = str(self._log_dir / f"{job.job_id}.log")
            log_file = open(job.log_path, "ab", buffering=0)
            try:
                proc = subprocess.Popen(argv, stdout=log_file, stderr=subprocess.STDOUT)
            except OSError as exc:
                log_file.close()
                raise SpawnError(f"cannot launch trainer: {exc}") from exc
            job.pid = proc.pid
            job.transition("Running")
            self._save(job)
            self._procs[job.job_id] = proc

        watcher = threading.Thread(
            target=self._watch, args=(job.job_id, proc, log_file), daemon=True
        )
        watcher.start()
        return job.job_id

    def _watch(self, job_id: str, proc: subprocess.Popen, log_file) -> None:
        code = proc.wait()
        log_file.close()
        with self._mutex:
            job = self.status(job_id)
            if job.state != "Running":  # cancel already recorded the end state
                return
            if code == 0:
                job.transition("Completed")
            elif code < 0 and -code == signal.SIGTERM:
                job.transition("Canceled")
            else:
                job.transition("Failed", exit_code=code)
            self._save(job)
            self._procs.pop(job_id, None)

    def status(self, job_id: str) -> TrainingJob:
        record = self.ws.load_optional("jobs", job_id)
        if record is None:
            raise NotFound(f"no job {job_id}")
        return TrainingJob.from_dict(record)

    def list_jobs(self) -> list[TrainingJob]:
        return [TrainingJob.from_dict(r) for r in self.ws.list_records("jobs")]

    def cancel(self, job_id: str) -> None:
        with self._mutex:
            job = self.status(job_id)
            if job.state != "Running":
                raise Conflict(f"job {job_id} is {job.state}, not Running")
            proc = self._procs.get(job_id)
            if proc is not None:
                proc.terminate()
            job.transition("Canceled")
            self._save(job)

    def wait(self, job_id: str, timeout: Optional[float] = None) -> TrainingJob:
        proc = self._procs.get(job_id)
        if proc is not None:
            try:
                proc.wait(timeout=timeout)
            except subprocess.TimeoutExpired:
                pass
        # give the watcher thread a moment to record the final state
        for _ in range(100):
            job = self.status(job_id)
            if job.state != "Running":
                return job
            time.sleep(0.02)
        return self.status(job_id)


def _pid_alive(pid: Optional[int]) -> bool:
    if pid is None:
        return False
    try:
        os.kill(pid, 0)
    except (OSError, ProcessLookupError):
        return False
    return True
