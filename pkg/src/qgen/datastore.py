"""File-backed workspace persistence and training export.

Layout: one subdirectory per record kind, one JSON file per record plus a
sha256 sidecar, and an index.json per kind for listings. Transparent and
diffable; an embedded database could replace it behind this interface.

Mutations are serialized through a single-writer lock (in-process RLock +
on-disk lock file); reads are lock-free on the immutable record files.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import shutil
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .attribution import Attribution, Highlight
from .chunker import Chunk
from .corpus import utc_now_iso
from .errors import (
    CorruptRecord,
    DatasetNotFound,
    NotFound,
    TooFewPairs,
    WorkspaceLocked,
)
from .metrics import MetricReport

SCHEMA_VERSION = 1

RECORD_KINDS = ("groups", "documents", "examples", "datasets", "jobs", "comparisons")


@dataclass
class GenerationFailure:
    chunk_id: str
    error_code: str
    message: str

    def to_dict(self) -> dict:
        return {"chunk_id": self.chunk_id, "error_code": self.error_code, "message": self.message}

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationFailure":
        return cls(chunk_id=d["chunk_id"], error_code=d["error_code"], message=d["message"])


@dataclass
class QAPair:
    pair_id: str
    dataset_id: str
    doc_id: str
    chunk_id: str
    question: str
    answer: str
    metric_report: MetricReport
    attribution: Attribution
    highlights: list[Highlight] = field(default_factory=list)
    created_at: str = field(default_factory=utc_now_iso)

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "dataset_id": self.dataset_id,
            "doc_id": self.doc_id,
            "chunk_id": self.chunk_id,
            "question": self.question,
            "answer": self.answer,
            "metric_report": self.metric_report.to_dict(),
            "attribution": self.attribution.to_dict(),
            "highlights": [h.to_dict() for h in self.highlights],
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QAPair":
        return cls(
            pair_id=d["pair_id"],
            dataset_id=d["dataset_id"],
            doc_id=d["doc_id"],
            chunk_id=d["chunk_id"],
            question=d["question"],
            answer=d["answer"],
            metric_report=MetricReport.from_dict(d["metric_report"]),
            attribution=Attribution.from_dict(d["attribution"]),
            highlights=[Highlight.from_dict(h) for h in d["highlights"]],
            created_at=d["created_at"],
        )


@dataclass
class DatasetRecord:
    dataset_id: str
    group_id: str
    config_snapshot: dict
    chunk_snapshot: list[Chunk]
    corpus_stats: dict
    pairs: list[QAPair]
    failures: list[GenerationFailure] = field(default_factory=list)
    orphaned: bool = False
    prompt_template_version: str = "1"
    created_at: str = field(default_factory=utc_now_iso)
    schema_version: int = SCHEMA_VERSION

    def chunk_by_id(self, chunk_id: str) -> Optional[Chunk]:
        for chunk in self.chunk_snapshot:
            if chunk.chunk_id == chunk_id:
                return chunk
        return None

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "group_id": self.group_id,
            "config_snapshot": self.config_snapshot,
            "chunk_snapshot": [c.to_dict() for c in self.chunk_snapshot],
            "corpus_stats": self.corpus_stats,
            "pairs": [p.to_dict() for p in self.pairs],
            "failures": [f.to_dict() for f in self.failures],
            "orphaned": self.orphaned,
            "prompt_template_version": self.prompt_template_version,
            "created_at": self.created_at,
            "schema_version": self.schema_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRecord":
        return cls(
            dataset_id=d["dataset_id"],
            group_id=d["group_id"],
            config_snapshot=d["config_snapshot"],
            chunk_snapshot=[Chunk.from_dict(c) for c in d["chunk_snapshot"]],
            corpus_stats=d["corpus_stats"],
            pairs=[QAPair.from_dict(p) for p in d["pairs"]],
            failures=[GenerationFailure.from_dict(f) for f in d["failures"]],
            orphaned=d["orphaned"],
            prompt_template_version=d["prompt_template_version"],
            created_at=d["created_at"],
            schema_version=d["schema_version"],
        )


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.1
    valid_fraction: float = 0.1
    shuffle: bool = True
    seed: int = 0
    include_context: bool = False

    def __post_init__(self):
        if not (0 <= self.test_fraction < 1) or not (0 <= self.valid_fraction < 1):
            raise ValueError("fractions must be in [0, 1)")
        if self.test_fraction + self.valid_fraction >= 1:
            raise ValueError("test_fraction + valid_fraction must be < 1")

    def to_dict(self) -> dict:
        return {
            "test_fraction": self.test_fraction,
            "valid_fraction": self.valid_fraction,
            "shuffle": self.shuffle,
            "seed": self.seed,
            "include_context": self.include_context,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(
            test_fraction=d["test_fraction"],
            valid_fraction=d["valid_fraction"],
            shuffle=d["shuffle"],
            seed=d["seed"],
            include_context=d["include_context"],
        )


def _dump_record(record: dict) -> bytes:
    return json.dumps(record, ensure_ascii=False, sort_keys=True, indent=2).encode("utf-8")


class Workspace:
    """Root directory holding every persisted record kind."""

    def __init__(self, root: str | Path, lock_timeout: float = 10.0):
        self.root = Path(root)
        self.lock_timeout = lock_timeout
        self.root.mkdir(parents=True, exist_ok=True)
        for kind in RECORD_KINDS:
            (self.root / kind).mkdir(exist_ok=True)
        (self.root / "exports").mkdir(exist_ok=True)
        self._rlock = threading.RLock()
        self._lock_depth = 0
        self._lock_path = self.root / ".lock"

    # --- single-writer lock ------------------------------------------------

    @contextmanager
    def writer_lock(self, timeout: Optional[float] = None):
        timeout = self.lock_timeout if timeout is None else timeout
        deadline = time.monotonic() + timeout
        acquired = self._rlock.acquire(timeout=timeout)
        if not acquired:
            raise WorkspaceLocked("another writer holds the workspace lock")
        try:
            if self._lock_depth == 0:
                self._acquire_lock_file(deadline)
            self._lock_depth += 1
        except BaseException:
            self._rlock.release()
            raise
        try:
            yield
        finally:
            self._lock_depth -= 1
            if self._lock_depth == 0:
                self._lock_path.unlink(missing_ok=True)
            self._rlock.release()

    def _acquire_lock_file(self, deadline: float) -> None:
        while True:
            try:
                fd = os.open(self._lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.write(fd, str(os.getpid()).encode())
                os.close(fd)
                return
            except FileExistsError:
                if time.monotonic() >= deadline:
                    raise WorkspaceLocked(
                        f"workspace lock file {self._lock_path} held by another process"
                    )
                time.sleep(0.05)

    # --- id allocation -----------------------------------------------------

    def next_counter(self) -> int:
        # monotonically increasing; persisted so ids stay unique across runs
        counter_path = self.root / "counter.txt"
        with self.writer_lock():
            current = int(counter_path.read_text()) if counter_path.exists() else 0
            counter_path.write_text(str(current + 1))
        return current + 1

    # --- generic record CRUD ----------------------------------------------

    def _record_path(self, kind: str, record_id: str) -> Path:
        return self.root / kind / f"{record_id}.json"

    def _index_path(self, kind: str) -> Path:
        return self.root / kind / "index.json"

    def _read_index(self, kind: str) -> list[str]:
        path = self._index_path(kind)
        if not path.exists():
            return []
        return json.loads(path.read_text("utf-8"))

    @staticmethod
    def _atomic_write(path: Path, data: bytes) -> None:
        tmp = path.with_name(f".tmp-{path.name}")
        tmp.write_bytes(data)
        os.replace(tmp, path)

    def save(self, kind: str, record_id: str, record: dict) -> None:
        with self.writer_lock():
            data = _dump_record(record)
            path = self._record_path(kind, record_id)
            self._atomic_write(path, data)
            self._atomic_write(path.with_suffix(".sha256"),
                               hashlib.sha256(data).hexdigest().encode())
            index = self._read_index(kind)
            if record_id not in index:
                index.append(record_id)
                self._atomic_write(self._index_path(kind), json.dumps(index).encode())

    def load_optional(self, kind: str, record_id: str) -> Optional[dict]:
        path = self._record_path(kind, record_id)
        checksum_path = path.with_suffix(".sha256")
        # a reader can race a concurrent save between the two replaces; re-read
        # a few times before declaring the record corrupt
        for attempt in range(3):
            if not path.exists():
                return None
            data = path.read_bytes()
            if not checksum_path.exists():
                break
            expected = checksum_path.read_text().strip()
            if hashlib.sha256(data).hexdigest() == expected:
                break
            if attempt == 2:
                raise CorruptRecord(f"checksum mismatch for {path}")
            time.sleep(0.01)
        try:
            return json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptRecord(f"unreadable record {path}: {exc}") from exc

    def load(self, kind: str, record_id: str) -> dict:
        record = self.load_optional(kind, record_id)
        if record is None:
            raise NotFound(f"no {kind[:-1]} record {record_id}")
        return record

    def list_ids(self, kind: str) -> list[str]:
        return [i for i in self._read_index(kind) if self._record_path(kind, i).exists()]

    def list_records(self, kind: str) -> list[dict]:
        return [self.load(kind, record_id) for record_id in self.list_ids(kind)]

    def delete(self, kind: str, record_id: str) -> None:
        with self.writer_lock():
            path = self._record_path(kind, record_id)
            if not path.exists():
                raise NotFound(f"no {kind[:-1]} record {record_id}")
            path.unlink()
            path.with_suffix(".sha256").unlink(missing_ok=True)
            index = self._read_index(kind)
            if record_id in index:
                index.remove(record_id)
                self._index_path(kind).write_text(json.dumps(index))

    # --- datasets ----------------------------------------------------------

    def save_dataset(self, dataset: DatasetRecord) -> None:
        self.save("datasets", dataset.dataset_id, dataset.to_dict())

    def load_dataset(self, dataset_id: str) -> DatasetRecord:
        record = self.load_optional("datasets", dataset_id)
        if record is None:
            raise DatasetNotFound(f"no dataset {dataset_id}")
        return DatasetRecord.from_dict(record)

    # --- training export ---------------------------------------------------

    def export_training(self, dataset_id: str, spec: SplitSpec) -> Path:
        """Write train/valid/test JSONL plus a manifest; returns the export dir.

        Deterministic given (dataset, spec): the directory name hashes the
        spec, the pair order comes from a seeded PRNG, and the split files
        are byte-stable. Written to a temp dir and renamed into place.
        """
        dataset = self.load_dataset(dataset_id)
        n = len(dataset.pairs)
        if spec.test_fraction > 0 and spec.valid_fraction > 0 and n < 3:
            raise TooFewPairs("need at least 3 pairs when both fractions are > 0")

        pairs = list(dataset.pairs)
        if spec.shuffle:
            random.Random(spec.seed).shuffle(pairs)

        n_test = int(n * spec.test_fraction)
        n_valid = int(n * spec.valid_fraction)
        splits = {
            "test": pairs[:n_test],
            "valid": pairs[n_test : n_test + n_valid],
            "train": pairs[n_test + n_valid :],
        }

        spec_hash = hashlib.sha256(
            json.dumps(spec.to_dict(), sort_keys=True).encode()
        ).hexdigest()[:12]
        final_dir = self.root / "exports" / dataset_id / spec_hash
        tmp_dir = final_dir.parent / f".tmp-{spec_hash}-{os.getpid()}"
        if tmp_dir.exists():
            shutil.rmtree(tmp_dir)
        tmp_dir.mkdir(parents=True)

        for name in ("train", "valid", "test"):
            with open(tmp_dir / f"{name}.jsonl", "w", encoding="utf-8") as fh:
                for pair in splits[name]:
                    fh.write(json.dumps({"text": self._format_line(dataset, pair, spec)},
                                        ensure_ascii=False) + "\n")

        manifest = {
            "dataset_id": dataset_id,
            "spec": spec.to_dict(),
            "counts": {name: len(splits[name]) for name in ("train", "valid", "test")},
            "created_at": utc_now_iso(),
        }
        (tmp_dir / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2), "utf-8"
        )

        if final_dir.exists():
            shutil.rmtree(final_dir)
        os.replace(tmp_dir, final_dir)
        return final_dir

    @staticmethod
    def _format_line(dataset: DatasetRecord, pair: QAPair, spec: SplitSpec) -> str:
        base = f"Q: {pair.question}\nA: {pair.answer}"
        if spec.include_context:
            chunk = dataset.chunk_by_id(pair.chunk_id)
            context = chunk.text if chunk is not None else ""
            return f"Context: {context}\n{base}"
        return base
