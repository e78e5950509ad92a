"""Durable storage formats.

Four artifacts: the tier-2 cold transcript (append-only, line-delimited),
the tier-1 warm record store (single keyed file, index rebuilt on open),
hibernation image files, and run event logs. The contracts are append
durability, exact replay, and torn-tail tolerance; the engines are
deliberately plain files.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, asdict
from pathlib import Path

from .errors import IoFailureError, NotFoundError
from .workloads import Message


@dataclass
class ColdLogRecord:
    """One durable transcript line."""

    session_id: str
    seq: int
    id: str
    turn_index: int
    role: str
    tokens: int
    importance: float
    is_key: bool
    topic: str
    content_digest: str

    @staticmethod
    def from_message(session_id: str, seq: int, m: Message) -> "ColdLogRecord":
        return ColdLogRecord(session_id=session_id, seq=seq, **m.to_dict())

    def to_message(self) -> Message:
        d = asdict(self)
        d.pop("session_id")
        d.pop("seq")
        return Message(**d)


@dataclass
class WarmRecord:
    """Tier-1 keyed summary record."""

    id: str
    source_ids: list[str]
    tokens: int
    preserved_keys: list[str]
    fidelity: float
    created_at: int


class ColdLog:
    """Append-only newline-delimited transcript for one session.

    Sequence numbers increase strictly; a trailing partial line (torn
    write) is skipped with a warning on read.
    """

    def __init__(self, path: str | Path, session_id: str) -> None:
        self.path = Path(path)
        self.session_id = session_id
        self.closed = False
        self._next_seq = len(self.replay_raw(self.path))
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, m: Message) -> int:
        if self.closed:
            raise IoFailureError(f"cold log {self.path} is closed")
        rec = ColdLogRecord.from_message(self.session_id, self._next_seq, m)
        try:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
                f.flush()
                os.fsync(f.fileno())
        except OSError as exc:
            raise IoFailureError(str(exc)) from exc
        self._next_seq += 1
        return rec.seq

    def close(self) -> None:
        self.closed = True

    @staticmethod
    def replay_raw(path: str | Path) -> list[ColdLogRecord]:
        path = Path(path)
        if not path.exists():
            return []
        out: list[ColdLogRecord] = []
        data = path.read_text(encoding="utf-8")
        lines = data.split("\n")
        tail = lines.pop()  # text after the final newline; "" when intact
        if tail:
            warnings.warn(f"ignoring torn trailing record in {path}")
        for line in lines:
            if not line:
                continue
            out.append(ColdLogRecord(**json.loads(line)))
        return out

    def replay(self) -> list[Message]:
        """Reconstruct the message stream in exact write order."""
        records = self.replay_raw(self.path)
        for i, r in enumerate(records):
            if r.seq != i:
                raise IoFailureError(f"sequence gap in {self.path} at record {i}")
        return [r.to_message() for r in records]


class WarmStore:
    """Single-file keyed store: last write per id wins, index rebuilt on open."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._index: dict[str, WarmRecord] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        data = self.path.read_text(encoding="utf-8")
        lines = data.split("\n")
        if lines and lines[-1]:
            warnings.warn(f"ignoring torn trailing record in {self.path}")
            lines = lines[:-1]
        for line in lines:
            if not line:
                continue
            d = json.loads(line)
            self._index[d["id"]] = WarmRecord(**d)

    def put(self, rec: WarmRecord) -> None:
        try:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
                f.flush()
                os.fsync(f.fileno())
        except OSError as exc:
            raise IoFailureError(str(exc)) from exc
        self._index[rec.id] = rec

    def get(self, record_id: str) -> WarmRecord:
        if record_id not in self._index:
            raise NotFoundError(f"warm record {record_id!r} not found")
        return self._index[record_id]

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._index

    def __len__(self) -> int:
        return len(self._index)


def session_dir(root: str | Path, session_id: str) -> Path:
    d = Path(root) / "sessions" / session_id
    d.mkdir(parents=True, exist_ok=True)
    return d


def run_dir(root: str | Path, run_id: str) -> Path:
    d = Path(root) / "runs" / run_id
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_event_log(directory: str | Path, lines: list[str]) -> Path:
    path = Path(directory) / "events.log"
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path


def write_hibernation_image(directory: str | Path, image: bytes) -> Path:
    path = Path(directory) / "hibernate.img"
    path.write_bytes(image)
    return path


def read_hibernation_image(directory: str | Path) -> bytes:
    path = Path(directory) / "hibernate.img"
    if not path.exists():
        raise NotFoundError(f"no hibernation image in {directory}")
    return path.read_bytes()
