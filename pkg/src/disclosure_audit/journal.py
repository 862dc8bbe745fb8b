"""Append-only checkpoint journal.

One JSON object per line::

    {"accession": "...", "crc64": "16 hex digits", "payload": {...}, "seq": 7, "stage": "ScoredA"}

``crc64`` is CRC-64/XZ over the canonical encoding of ``payload`` (sorted
keys, compact separators, UTF-8). Sequence numbers start at 1 and have no
gaps. A damaged final line is the normal residue of a crash and is dropped on
recovery; damage anywhere else raises :class:`JournalCorrupt`.
"""

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import IoFailure, JournalCorrupt, SimulatedCrash
from .kernels import crc64


def canonical_bytes(payload) -> bytes:
    return json.dumps(
        payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def payload_digest(payload) -> int:
    return crc64(canonical_bytes(payload))


@dataclass(frozen=True)
class JournalEntry:
    seq: int
    accession: str
    stage: str
    crc64: int
    payload: dict = field(repr=False)

    def encode(self) -> bytes:
        rec = {
            "seq": self.seq,
            "accession": self.accession,
            "stage": self.stage,
            "crc64": f"{self.crc64:016x}",
            "payload": self.payload,
        }
        return canonical_bytes(rec) + b"\n"

    def verify(self) -> bool:
        return payload_digest(self.payload) == self.crc64


def _decode(raw: bytes) -> JournalEntry:
    rec = json.loads(raw.decode("utf-8"))
    entry = JournalEntry(
        int(rec["seq"]), str(rec["accession"]), str(rec["stage"]), int(rec["crc64"], 16), rec["payload"]
    )
    if not entry.verify():
        raise ValueError(f"checksum mismatch at seq {entry.seq}")
    return entry


@dataclass(frozen=True)
class ResumePoint:
    seq: int
    entries: tuple = ()
    dropped_tail: bool = False
    valid_bytes: int = 0


def scan_journal(path) -> ResumePoint:
    """Verify a journal without modifying it."""
    path = Path(path)
    if not path.exists():
        return ResumePoint(0)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read journal {path}: {exc}") from exc

    entries = []
    pos = 0
    dropped = False
    while pos < len(data):
        nl = data.find(b"\n", pos)
        if nl < 0:
            # unterminated final line: a torn write
            dropped = True
            break
        raw = data[pos:nl]
        is_last = nl + 1 >= len(data)
        try:
            entry = _decode(raw)
        except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
            if is_last:
                dropped = True
                break
            raise JournalCorrupt(f"entry after seq {len(entries)} is damaged: {exc}") from exc
        expected = entries[-1].seq + 1 if entries else 1
        if entry.seq != expected:
            raise JournalCorrupt(f"sequence gap: expected {expected}, found {entry.seq}")
        entries.append(entry)
        pos = nl + 1
    return ResumePoint(entries[-1].seq if entries else 0, tuple(entries), dropped, pos)


def recover(path) -> ResumePoint:
    """Return the highest consistent sequence number, truncating a torn tail."""
    point = scan_journal(path)
    if point.dropped_tail:
        try:
            with open(path, "r+b") as fh:
                fh.truncate(point.valid_bytes)
        except OSError as exc:
            raise IoFailure(f"cannot truncate journal {path}: {exc}") from exc
    return point


def read_journal(path) -> tuple:
    return scan_journal(path).entries


class Journal:
    """Single-writer appender over a recovered journal file.

    ``kill_after_seq`` is a test hook: once the entry with that sequence
    number is durable the writer raises :class:`SimulatedCrash`, optionally
    leaving half of the next line behind (``torn_tail``).
    """

    def __init__(self, path, fsync=False, kill_after_seq=None, torn_tail=False):
        self.path = Path(path)
        point = recover(self.path)
        self.seq = point.seq
        self.committed = {(e.accession, e.stage): e.payload for e in point.entries}
        self.fsync = fsync
        self.kill_after_seq = kill_after_seq
        self.torn_tail = torn_tail
        self.appended = 0
        self._lock = threading.Lock()
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "ab")
        except OSError as exc:
            raise IoFailure(f"cannot open journal {self.path}: {exc}") from exc

    def get(self, accession, stage):
        return self.committed.get((accession, stage))

    def __contains__(self, key):
        return key in self.committed

    def append(self, accession: str, stage: str, payload: dict) -> JournalEntry:
        with self._lock:
            if (accession, stage) in self.committed:
                raise ValueError(f"{stage} for {accession} is already committed")
            entry = JournalEntry(self.seq + 1, accession, stage, payload_digest(payload), payload)
            line = entry.encode()
            try:
                self._fh.write(line)
                self._fh.flush()
                if self.fsync:
                    os.fsync(self._fh.fileno())
            except OSError as exc:
                raise IoFailure(f"journal append failed: {exc}") from exc
            self.seq = entry.seq
            # store the decoded canonical form so readers see what a resumed run would load
            self.committed[(accession, stage)] = json.loads(line)["payload"]
            self.appended += 1
            if self.kill_after_seq is not None and entry.seq >= self.kill_after_seq:
                if self.torn_tail:
                    self._fh.write(line[: max(1, len(line) // 2)])
                    self._fh.flush()
                self.close()
                raise SimulatedCrash(f"killed after seq {entry.seq}")
            return entry

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
