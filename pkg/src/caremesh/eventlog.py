"""Append-only event log: newline-delimited, CRC-framed canonical records.

File layout::

    cm-log v1
    {"body":{...},"kind":"ParticipantRegistered","seq":1} 5f3a9c01
    {"body":{...},"kind":"CircleCreated","seq":2} 0b77e4d2

Each record line is the canonical JSON of ``{body, kind, seq}`` followed by
one space and the crc32 (8 hex digits) of the preceding bytes of the record.
The format is human-inspectable, diff-friendly, and truncation-detectable: a
torn final record (crash mid-write) is dropped on reopen, while damage
anywhere earlier raises :class:`CorruptRecord` with the offending seq.

A log may also live purely in memory (``path=None``) for harness runs.
"""

from __future__ import annotations

import hashlib
import os
import zlib
from pathlib import Path
from typing import Iterator, Sequence

from caremesh import canonical
from caremesh.errors import CorruptRecord, StorageFailure
from caremesh.events import EVENT_KINDS, DomainEvent

HEADER = b"cm-log v1\n"


def _frame(event_bytes: bytes) -> bytes:
    crc = zlib.crc32(event_bytes) & 0xFFFFFFFF
    return event_bytes + b" " + f"{crc:08x}".encode("ascii") + b"\n"


def _parse_line(line: bytes, expect_seq: int) -> DomainEvent:
    """Parse one complete record line (no trailing newline). Raises ValueError
    on any framing, checksum, or sequence violation."""
    if b" " not in line:
        raise ValueError("missing crc frame")
    payload, crc_hex = line.rsplit(b" ", 1)
    if len(crc_hex) != 8:
        raise ValueError("malformed crc frame")
    try:
        crc = int(crc_hex, 16)
    except ValueError:
        raise ValueError("malformed crc frame") from None
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ValueError("checksum mismatch")
    try:
        record = canonical.loads(payload)
    except Exception:
        raise ValueError("unparseable record") from None
    if not isinstance(record, dict) or set(record) != {"body", "kind", "seq"}:
        raise ValueError("record fields must be exactly body/kind/seq")
    if record["seq"] != expect_seq:
        raise ValueError(f"sequence gap: found {record['seq']}, expected {expect_seq}")
    if record["kind"] not in EVENT_KINDS:
        raise ValueError(f"unknown event kind {record['kind']!r}")
    if not isinstance(record["body"], dict):
        raise ValueError("body must be an object")
    return DomainEvent(seq=record["seq"], kind=record["kind"], body=record["body"])


class EventLog:
    """Append-only domain-event log with deterministic byte framing.

    Single appender, many readers. ``durable=True`` fsyncs every append so a
    command is only acknowledged once its events survive a crash.
    """

    def __init__(
        self,
        path: str | Path | None = None,
        *,
        durable: bool = True,
        recover: bool = True,
    ):
        self._path = Path(path) if path is not None else None
        self._durable = durable
        self._events: list[DomainEvent] = []
        self._digest = hashlib.sha256()
        self._record_blobs: list[bytes] = []
        self._fh = None
        if self._path is not None:
            self._open_file(recover)

    # --- file handling -------------------------------------------------

    def _open_file(self, recover: bool) -> None:
        assert self._path is not None
        try:
            if self._path.exists():
                raw = self._path.read_bytes()
                keep = self._scan(raw, recover)
                if keep < len(raw):
                    with open(self._path, "r+b") as fh:
                        fh.truncate(keep)
            else:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with open(self._path, "wb") as fh:
                    fh.write(HEADER)
                    fh.flush()
                    os.fsync(fh.fileno())
            self._fh = open(self._path, "ab")
        except OSError as exc:
            raise StorageFailure(f"cannot open event log {self._path}: {exc}") from exc

    def _scan(self, raw: bytes, recover: bool) -> int:
        """Load records from ``raw``; returns the byte length of the valid
        prefix (used to drop a torn tail when recovery is allowed)."""
        if not raw.startswith(HEADER):
            raise CorruptRecord(0, "missing or damaged log header")
        offset = len(HEADER)
        while offset < len(raw):
            nl = raw.find(b"\n", offset)
            seq = len(self._events) + 1
            if nl == -1:
                # Unterminated tail: only ever the product of a torn write.
                if recover:
                    return offset
                raise CorruptRecord(seq, "unterminated final record")
            line = raw[offset : nl]
            try:
                event = _parse_line(line, seq)
            except ValueError as exc:
                if recover and nl == len(raw) - 1:
                    # Damaged *final* record: crash artifact, drop it.
                    return offset
                raise CorruptRecord(seq, str(exc)) from None
            self._remember(event, _frame(event.record_bytes()))
            offset = nl + 1
        return offset

    def _remember(self, event: DomainEvent, blob: bytes) -> None:
        self._events.append(event)
        self._record_blobs.append(blob)
        self._digest.update(blob)

    # --- public surface --------------------------------------------------

    @property
    def path(self) -> Path | None:
        return self._path

    def head(self) -> int:
        return len(self._events)

    def append(self, pending: Sequence[tuple[str, dict]]) -> list[DomainEvent]:
        """Atomically append one command's events; durable before returning."""
        events: list[DomainEvent] = []
        blobs: list[bytes] = []
        seq = self.head()
        for kind, body in pending:
            seq += 1
            event = DomainEvent(seq=seq, kind=kind, body=body)
            events.append(event)
            blobs.append(_frame(event.record_bytes()))
        if self._fh is not None and blobs:
            try:
                self._fh.write(b"".join(blobs))
                self._fh.flush()
                if self._durable:
                    os.fsync(self._fh.fileno())
            except OSError as exc:
                raise StorageFailure(f"append failed: {exc}") from exc
        for event, blob in zip(events, blobs):
            self._remember(event, blob)
        return events

    def read_from(self, seq: int) -> Iterator[DomainEvent]:
        """Events with sequence >= ``seq`` in order; empty beyond head."""
        if seq < 1:
            seq = 1
        yield from self._events[seq - 1 :]

    def digest(self) -> str:
        """sha256 over the exact record bytes (header excluded)."""
        return self._digest.hexdigest()

    def record_bytes(self) -> bytes:
        return b"".join(self._record_blobs)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "EventLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
