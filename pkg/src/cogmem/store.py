"""Embedded journaled key-value store hosting both memory namespaces.

Layout under ``data_dir``::

    journal.log   frames: b"CJ" | u32 body length | u32 crc32(body) | body
    snapshot.bin  b"CSNP" | u8 format version | u32 crc32(body) | body
    MANIFEST      text: format version and last snapshot sequence

A frame body is one journal entry (sequence number, operation, batch
membership and the list of mutations). All entries written by one
``commit`` call form a batch; recovery applies a batch only when every one
of its entries is intact, which is what makes multi-entry commits atomic.

Namespaces are the durable namespace (``"durable"``) and one namespace per
session (``"session/<id>"``). Both live in the same journal.
"""

from __future__ import annotations

import enum
import logging
import os
import struct
import threading
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import codec
from .errors import CorruptJournal, StoreUnavailable

logger = logging.getLogger(__name__)

DURABLE = "durable"
SESSION_PREFIX = "session/"

JOURNAL_FILE = "journal.log"
SNAPSHOT_FILE = "snapshot.bin"
MANIFEST_FILE = "MANIFEST"

FRAME_MAGIC = b"CJ"
_FRAME_HEADER = struct.Struct(">2sII")
SNAPSHOT_MAGIC = b"CSNP"
_SNAPSHOT_HEADER = struct.Struct(">4sBI")


def session_ns(session_id: str) -> str:
    return f"{SESSION_PREFIX}{session_id}"


class Op(str, enum.Enum):
    PUT = "Put"
    UPDATE = "Update"
    PURGE = "Purge"
    PROMOTE_BATCH = "PromoteBatch"


@dataclass(frozen=True)
class Mutation:
    """One state change. ``purge`` on a session namespace drops the whole
    namespace; on the durable namespace it drops every key under ``key``
    used as a prefix."""

    kind: str  # put | update | delete | purge
    ns: str
    key: str = ""
    value: Any = None

    def to_wire(self) -> dict:
        return {"kind": self.kind, "ns": self.ns, "key": self.key, "value": self.value}

    @classmethod
    def from_wire(cls, raw: dict) -> "Mutation":
        return cls(raw["kind"], raw["ns"], raw["key"], raw["value"])


def put(ns: str, key: str, value: Any) -> Mutation:
    return Mutation("put", ns, key, value)


def update(ns: str, key: str, value: Any) -> Mutation:
    return Mutation("update", ns, key, value)


def delete(ns: str, key: str) -> Mutation:
    return Mutation("delete", ns, key)


def purge(ns: str, prefix: str = "") -> Mutation:
    return Mutation("purge", ns, prefix)


@dataclass(frozen=True)
class Batch:
    """Payload of one journal entry before a sequence number is assigned."""

    op: Op
    mutations: tuple[Mutation, ...]

    @classmethod
    def of(cls, op: Op, mutations: Iterable[Mutation]) -> "Batch":
        return cls(Op(op), tuple(mutations))


@dataclass(frozen=True)
class JournalEntry:
    sequence_no: int
    operation: Op
    payload: tuple[Mutation, ...]
    checksum: int
    batch_start: int
    batch_size: int


@dataclass
class RecoveryReport:
    replayed: int = 0
    discarded: int = 0  # torn trailing frames, 0 or 1
    rolled_back: int = 0  # intact entries of an incomplete trailing batch
    snapshot_sequence: int = 0
    last_sequence: int = 0
    truncated_bytes: int = 0


class SimulatedCrash(BaseException):
    """Raised by a FaultInjector to emulate process death mid-write.

    Derives from BaseException so engine error handling cannot swallow it.
    """


@dataclass
class FaultInjector:
    """Cuts the journal byte stream or stops at a named point.

    ``crash_after_bytes`` counts journal bytes written since the injector
    was armed; the write that crosses the limit lands only its prefix and
    then ``SimulatedCrash`` is raised. ``fail_after_bytes`` does the same
    but raises ``OSError`` so the store sees a recoverable I/O failure.
    ``crash_at`` names a point such as ``"after_flush"``.
    """

    crash_after_bytes: int | None = None
    fail_after_bytes: int | None = None
    crash_at: str | None = None
    written: int = 0
    write_boundaries: list[int] = field(default_factory=list)

    def allow(self, size: int) -> tuple[int, BaseException | None]:
        for limit, exc in (
            (self.crash_after_bytes, SimulatedCrash("journal write cut")),
            (self.fail_after_bytes, OSError("injected write failure")),
        ):
            if limit is not None and self.written + size > limit:
                n = max(0, limit - self.written)
                self.written += n
                return n, exc
        self.written += size
        self.write_boundaries.append(self.written)
        return size, None

    def point(self, name: str) -> None:
        if self.crash_at == name:
            raise SimulatedCrash(name)


class ContextStore:
    """Single-writer journaled store with snapshots and crash recovery.

    Opening a store runs ``recover()``; the report is kept on
    ``self.recovery``. Values returned by reads are the committed objects
    and must be treated as read-only.
    """

    def __init__(
        self,
        data_dir: str | os.PathLike,
        *,
        snapshot_every: int = 1000,
        fsync: bool = True,
        faults: FaultInjector | None = None,
        read_only: bool = False,
    ):
        self.data_dir = Path(data_dir)
        self.snapshot_every = snapshot_every
        self.fsync = fsync
        self.faults = faults
        self.read_only = read_only
        self._lock = threading.RLock()
        self._fh = None
        self._poisoned = False
        self._closed = False
        self._reset_state()
        if not read_only:
            self.data_dir.mkdir(parents=True, exist_ok=True)
        self.recovery = self.recover()
        if not read_only:
            self._open_journal()

    # ------------------------------------------------------------------ paths
    @property
    def journal_path(self) -> Path:
        return self.data_dir / JOURNAL_FILE

    @property
    def snapshot_path(self) -> Path:
        return self.data_dir / SNAPSHOT_FILE

    @property
    def manifest_path(self) -> Path:
        return self.data_dir / MANIFEST_FILE

    def files(self) -> list[Path]:
        return [p for p in (self.journal_path, self.snapshot_path, self.manifest_path) if p.exists()]

    # ------------------------------------------------------------------ state
    def _reset_state(self) -> None:
        self._durable: dict[str, Any] = {}
        self._sessions: dict[str, dict[str, Any]] = {}
        self._key_seq: dict[str, int] = {}
        self._seq = 0
        self._snapshot_seq = 0
        self._since_snapshot = 0
        self._journal_size = 0

    @property
    def sequence(self) -> int:
        return self._seq

    @property
    def lock(self) -> threading.RLock:
        """The commit-path lock. Hold it to plan and commit as one step."""
        return self._lock

    def get(self, key: str, ns: str = DURABLE, default: Any = None) -> Any:
        with self._lock:
            table = self._durable if ns == DURABLE else self._sessions.get(ns, {})
            return table.get(key, default)

    def scan(self, prefix: str = "", ns: str = DURABLE) -> list[tuple[str, Any]]:
        with self._lock:
            table = self._durable if ns == DURABLE else self._sessions.get(ns, {})
            return sorted((k, v) for k, v in table.items() if k.startswith(prefix))

    def count(self, prefix: str = "", ns: str = DURABLE) -> int:
        with self._lock:
            table = self._durable if ns == DURABLE else self._sessions.get(ns, {})
            return sum(1 for k in table if k.startswith(prefix))

    def session_namespaces(self) -> list[str]:
        with self._lock:
            return sorted(self._sessions)

    def key_sequence(self, key: str) -> int | None:
        """Sequence number of the journal entry that last wrote a durable key."""
        with self._lock:
            return self._key_seq.get(key)

    def durable_bytes(self) -> bytes:
        """Canonical serialization of the durable namespace."""
        with self._lock:
            return codec.encode(self._durable)

    def state_bytes(self) -> bytes:
        with self._lock:
            return codec.encode(self._state_dict())

    def _state_dict(self) -> dict:
        return {
            "as_of": self._seq,
            "durable": self._durable,
            "sessions": self._sessions,
            "key_seq": self._key_seq,
        }

    # ----------------------------------------------------------------- commit
    def commit(self, batches: Sequence[Batch]) -> int:
        """Write every batch durably, then apply them; all or nothing.

        Returns the last assigned sequence number (the current one for an
        empty list).
        """
        with self._lock:
            self._check_writable()
            if not batches:
                return self._seq
            self._validate(batches)
            start = self._seq + 1
            frames: list[tuple[bytes, bytes]] = []
            for i, batch in enumerate(batches):
                body = codec.encode(
                    {
                        "seq": start + i,
                        "op": batch.op.value,
                        "batch": [start, len(batches)],
                        "mutations": [m.to_wire() for m in batch.mutations],
                    }
                )
                header = _FRAME_HEADER.pack(FRAME_MAGIC, len(body), zlib.crc32(body))
                frames.append((header, body))
            offset = self._journal_size
            try:
                for header, body in frames:
                    self._write(header)
                    self._write(body)
                self._sync(self._fh)
            except OSError as exc:
                self._rollback_tail(offset)
                raise StoreUnavailable(f"journal write failed: {exc}") from exc
            if self.faults:
                self.faults.point("after_flush")
            for _, body in frames:
                self._apply_entry(_entry_from_body(body))
            self._since_snapshot += len(frames)
            if self._since_snapshot >= self.snapshot_every:
                self.snapshot()
            return self._seq

    def put(self, key: str, value: Any, ns: str = DURABLE) -> int:
        return self.commit([Batch.of(Op.PUT, [put(ns, key, value)])])

    def synchronize(self, session_id: str, mutations: Sequence[Mutation]) -> int:
        """Durable mutations plus a purge of the session namespace, as one entry."""
        batch = Batch.of(Op.PROMOTE_BATCH, [*mutations, purge(session_ns(session_id))])
        return self.commit([batch])

    def _validate(self, batches: Sequence[Batch]) -> None:
        added: set[tuple[str, str]] = set()
        removed: set[tuple[str, str]] = set()
        purged: list[tuple[str, str]] = []
        for batch in batches:
            for m in batch.mutations:
                if m.kind not in ("put", "update", "delete", "purge"):
                    raise ValueError(f"unknown mutation kind {m.kind!r}")
                if m.ns != DURABLE and not m.ns.startswith(SESSION_PREFIX):
                    raise ValueError(f"unknown namespace {m.ns!r}")
                ident = (m.ns, m.key)
                if m.kind == "put":
                    added.add(ident)
                    removed.discard(ident)
                elif m.kind == "update":
                    gone = ident in removed or any(ns == m.ns and m.key.startswith(p) for ns, p in purged)
                    if ident not in added and (gone or self.get(m.key, m.ns, _MISSING) is _MISSING):
                        raise KeyError(m.key)
                elif m.kind == "delete":
                    added.discard(ident)
                    removed.add(ident)
                else:
                    purged.append((m.ns, m.key))
                    added = {a for a in added if not (a[0] == m.ns and a[1].startswith(m.key))}

    def _apply_entry(self, entry: JournalEntry) -> None:
        for m in entry.payload:
            if m.ns == DURABLE:
                if m.kind in ("put", "update"):
                    self._durable[m.key] = m.value
                    self._key_seq[m.key] = entry.sequence_no
                elif m.kind == "delete":
                    self._durable.pop(m.key, None)
                    self._key_seq.pop(m.key, None)
                else:
                    for key in [k for k in self._durable if k.startswith(m.key)]:
                        del self._durable[key]
                        self._key_seq.pop(key, None)
            else:
                if m.kind == "purge":
                    if not m.key:
                        self._sessions.pop(m.ns, None)
                    else:
                        table = self._sessions.get(m.ns, {})
                        for key in [k for k in table if k.startswith(m.key)]:
                            del table[key]
                    continue
                table = self._sessions.setdefault(m.ns, {})
                if m.kind == "delete":
                    table.pop(m.key, None)
                else:
                    table[m.key] = m.value
        self._seq = entry.sequence_no

    # ------------------------------------------------------------ file access
    def _open_journal(self) -> None:
        self._fh = open(self.journal_path, "ab", buffering=0)
        self._journal_size = self._fh.tell()

    def _check_writable(self) -> None:
        if self._closed or self.read_only:
            raise StoreUnavailable("store is closed or read-only")
        if self._poisoned:
            raise StoreUnavailable("store needs recovery after a failed write")

    def _write(self, data: bytes) -> None:
        if self.faults is not None:
            allowed, exc = self.faults.allow(len(data))
            if allowed:
                self._fh.write(data[:allowed])
                self._journal_size += allowed
            if exc is not None:
                raise exc
            return
        self._fh.write(data)
        self._journal_size += len(data)

    def _sync(self, fh) -> None:
        fh.flush()
        if self.fsync:
            os.fsync(fh.fileno())

    def _rollback_tail(self, offset: int) -> None:
        try:
            os.ftruncate(self._fh.fileno(), offset)
            self._journal_size = offset
        except OSError:
            logger.exception("could not truncate journal after failed write")
            self._poisoned = True

    def _write_atomic(self, path: Path, data: bytes) -> None:
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(data)
            self._sync(fh)
        os.replace(tmp, path)
        if self.fsync:
            fd = os.open(self.data_dir, os.O_RDONLY)
            try:
                os.fsync(fd)
            finally:
                os.close(fd)

    # --------------------------------------------------------------- snapshot
    def snapshot(self) -> int:
        """Persist the full state, then compact the journal. Returns as_of."""
        with self._lock:
            self._check_writable()
            body = codec.encode(self._state_dict())
            header = _SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, codec.FORMAT_VERSION, zlib.crc32(body))
            self._write_atomic(self.snapshot_path, header + body)
            if self.faults:
                self.faults.point("after_snapshot")
            self._write_manifest(self._seq)
            if self.faults:
                self.faults.point("after_manifest")
            self._fh.close()
            self._fh = open(self.journal_path, "wb", buffering=0)
            self._sync(self._fh)
            self._journal_size = 0
            self._snapshot_seq = self._seq
            self._since_snapshot = 0
            return self._seq

    def _write_manifest(self, snapshot_seq: int) -> None:
        text = f"format_version {codec.FORMAT_VERSION}\nsnapshot_sequence {snapshot_seq}\n"
        self._write_atomic(self.manifest_path, text.encode("ascii"))

    def _read_manifest(self) -> dict[str, int]:
        if not self.manifest_path.exists():
            return {}
        result = {}
        for line in self.manifest_path.read_text(encoding="ascii").splitlines():
            if line.strip():
                key, _, value = line.partition(" ")
                try:
                    result[key] = int(value)
                except ValueError as exc:
                    raise CorruptJournal(f"bad MANIFEST line: {line!r}") from exc
        return result

    def _load_snapshot(self) -> None:
        if not self.snapshot_path.exists():
            return
        raw = self.snapshot_path.read_bytes()
        if len(raw) < _SNAPSHOT_HEADER.size:
            raise CorruptJournal("snapshot header truncated")
        magic, version, crc = _SNAPSHOT_HEADER.unpack_from(raw)
        body = raw[_SNAPSHOT_HEADER.size :]
        if magic != SNAPSHOT_MAGIC or version != codec.FORMAT_VERSION or zlib.crc32(body) != crc:
            raise CorruptJournal("snapshot failed integrity check")
        state = codec.decode(body)
        self._durable = state["durable"]
        self._sessions = state["sessions"]
        self._key_seq = state["key_seq"]
        self._seq = self._snapshot_seq = state["as_of"]

    # --------------------------------------------------------------- recovery
    def recover(self) -> RecoveryReport:
        """Rebuild state from snapshot plus the valid journal suffix."""
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None
            self._reset_state()
            manifest = self._read_manifest()
            version = manifest.get("format_version", codec.FORMAT_VERSION)
            if version != codec.FORMAT_VERSION:
                raise CorruptJournal(f"unsupported store format version {version}")
            self._load_snapshot()
            report = RecoveryReport(snapshot_sequence=self._snapshot_seq)

            data = self.journal_path.read_bytes() if self.journal_path.exists() else b""
            entries, valid_end, torn = scan_journal(data)
            report.discarded = torn

            # group into batches; an incomplete trailing batch is rolled back
            applied_end = 0
            pending: list[tuple[JournalEntry, int]] = []
            expected = None
            for entry, end in entries:
                if expected is not None and entry.sequence_no != expected:
                    raise CorruptJournal(f"sequence gap at entry {entry.sequence_no}")
                expected = entry.sequence_no + 1
                pending.append((entry, end))
                first = pending[0][0]
                if entry.sequence_no == first.batch_start + first.batch_size - 1:
                    for e, e_end in pending:
                        if e.sequence_no <= self._seq:
                            continue
                        if e.sequence_no != self._seq + 1:
                            raise CorruptJournal(
                                f"journal resumes at {e.sequence_no}, state is at {self._seq}"
                            )
                        self._apply_entry(e)
                        report.replayed += 1
                    applied_end = end
                    pending = []
                elif entry.batch_start != first.batch_start:
                    raise CorruptJournal(f"interleaved batch at entry {entry.sequence_no}")
            report.rolled_back = len(pending)
            self._since_snapshot = report.replayed
            report.last_sequence = self._seq
            report.truncated_bytes = len(data) - applied_end

            if not self.read_only:
                if report.truncated_bytes:
                    logger.warning(
                        "discarding %d trailing journal bytes (%d torn, %d rolled back)",
                        report.truncated_bytes, report.discarded, report.rolled_back,
                    )
                    with open(self.journal_path, "r+b") as fh:
                        fh.truncate(applied_end)
                        self._sync(fh)
                if manifest.get("snapshot_sequence") != self._snapshot_seq:
                    self._write_manifest(self._snapshot_seq)
                self._journal_size = applied_end
            self._poisoned = False
            self._closed = False
            return report

    def reopen(self) -> RecoveryReport:
        """Re-run recovery on the same directory (e.g. after a failed write)."""
        with self._lock:
            self.recovery = self.recover()
            if not self.read_only:
                self._open_journal()
            return self.recovery

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None
            self._closed = True

    def __enter__(self) -> "ContextStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


_MISSING = object()


def _entry_from_body(body: bytes) -> JournalEntry:
    raw = codec.decode(body)
    start, size = raw["batch"]
    return JournalEntry(
        sequence_no=raw["seq"],
        operation=Op(raw["op"]),
        payload=tuple(Mutation.from_wire(m) for m in raw["mutations"]),
        checksum=zlib.crc32(body),
        batch_start=start,
        batch_size=size,
    )


def scan_journal(data: bytes) -> tuple[list[tuple[JournalEntry, int]], int, int]:
    """Parse frames. Returns (entries with end offsets, valid end, torn count).

    A damaged frame is tolerated only when it is the last thing in the file;
    damage followed by more bytes raises CorruptJournal.
    """
    entries: list[tuple[JournalEntry, int]] = []
    pos, n = 0, len(data)
    while pos < n:
        if n - pos < _FRAME_HEADER.size:
            return entries, pos, 1
        magic, length, crc = _FRAME_HEADER.unpack_from(data, pos)
        if magic != FRAME_MAGIC:
            raise CorruptJournal(f"bad frame magic at offset {pos}")
        end = pos + _FRAME_HEADER.size + length
        if end > n:
            return entries, pos, 1
        body = data[pos + _FRAME_HEADER.size : end]
        try:
            if zlib.crc32(body) != crc:
                raise CorruptJournal(f"checksum mismatch at offset {pos}")
            entry = _entry_from_body(body)
        except (CorruptJournal, codec.CodecError, KeyError, ValueError, TypeError):
            if end == n:
                return entries, pos, 1
            raise CorruptJournal(f"damaged journal entry at offset {pos}") from None
        entries.append((entry, end))
        pos = end
    return entries, pos, 0
