"""Long-term memory: the persistent per-user record repository.

Owners are addressed only by a salted digest of their user id; the raw id
never reaches the store. Records live under ``ltm/<owner>/<record_id>`` in
the durable namespace, with ``ltm-index/<record_id>`` pointing back to the
owner so updates can be addressed by record id alone.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import os
import secrets
from dataclasses import dataclass, field
from pathlib import Path
from . import store as st
from .clock import Clock, wall_clock
from .errors import InvalidUser, QuotaExceeded, UnknownRecord
from .relevance import MemoryCandidate, VerdictKind
from .text import content_tokens, jaccard, token_set

RECORD_PREFIX = "ltm/"
INDEX_PREFIX = "ltm-index/"
RECORD_COUNTER = "meta/next_record"


def pseudonymize(user: str, salt: bytes) -> str:
    """Keyed SHA-256 digest of a user id (64 hex chars)."""
    if not user:
        raise InvalidUser("user id must be nonempty")
    return hmac.new(salt, user.encode("utf-8"), hashlib.sha256).hexdigest()


def load_or_create_salt(path: str | os.PathLike) -> bytes:
    path = Path(path)
    if path.exists():
        return path.read_bytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    salt = secrets.token_bytes(32)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_EXCL, 0o600)
    with os.fdopen(fd, "wb") as fh:
        fh.write(salt)
    return salt


class RecordKind(str, enum.Enum):
    PREFERENCE = "Preference"
    RECURRING_EVENT = "RecurringEvent"
    FACT = "Fact"
    HISTORY_SUMMARY = "HistorySummary"


def infer_kind(candidate: MemoryCandidate) -> RecordKind:
    if candidate.features.preference_marker >= 0.5:
        return RecordKind.PREFERENCE
    if candidate.features.recurrence_marker >= 0.5:
        return RecordKind.RECURRING_EVENT
    return RecordKind.FACT


@dataclass(frozen=True)
class LtmRecord:
    record_id: str
    owner: str
    content: str
    kind: RecordKind
    created_at: float
    updated_at: float
    score_at_promotion: float
    update_count: int = 0
    provenance: tuple[tuple[str, tuple[int, ...]], ...] = ()
    # prior contents, oldest first: {"content", "replaced_at", "update"}
    history: tuple[dict, ...] = field(default=(), compare=False, repr=False)

    @property
    def tokens(self) -> frozenset[str]:
        return token_set(self.content)

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "owner": self.owner,
            "content": self.content,
            "kind": self.kind.value,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "score_at_promotion": self.score_at_promotion,
            "update_count": self.update_count,
            "provenance": [[s, list(t)] for s, t in self.provenance],
            "history": [dict(h) for h in self.history],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "LtmRecord":
        return cls(
            record_id=raw["record_id"],
            owner=raw["owner"],
            content=raw["content"],
            kind=RecordKind(raw["kind"]),
            created_at=raw["created_at"],
            updated_at=raw["updated_at"],
            score_at_promotion=raw["score_at_promotion"],
            update_count=raw["update_count"],
            provenance=tuple((s, tuple(t)) for s, t in raw["provenance"]),
            history=tuple(raw.get("history", ())),
        )


def record_key(owner: str, record_id: str) -> str:
    return f"{RECORD_PREFIX}{owner}/{record_id}"


def merge_content(original: str, addition: str) -> str:
    """Original text plus the addition's novel content tokens, in order."""
    known = set(content_tokens(original))
    novel = []
    for tok in content_tokens(addition):
        if tok not in known:
            known.add(tok)
            novel.append(tok)
    return " ".join([original, *novel]) if novel else original


class InteractionContext:
    """Per-user record repository over the context store.

    ``plan_*`` methods build records and store mutations without committing
    so the promotion pipeline can fold many of them into one atomic batch;
    ``put_record`` and ``apply_update`` are the self-committing forms.
    """

    def __init__(
        self,
        store: st.ContextStore,
        salt: bytes,
        *,
        max_records_per_user: int = 10_000,
        clock: Clock = wall_clock,
    ):
        self.store = store
        self._salt = salt
        self.max_records_per_user = max_records_per_user
        self._clock = clock

    def key_for(self, user: str) -> str:
        return pseudonymize(user, self._salt)

    # ------------------------------------------------------------------ reads
    def records(self, owner: str) -> list[LtmRecord]:
        return [LtmRecord.from_dict(v) for _, v in self.store.scan(f"{RECORD_PREFIX}{owner}/")]

    def count(self, owner: str) -> int:
        return self.store.count(f"{RECORD_PREFIX}{owner}/")

    def get(self, record_id: str) -> LtmRecord:
        owner = self.store.get(INDEX_PREFIX + record_id)
        if owner is None:
            raise UnknownRecord(record_id)
        raw = self.store.get(record_key(owner, record_id))
        if raw is None:
            raise UnknownRecord(record_id)
        return LtmRecord.from_dict(raw)

    def query_records(self, owner: str, query: str, limit: int = 10) -> list[LtmRecord]:
        """Records sharing at least one token with the query, best first.

        Order: Jaccard similarity descending, then updated_at descending,
        then record_id ascending.
        """
        if limit < 1:
            raise ValueError("limit must be positive")
        return [rec for rec, _ in self.ranked(owner, query)[:limit]]

    def ranked(self, owner: str, query: str) -> list[tuple[LtmRecord, float]]:
        q = token_set(query)
        scored = [(rec, jaccard(q, rec.tokens)) for rec in self.records(owner)]
        scored = [(rec, sim) for rec, sim in scored if sim > 0]
        scored.sort(key=lambda pair: (-pair[1], -pair[0].updated_at, pair[0].record_id))
        return scored

    # --------------------------------------------------------------- planning
    def allocate_ids(self, n: int) -> tuple[list[str], list[st.Mutation]]:
        """Reserve ``n`` record ids; caller must commit the returned mutation
        while holding ``store.lock``."""
        if n == 0:
            return [], []
        start = self.store.get(RECORD_COUNTER, default=1)
        ids = [f"r{start + i:08d}" for i in range(n)]
        return ids, [st.put(st.DURABLE, RECORD_COUNTER, start + n)]

    def plan_put(
        self, owner: str, candidate: MemoryCandidate, record_id: str, now: float
    ) -> tuple[LtmRecord, list[st.Mutation]]:
        if candidate.verdict is not None and candidate.verdict.kind is not VerdictKind.NEW:
            raise ValueError(f"candidate {candidate.candidate_id} is not a new record")
        record = LtmRecord(
            record_id=record_id,
            owner=owner,
            content=candidate.content,
            kind=infer_kind(candidate),
            created_at=now,
            updated_at=now,
            score_at_promotion=candidate.score if candidate.score is not None else 0.0,
            update_count=0,
            provenance=((candidate.session, tuple(candidate.source_turns)),),
        )
        return record, [
            st.put(st.DURABLE, record_key(owner, record_id), record.to_dict()),
            st.put(st.DURABLE, INDEX_PREFIX + record_id, owner),
        ]

    def plan_update(
        self, record: LtmRecord, candidate: MemoryCandidate, now: float
    ) -> tuple[LtmRecord, list[st.Mutation]]:
        merged = merge_content(record.content, candidate.content)
        updated = LtmRecord(
            record_id=record.record_id,
            owner=record.owner,
            content=merged,
            kind=record.kind,
            created_at=record.created_at,
            updated_at=max(now, record.updated_at),
            score_at_promotion=record.score_at_promotion,
            update_count=record.update_count + 1,
            provenance=(*record.provenance, (candidate.session, tuple(candidate.source_turns))),
            history=(
                *record.history,
                {"content": record.content, "replaced_at": now, "update": record.update_count + 1},
            ),
        )
        return updated, [st.update(st.DURABLE, record_key(record.owner, record.record_id), updated.to_dict())]

    def check_quota(self, owner: str, adding: int) -> None:
        if adding and self.count(owner) + adding > self.max_records_per_user:
            raise QuotaExceeded(
                f"owner would hold {self.count(owner) + adding} records (cap {self.max_records_per_user})"
            )

    # ---------------------------------------------------------------- commits
    def put_record(self, owner: str, candidate: MemoryCandidate) -> LtmRecord:
        with self.store.lock:
            self.check_quota(owner, 1)
            ids, counter = self.allocate_ids(1)
            record, muts = self.plan_put(owner, candidate, ids[0], self._clock())
            self.store.commit([st.Batch.of(st.Op.PUT, [*muts, *counter])])
            return record

    def apply_update(self, target: str, candidate: MemoryCandidate) -> LtmRecord:
        with self.store.lock:
            record = self.get(target)
            updated, muts = self.plan_update(record, candidate, self._clock())
            self.store.commit([st.Batch.of(st.Op.UPDATE, muts)])
            return updated

    def delete_user(self, owner: str) -> int:
        """Purge every record of an owner. Returns how many were removed."""
        with self.store.lock:
            ids = [rec.record_id for rec in self.records(owner)]
            if not ids:
                return 0
            muts = [st.purge(st.DURABLE, f"{RECORD_PREFIX}{owner}/")]
            muts += [st.delete(st.DURABLE, INDEX_PREFIX + rid) for rid in ids]
            self.store.commit([st.Batch.of(st.Op.PURGE, muts)])
            return len(ids)

