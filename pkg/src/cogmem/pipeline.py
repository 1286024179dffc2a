"""End-of-session decision flow: threshold gate, persistence gate,
redundancy gate, then one atomic commit of everything that survived."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Sequence

from . import store as st
from .clock import Clock, wall_clock
from .interaction import RECORD_COUNTER, InteractionContext, LtmRecord
from .relevance import (
    MemoryCandidate,
    PersistenceClass,
    RedundancyVerdict,
    RelevanceEngine,
    VerdictKind,
    WeightConfig,
    check_redundancy,
    classify_persistence,
    passes_threshold,
    score_candidate,
)

AUDIT_PREFIX = "audit/"
AUDIT_COUNTER = "meta/next_trace"


class Outcome(str, enum.Enum):
    PROMOTED = "Promoted"
    UPDATED = "Updated"
    DISCARDED_BELOW_THRESHOLD = "DiscardedBelowThreshold"
    DISCARDED_EPHEMERAL = "DiscardedEphemeral"
    DISCARDED_REDUNDANT = "DiscardedRedundant"

    @property
    def accepted(self) -> bool:
        return self in (Outcome.PROMOTED, Outcome.UPDATED)


@dataclass(frozen=True)
class DecisionTrace:
    candidate_id: str
    score: float
    passed_threshold: bool
    persistence: PersistenceClass
    verdict: RedundancyVerdict | None  # None: redundancy gate skipped
    outcome: Outcome
    decided_at: float
    session: str = ""
    owner: str = ""
    record_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "candidate_id": self.candidate_id,
            "score": self.score,
            "passed_threshold": self.passed_threshold,
            "class": self.persistence.value,
            "verdict": self.verdict.to_dict() if self.verdict else "skipped",
            "outcome": self.outcome.value,
            "decided_at": self.decided_at,
            "session": self.session,
            "owner": self.owner,
            "record_id": self.record_id,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "DecisionTrace":
        verdict = raw["verdict"]
        return cls(
            candidate_id=raw["candidate_id"],
            score=raw["score"],
            passed_threshold=raw["passed_threshold"],
            persistence=PersistenceClass(raw["class"]),
            verdict=None if verdict == "skipped" else RedundancyVerdict.from_dict(verdict),
            outcome=Outcome(raw["outcome"]),
            decided_at=raw["decided_at"],
            session=raw.get("session", ""),
            owner=raw.get("owner", ""),
            record_id=raw.get("record_id"),
        )


@dataclass
class ClosureReport:
    """Outcome of one session close. ``promoted`` and ``updated`` hold one
    record id per accepted candidate, so their lengths plus ``discarded``
    equal the candidate count."""

    session: str
    promoted: list[str] = field(default_factory=list)
    updated: list[str] = field(default_factory=list)
    discarded: int = 0
    traces: list[DecisionTrace] = field(default_factory=list)
    sequence_no: int | None = None

    def to_dict(self) -> dict:
        return {
            "session": self.session,
            "promoted": list(self.promoted),
            "updated": list(self.updated),
            "discarded": self.discarded,
            "traces": [t.to_dict() for t in self.traces],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ClosureReport":
        return cls(
            session=raw["session"],
            promoted=list(raw["promoted"]),
            updated=list(raw["updated"]),
            discarded=raw["discarded"],
            traces=[DecisionTrace.from_dict(t) for t in raw["traces"]],
        )


def evaluate(
    candidate: MemoryCandidate,
    weights: WeightConfig,
    existing: Sequence[LtmRecord],
    *,
    dup_threshold: float = 0.9,
    update_threshold: float = 0.6,
    decided_at: float = 0.0,
) -> DecisionTrace:
    """Run one candidate through the gates, recording score, class and verdict
    on it. The redundancy gate is skipped once an earlier gate discards."""
    candidate.score = score_candidate(candidate, weights)
    candidate.persistence = classify_persistence(candidate)
    passed = passes_threshold(candidate.score, weights)
    verdict = None
    if not passed:
        outcome = Outcome.DISCARDED_BELOW_THRESHOLD
    elif candidate.persistence is not PersistenceClass.DURABLE:
        outcome = Outcome.DISCARDED_EPHEMERAL
    else:
        verdict = check_redundancy(candidate, existing, dup_threshold, update_threshold)
        candidate.verdict = verdict
        outcome = {
            VerdictKind.REDUNDANT: Outcome.DISCARDED_REDUNDANT,
            VerdictKind.UPDATE: Outcome.UPDATED,
            VerdictKind.NEW: Outcome.PROMOTED,
        }[verdict.kind]
    return DecisionTrace(
        candidate_id=candidate.candidate_id,
        score=candidate.score,
        passed_threshold=passed,
        persistence=candidate.persistence,
        verdict=verdict,
        outcome=outcome,
        decided_at=decided_at,
        session=candidate.session,
        record_id=verdict.target if verdict and verdict.kind is not VerdictKind.NEW else None,
    )


class PromotionPipeline:
    def __init__(
        self,
        store: st.ContextStore,
        interaction: InteractionContext,
        relevance: RelevanceEngine,
        weights: WeightConfig,
        *,
        max_traces: int = 100_000,
        clock: Clock = wall_clock,
    ):
        self.store = store
        self.interaction = interaction
        self.relevance = relevance
        self.weights = weights
        self.max_traces = max_traces
        self._clock = clock

    def decide(
        self,
        owner: str,
        candidates: Sequence[MemoryCandidate],
        existing: Sequence[LtmRecord],
        decided_at: float,
        first_record: int = 1,
    ) -> tuple[list[DecisionTrace], list[st.Mutation], ClosureReport]:
        """Gate every candidate in order against LTM as staged so far.

        Each accepted candidate is staged before the next one is judged, so
        two candidates of one session cannot both add the same knowledge.
        New records are numbered from ``first_record`` in candidate order.
        """
        staged = {r.record_id: r for r in existing}
        mutations: list[st.Mutation] = []
        report = ClosureReport("")
        traces = []
        for cand in candidates:
            trace = evaluate(
                cand,
                self.weights,
                list(staged.values()),
                dup_threshold=self.relevance.dup_threshold,
                update_threshold=self.relevance.update_threshold,
                decided_at=decided_at,
            )
            if trace.outcome is Outcome.PROMOTED:
                rid = f"r{first_record + len(report.promoted):08d}"
                record, muts = self.interaction.plan_put(owner, cand, rid, decided_at)
                trace = _replace(trace, record_id=rid)
                report.promoted.append(rid)
            elif trace.outcome is Outcome.UPDATED:
                record, muts = self.interaction.plan_update(staged[trace.record_id], cand, decided_at)
                report.updated.append(record.record_id)
            else:
                report.discarded += 1
                traces.append(_replace(trace, owner=owner))
                continue
            staged[record.record_id] = record
            mutations += muts
            traces.append(_replace(trace, owner=owner))
        report.traces = traces
        return traces, mutations, report

    def run_end_of_session(
        self, session: str, owner: str, decided_at: float | None = None
    ) -> ClosureReport:
        """Judge all pending candidates and commit the outcome atomically.

        On StoreUnavailable or QuotaExceeded nothing is applied and the
        candidates stay pending; calling again with the same ``decided_at``
        yields the same traces.
        """
        if decided_at is None:
            decided_at = self._clock()
        with self.store.lock:
            candidates = sorted(self.relevance.finalize(session), key=lambda c: c.candidate_id)
            existing = self.interaction.records(owner)
            first = self.store.get(RECORD_COUNTER, default=1)
            traces, mutations, report = self.decide(owner, candidates, existing, decided_at, first)
            report.session = session
            self.interaction.check_quota(owner, len(report.promoted))
            _, counter = self.interaction.allocate_ids(len(report.promoted))
            mutations += counter
            mutations += self._audit_mutations(traces)
            report.sequence_no = self.store.synchronize(session, mutations)
        self.relevance.drop(session)
        return report

    def _audit_mutations(self, traces: Sequence[DecisionTrace]) -> list[st.Mutation]:
        if not traces:
            return []
        start = self.store.get(AUDIT_COUNTER, default=1)
        muts = [
            st.put(st.DURABLE, f"{AUDIT_PREFIX}{start + i:012d}", t.to_dict()) for i, t in enumerate(traces)
        ]
        muts.append(st.put(st.DURABLE, AUDIT_COUNTER, start + len(traces)))
        overflow = self.store.count(AUDIT_PREFIX) + len(traces) - self.max_traces
        if overflow > 0:
            oldest = [k for k, _ in self.store.scan(AUDIT_PREFIX)][:overflow]
            muts += [st.delete(st.DURABLE, k) for k in oldest]
            # a batch larger than the cap also drops its own oldest traces
            extra = overflow - len(oldest)
            muts += [st.delete(st.DURABLE, f"{AUDIT_PREFIX}{start + i:012d}") for i in range(extra)]
        return muts

    def traces(self, owner: str | None = None, limit: int | None = None) -> list[DecisionTrace]:
        return read_traces(self.store, owner, limit)


def read_traces(store: st.ContextStore, owner: str | None = None, limit: int | None = None) -> list[DecisionTrace]:
    """Stored audit traces, oldest first, optionally for one owner."""
    found = [DecisionTrace.from_dict(v) for _, v in store.scan(AUDIT_PREFIX)]
    if owner is not None:
        found = [t for t in found if t.owner == owner]
    return found[-limit:] if limit else found


def _replace(trace: DecisionTrace, **changes) -> DecisionTrace:
    return dataclasses.replace(trace, **changes)
