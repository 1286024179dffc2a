"""Wiring: builds every component from a Config in one of two modes.

Cognitive mode is the full engine. Traditional mode is the baseline that
keeps nothing between sessions: the store is opened read-only, no
candidates are extracted, nothing is promoted, the router sees neither
long-term memory nor the session window, and knowledge comes from the
static layer alone.
"""

from __future__ import annotations

import enum
import secrets
from dataclasses import dataclass, field
from pathlib import Path

from . import pipeline as pl
from .clock import Clock, wall_clock
from .config import Config
from .conversation import ConversationContext, Speaker, Turn
from .gateway import AuthToken, CredentialTable, Exchange, SessionGateway, SessionHandle, SessionJournal
from .interaction import InteractionContext, LtmRecord, load_or_create_salt, record_key
from .knowledge import KnowledgeAnswer, KnowledgeResolver, StaticKnowledge
from .relevance import Lexicons, RelevanceEngine, WeightConfig
from .router import CognitiveRouter, Evaluator, default_rules, load_rules
from .store import ContextStore, FaultInjector

SALT_FILE = "salt.key"


class EngineMode(str, enum.Enum):
    COGNITIVE = "Cognitive"
    TRADITIONAL = "Traditional"

    @classmethod
    def parse(cls, value: "str | EngineMode") -> "EngineMode":
        if isinstance(value, cls):
            return value
        for mode in cls:
            if mode.value.lower() == str(value).lower():
                return mode
        raise ValueError(f"unknown engine mode {value!r}")


@dataclass
class MemoryDump:
    user: str
    owner: str
    records: list[LtmRecord] = field(default_factory=list)
    traces: list[pl.DecisionTrace] = field(default_factory=list)
    journal_refs: dict[str, int] = field(default_factory=dict)  # record_id -> last journal seq

    def to_dict(self) -> dict:
        return {
            "user": self.user,
            "owner": self.owner,
            "records": [r.to_dict() for r in self.records],
            "traces": [t.to_dict() for t in self.traces],
            "journal_refs": dict(self.journal_refs),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "MemoryDump":
        return cls(
            raw["user"],
            raw["owner"],
            [LtmRecord.from_dict(r) for r in raw["records"]],
            [pl.DecisionTrace.from_dict(t) for t in raw["traces"]],
            dict(raw["journal_refs"]),
        )

    def render(self) -> str:
        lines = [f"user {self.user} (key {self.owner[:16]}...)", f"records: {len(self.records)}"]
        for rec in self.records:
            lines.append(f"  {rec.record_id} [{rec.kind.value}] {rec.content!r}")
            lines.append(
                f"    score {rec.score_at_promotion:.3f}  updates {rec.update_count}"
                f"  journal entry #{self.journal_refs.get(rec.record_id, '?')}"
            )
            for session, turns in rec.provenance:
                lines.append(f"    from {session} turns {list(turns)}")
            for old in rec.history:
                lines.append(f"    update {old['update']} replaced {old['content']!r}")
        lines.append(f"recent traces: {len(self.traces)}")
        for t in self.traces:
            verdict = t.verdict.kind.value if t.verdict else "skipped"
            lines.append(
                f"  {t.candidate_id} score {t.score:.3f} class {t.persistence.value}"
                f" verdict {verdict} -> {t.outcome.value}"
            )
        return "\n".join(lines)


class Engine:
    def __init__(
        self,
        config: Config | None = None,
        mode: EngineMode | str = EngineMode.COGNITIVE,
        *,
        clock: Clock | None = None,
        faults: FaultInjector | None = None,
    ):
        cfg = self.config = config or Config()
        cfg.validate()
        self.mode = EngineMode.parse(mode)
        self.clock = clock or wall_clock
        cognitive = self.mode is EngineMode.COGNITIVE
        data_dir = Path(cfg.store.data_dir)

        self.store = ContextStore(
            data_dir,
            snapshot_every=cfg.store.snapshot_every_n_entries,
            fsync=cfg.store.fsync,
            faults=faults,
            read_only=not cognitive,
        )
        salt_path = Path(cfg.ltm.salt_file) if cfg.ltm.salt_file else data_dir / SALT_FILE
        if cognitive:
            salt = load_or_create_salt(salt_path)
        else:
            salt = salt_path.read_bytes() if salt_path.exists() else secrets.token_bytes(32)

        self.lexicons = Lexicons.load(cfg.relevance.lexicons_file) if cfg.relevance.lexicons_file else Lexicons()
        self.weights = WeightConfig.from_raw(cfg.relevance.weights, cfg.relevance.threshold)
        self.conversation = ConversationContext(cfg.stm.window_capacity, self.clock)
        self.interaction = InteractionContext(
            self.store, salt, max_records_per_user=cfg.ltm.max_records_per_user, clock=self.clock
        )
        self.static = (
            StaticKnowledge.from_file(cfg.knowledge.facts_file) if cfg.knowledge.facts_file else StaticKnowledge()
        )
        self.resolver = KnowledgeResolver(
            self.static,
            self.interaction if cognitive else None,
            dynamic_floor=cfg.knowledge.dynamic_floor,
            dup_threshold=cfg.relevance.dup_threshold,
        )
        self.router = CognitiveRouter(
            self.resolver,
            self.interaction if cognitive else None,
            self.conversation,
            rules=load_rules(cfg.router.rules_file) if cfg.router.rules_file else default_rules(),
            lexicons=self.lexicons,
            evaluator=Evaluator(cfg.router.max_abs_value, cfg.router.max_exponent),
            dynamic_floor=cfg.knowledge.dynamic_floor,
        )
        self.relevance = self.pipeline = self.journal = None
        if cognitive:
            self.relevance = RelevanceEngine(
                self.lexicons,
                recency_decay=cfg.relevance.recency_decay,
                dup_threshold=cfg.relevance.dup_threshold,
                update_threshold=cfg.relevance.update_threshold,
            )
            self.pipeline = pl.PromotionPipeline(
                self.store,
                self.interaction,
                self.relevance,
                self.weights,
                max_traces=cfg.audit.max_traces,
                clock=self.clock,
            )
            self.journal = SessionJournal(self.store)
            self.conversation.subscribe(self.journal.record_turn)
            self.conversation.subscribe(self.relevance.observe_turn)
        credentials = (
            CredentialTable.load(cfg.auth.credentials_file) if cfg.auth.credentials_file else CredentialTable()
        )
        self.gateway = SessionGateway(
            self.conversation,
            self.interaction.key_for,
            credentials=credentials,
            token_ttl=cfg.auth.token_ttl_secs,
            idle_timeout=cfg.session.idle_timeout_secs,
            clock=self.clock,
            relevance=self.relevance,
            pipeline=self.pipeline,
            journal=self.journal,
            router=self.router,
        )
        self.recovered: list[pl.ClosureReport] = self._close_orphans() if cognitive else []

    def _close_orphans(self) -> list[pl.ClosureReport]:
        """Sessions a previous process left open are rebuilt from the journal
        and closed at once; their clients' tokens died with that process."""
        reports = []
        for session, handle, turns in self.journal.orphans():
            self.gateway.adopt(session, handle["owner"], handle["opened_at"], turns)
            reports.append(self.gateway.close_session(session))
        return reports

    @property
    def cognitive(self) -> bool:
        return self.mode is EngineMode.COGNITIVE

    # --------------------------------------------------------- library surface
    def authenticate(self, user: str, credential: str) -> AuthToken:
        return self.gateway.authenticate(user, credential)

    def issue_token(self, user: str) -> AuthToken:
        return self.gateway.issue_token(user)

    def open_session(self, token: AuthToken | str) -> SessionHandle:
        return self.gateway.open_session(token)

    def append_turn(self, session: str, speaker: Speaker | str, text: str) -> Turn:
        return self.gateway.append_turn(session, speaker, text)

    def converse(self, session: str, text: str) -> Exchange:
        return self.gateway.converse(session, text)

    def close_session(self, session: str) -> pl.ClosureReport:
        return self.gateway.close_session(session)

    def query_memory(self, token: AuthToken | str, query: str, limit: int = 10) -> list[LtmRecord]:
        auth = self.gateway.validate_token(token)
        if not self.cognitive:
            return []
        return self.interaction.query_records(self.interaction.key_for(auth.user), query, limit)

    def resolve_knowledge(self, token: AuthToken | str, query: str) -> KnowledgeAnswer:
        auth = self.gateway.validate_token(token)
        owner = self.interaction.key_for(auth.user) if self.cognitive else None
        return self.resolver.resolve(owner, query)

    def inspect(self, user: str, trace_limit: int = 20) -> MemoryDump:
        owner = self.interaction.key_for(user)
        records = self.interaction.records(owner)
        return MemoryDump(
            user=user,
            owner=owner,
            records=records,
            traces=pl.read_traces(self.store, owner, trace_limit),
            journal_refs={r.record_id: self.store.key_sequence(record_key(owner, r.record_id)) for r in records},
        )

    def close(self) -> None:
        self.store.close()

    def __enter__(self) -> "Engine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
