"""Front door: credentials, tokens and the Open to Closed session lifecycle.

Every gateway operation reads the clock exactly once and uses that instant
throughout, so a run driven by a step clock is reproducible call for call.
Calls on one session are serialized by a per-session lock; calls on
different sessions proceed in parallel and meet only at the store's commit
path.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import secrets
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import store as st
from .clock import Clock, wall_clock
from .conversation import ConversationContext, Speaker, Turn
from .errors import (
    AlreadyClosed,
    AuthFailed,
    CogMemError,
    ConfigError,
    InvalidUser,
    TokenExpired,
    TokenInvalid,
    UnknownSession,
)
from .pipeline import ClosureReport, PromotionPipeline
from .relevance import RelevanceEngine, read_tab_file
from .router import CognitiveRouter, RoutedResponse

MAX_USER_LEN = 128
SESSION_COUNTER = "meta/next_session"


def check_user(user: str) -> str:
    if not isinstance(user, str) or not user.strip():
        raise InvalidUser("user id must be nonempty")
    if len(user) > MAX_USER_LEN:
        raise InvalidUser(f"user id longer than {MAX_USER_LEN} characters")
    return user


class CredentialTable:
    """Static ``user<TAB>secret`` table. A secret written as
    ``sha256:<hex>`` is compared by digest, anything else literally."""

    def __init__(self, entries: dict[str, str] | None = None):
        self._digests = {user: self._digest_of(secret) for user, secret in (entries or {}).items()}

    @staticmethod
    def _digest_of(secret: str) -> bytes:
        if secret.startswith("sha256:"):
            try:
                return bytes.fromhex(secret[len("sha256:"):])
            except ValueError as exc:
                raise ConfigError(f"bad sha256 credential: {exc}") from exc
        return hashlib.sha256(secret.encode("utf-8")).digest()

    @classmethod
    def load(cls, path: str | Path) -> "CredentialTable":
        return cls({user: secret for _, user, secret in read_tab_file(path)})

    def __contains__(self, user: str) -> bool:
        return user in self._digests

    def check(self, user: str, credential: str) -> bool:
        expected = self._digests.get(user)
        given = hashlib.sha256(str(credential).encode("utf-8")).digest()
        # compare even for unknown users so timing does not reveal membership
        return hmac.compare_digest(expected or b"\0" * 32, given) and expected is not None


@dataclass(frozen=True)
class AuthToken:
    token: str
    user: str
    issued_at: float
    expires_at: float

    def to_dict(self) -> dict:
        return {"token": self.token, "user": self.user, "issued_at": self.issued_at, "expires_at": self.expires_at}

    @classmethod
    def from_dict(cls, raw: dict) -> "AuthToken":
        return cls(raw["token"], raw["user"], raw["issued_at"], raw["expires_at"])


class SessionStatus(str, enum.Enum):
    OPEN = "Open"
    CLOSED = "Closed"


@dataclass(frozen=True)
class SessionHandle:
    session: str
    user: str | None  # None for a session recovered from the journal
    opened_at: float
    status: SessionStatus

    def to_dict(self) -> dict:
        return {"session": self.session, "user": self.user, "opened_at": self.opened_at, "status": self.status.value}

    @classmethod
    def from_dict(cls, raw: dict) -> "SessionHandle":
        return cls(raw["session"], raw["user"], raw["opened_at"], SessionStatus(raw["status"]))


@dataclass(frozen=True)
class Exchange:
    """One conversational round: the user's turn, the routed answer and the
    system turn recording it."""

    user_turn: Turn
    response: RoutedResponse
    system_turn: Turn

    def to_dict(self) -> dict:
        return {
            "user_turn": self.user_turn.to_dict(),
            "response": self.response.to_dict(),
            "system_turn": self.system_turn.to_dict(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Exchange":
        return cls(
            Turn.from_dict(raw["user_turn"]),
            RoutedResponse.from_dict(raw["response"]),
            Turn.from_dict(raw["system_turn"]),
        )


class SessionJournal:
    """Session-namespace persistence: the handle and every turn of an open
    session, so a restarted process can finish what a dead one left open."""

    def __init__(self, store: st.ContextStore):
        self.store = store

    def open(self, owner: str, opened_at: float) -> str:
        with self.store.lock:
            n = self.store.get(SESSION_COUNTER, default=1)
            session = f"s{n:06d}"
            self.store.commit([
                st.Batch.of(st.Op.PUT, [
                    st.put(st.DURABLE, SESSION_COUNTER, n + 1),
                    st.put(st.session_ns(session), "handle", {"owner": owner, "opened_at": opened_at}),
                ])
            ])
            return session

    def record_turn(self, session: str, turn: Turn) -> None:
        self.store.put(f"turn/{turn.turn_id:06d}", turn.to_dict(), ns=st.session_ns(session))

    def orphans(self) -> list[tuple[str, dict, list[Turn]]]:
        found = []
        for ns in self.store.session_namespaces():
            session = ns[len(st.session_ns("")):]
            handle = self.store.get("handle", ns)
            if handle is None:
                continue
            turns = [Turn.from_dict(v) for _, v in self.store.scan("turn/", ns)]
            found.append((session, handle, turns))
        return found


@dataclass
class _Live:
    handle: SessionHandle
    owner: str
    last_active: float
    lock: threading.RLock
    closing_at: float | None = None
    report: ClosureReport | None = None


class SessionGateway:
    """Authenticates users and drives sessions through their lifecycle.

    With ``pipeline`` set (cognitive mode) closing a session runs the
    promotion sweep before the conversation context is reset; without it
    the context is simply discarded.
    """

    def __init__(
        self,
        conversation: ConversationContext,
        owner_key: Callable[[str], str],
        *,
        credentials: CredentialTable | None = None,
        token_ttl: float = 24 * 3600,
        idle_timeout: float | None = 3600,
        clock: Clock = wall_clock,
        relevance: RelevanceEngine | None = None,
        pipeline: PromotionPipeline | None = None,
        journal: SessionJournal | None = None,
        router: CognitiveRouter | None = None,
    ):
        if token_ttl <= 0:
            raise ConfigError("token ttl must be positive")
        self.conversation = conversation
        self.owner_key = owner_key
        self.credentials = credentials or CredentialTable()
        self.token_ttl = token_ttl
        self.idle_timeout = idle_timeout
        self.clock = clock
        self.relevance = relevance
        self.pipeline = pipeline
        self.journal = journal
        self.router = router
        self._tokens: dict[str, AuthToken] = {}
        self._live: dict[str, _Live] = {}
        self._lock = threading.RLock()
        self._next_local = 1

    # ------------------------------------------------------------------ auth
    def authenticate(self, user: str, credential: str) -> AuthToken:
        check_user(user)
        if not self.credentials.check(user, credential):
            raise AuthFailed(f"credential rejected for {user!r}")
        return self.issue_token(user)

    def issue_token(self, user: str) -> AuthToken:
        """Mint a token without a credential check (trusted callers only)."""
        check_user(user)
        now = self.clock()
        token = AuthToken(secrets.token_urlsafe(24), user, now, now + self.token_ttl)
        with self._lock:
            self._tokens[token.token] = token
        return token

    def validate_token(self, token: AuthToken | str, now: float | None = None) -> AuthToken:
        key = token.token if isinstance(token, AuthToken) else token
        with self._lock:
            known = self._tokens.get(key) if isinstance(key, str) else None
        if known is None or (isinstance(token, AuthToken) and token != known):
            raise TokenInvalid("token not recognized")
        if (self.clock() if now is None else now) >= known.expires_at:
            raise TokenExpired(f"token expired at {known.expires_at}")
        return known

    # -------------------------------------------------------------- sessions
    def open_session(self, token: AuthToken | str) -> SessionHandle:
        now = self.clock()
        auth = self.validate_token(token, now)
        self.sweep_idle(now)
        owner = self.owner_key(auth.user)
        if self.journal is not None:
            session = self.journal.open(owner, now)
        else:
            with self._lock:
                session = f"t{self._next_local:06d}"
                self._next_local += 1
        return self._register(session, auth.user, owner, now)

    def _register(self, session: str, user: str | None, owner: str, opened_at: float) -> SessionHandle:
        handle = SessionHandle(session, user, opened_at, SessionStatus.OPEN)
        with self._lock:
            if not self.conversation.exists(session):
                self.conversation.create(session)
            self._live[session] = _Live(handle, owner, opened_at, threading.RLock())
        return handle

    def adopt(self, session: str, owner: str, opened_at: float, turns: list[Turn]) -> SessionHandle:
        """Re-register a journaled session left open by a previous process,
        rebuilding its context and pending candidates from its turns."""
        self.conversation.restore(session, turns)
        if self.relevance is not None:
            for turn in sorted(turns, key=lambda t: t.turn_id):
                self.relevance.observe_turn(session, turn)
        handle = self._register(session, None, owner, opened_at)
        if turns:
            self._live[session].last_active = max(t.timestamp for t in turns)
        return handle

    def _entry(self, session: str) -> _Live:
        with self._lock:
            live = self._live.get(session)
        if live is None:
            raise UnknownSession(session)
        return live

    def handle(self, session: str) -> SessionHandle:
        return self._entry(session).handle

    def owner_of(self, session: str) -> str:
        return self._entry(session).owner

    def sessions(self, user: str | None = None) -> list[SessionHandle]:
        with self._lock:
            handles = [live.handle for live in self._live.values()]
        return sorted((h for h in handles if user is None or h.user == user), key=lambda h: h.session)

    def append_turn(self, session: str, speaker: Speaker | str, text: str) -> Turn:
        now = self.clock()
        self.sweep_idle(now, skip=session)
        live = self._entry(session)
        with live.lock:
            turn = self.conversation.append_turn(session, speaker, text)
            live.last_active = now
            return turn

    def converse(self, session: str, text: str) -> Exchange:
        """Append a user turn, route it and append the system's answer.

        When the turn yields new memory candidates the answer opens by
        restating them, which lets a following "yes" count as confirmation.
        """
        if self.router is None:
            raise RuntimeError("gateway has no router")
        now = self.clock()
        self.sweep_idle(now, skip=session)
        live = self._entry(session)
        with live.lock:
            before = {c.candidate_id for c in self.relevance.pending(session)} if self.relevance else set()
            user_turn = self.conversation.append_turn(session, Speaker.USER, text)
            personal = self.pipeline is not None
            response = self.router.handle(live.owner if personal else None, session, text, use_window=personal)
            reply = response.text
            if self.relevance is not None:
                fresh = [c for c in self.relevance.pending(session) if c.candidate_id not in before]
                if fresh:
                    reply = " ".join(f"Noted: {c.content}." for c in fresh) + " " + reply
            system_turn = self.conversation.append_turn(session, Speaker.SYSTEM, reply)
            live.last_active = now
            return Exchange(user_turn, response, system_turn)

    def close_session(self, session: str) -> ClosureReport:
        now = self.clock()
        self.sweep_idle(now, skip=session)
        live = self._entry(session)
        with live.lock:
            if live.handle.status is SessionStatus.CLOSED:
                raise AlreadyClosed(session)
            return self._close_locked(session, live, now)

    def _close_locked(self, session: str, live: _Live, now: float) -> ClosureReport:
        # the first attempt fixes the decision time so a retry after a store
        # failure reproduces the same traces
        if live.closing_at is None:
            live.closing_at = now
        if self.pipeline is not None:
            report = self.pipeline.run_end_of_session(session, live.owner, live.closing_at)
        else:
            report = ClosureReport(session)
            if self.relevance is not None:
                self.relevance.drop(session)
        self.conversation.reset(session)
        live.handle = SessionHandle(session, live.handle.user, live.handle.opened_at, SessionStatus.CLOSED)
        live.report = report
        return report

    def sweep_idle(self, now: float | None = None, skip: str | None = None) -> list[ClosureReport]:
        """Close every Open session idle for at least the timeout.

        Busy sessions are skipped rather than waited on; they are active.
        """
        if not self.idle_timeout or self.idle_timeout <= 0:
            return []
        now = self.clock() if now is None else now
        with self._lock:
            stale = [
                (sid, live) for sid, live in sorted(self._live.items())
                if sid != skip
                and live.handle.status is SessionStatus.OPEN
                and now - live.last_active >= self.idle_timeout
            ]
        reports = []
        for sid, live in stale:
            if not live.lock.acquire(blocking=False):
                continue
            try:
                if live.handle.status is SessionStatus.OPEN:
                    reports.append(self._close_locked(sid, live, now))
            except CogMemError:
                pass  # left Open; the next sweep or an explicit close retries
            finally:
                live.lock.release()
        return reports

    def report(self, session: str) -> ClosureReport | None:
        return self._entry(session).report
