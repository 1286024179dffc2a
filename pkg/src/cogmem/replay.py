"""Transcript replay: drive an engine (in-process or over the wire) from a
JSON-lines script and collect a deterministic RunReport.

Each line is one event object::

    {"event": "open",  "user": "alice", "session_label": "s1", "credential": "..."}
    {"event": "turn",  "session_label": "s1", "speaker": "user", "text": "I like green tea."}
    {"event": "close", "session_label": "s1"}

``credential`` is optional; without it the replayer asks the engine for a
trusted token. ``speaker`` defaults to ``user``. User turns are routed and
answered; system turns are appended verbatim. Blank lines and lines
starting with ``#`` are ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

from .conversation import Speaker
from .errors import BadTranscript

EVENTS = ("open", "turn", "close")


@dataclass(frozen=True)
class TranscriptEvent:
    line: int
    event: str
    session_label: str
    user: str | None = None
    speaker: Speaker = Speaker.USER
    text: str | None = None
    credential: str | None = None


def _field(raw: dict, name: str, line: int, required: bool = True) -> str | None:
    value = raw.get(name)
    if value is None:
        if required:
            raise BadTranscript(line, f"missing {name!r}")
        return None
    if not isinstance(value, str) or not value:
        raise BadTranscript(line, f"{name!r} must be a nonempty string")
    return value


def parse_transcript(lines: Iterable[str]) -> list[TranscriptEvent]:
    """Parse and check ordering: per label, open then turns then close."""
    events: list[TranscriptEvent] = []
    open_at: dict[str, int] = {}
    for lineno, raw_line in enumerate(lines, start=1):
        stripped = raw_line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            raw = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise BadTranscript(lineno, f"not JSON: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise BadTranscript(lineno, "event must be a JSON object")
        kind = raw.get("event")
        if kind not in EVENTS:
            raise BadTranscript(lineno, f"event must be one of {EVENTS}, got {kind!r}")
        label = _field(raw, "session_label", lineno)
        if kind == "open":
            if label in open_at:
                raise BadTranscript(lineno, f"session {label!r} is already open")
            open_at[label] = lineno
            events.append(TranscriptEvent(
                lineno, kind, label,
                user=_field(raw, "user", lineno),
                credential=_field(raw, "credential", lineno, required=False),
            ))
            continue
        if label not in open_at:
            raise BadTranscript(lineno, f"session {label!r} is not open")
        if kind == "close":
            del open_at[label]
            events.append(TranscriptEvent(lineno, kind, label))
            continue
        try:
            speaker = Speaker.parse(raw.get("speaker", "user"))
        except ValueError:
            raise BadTranscript(lineno, f"unknown speaker {raw.get('speaker')!r}") from None
        events.append(TranscriptEvent(lineno, kind, label, speaker=speaker, text=_field(raw, "text", lineno)))
    if open_at:
        label, lineno = min(open_at.items(), key=lambda kv: kv[1])
        raise BadTranscript(lineno, f"session {label!r} is never closed")
    return events


def load_transcript(path: str | Path) -> list[TranscriptEvent]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_transcript(fh)
    except UnicodeDecodeError as exc:
        raise BadTranscript(0, f"not UTF-8: {exc}") from None


class EngineApi(Protocol):
    """What the replayer needs; both Engine and ServiceClient provide it."""

    def authenticate(self, user, credential): ...
    def issue_token(self, user): ...
    def open_session(self, token): ...
    def append_turn(self, session, speaker, text): ...
    def converse(self, session, text): ...
    def close_session(self, session): ...
    def inspect(self, user, trace_limit=20): ...


@dataclass
class RunReport:
    mode: str
    sessions: list[dict] = field(default_factory=list)
    queries: list[dict] = field(default_factory=list)
    ltm_records: dict[str, int] = field(default_factory=dict)

    @property
    def traces(self) -> list[dict]:
        return [t for s in self.sessions for t in s["closure"]["traces"]]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "sessions": self.sessions,
            "queries": self.queries,
            "ltm_records": dict(sorted(self.ltm_records.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _source(response) -> str | None:
    if response.knowledge is not None:
        return response.knowledge.source.value
    return "NoAnswer" if response.intent == "lookup" else None


def replay(api: EngineApi, events: Iterable[TranscriptEvent], mode: str) -> RunReport:
    report = RunReport(mode=mode)
    live: dict[str, tuple[str, str]] = {}  # label -> (session id, user)
    users: list[str] = []
    for ev in events:
        if ev.event == "open":
            token = api.authenticate(ev.user, ev.credential) if ev.credential else api.issue_token(ev.user)
            handle = api.open_session(token)
            live[ev.session_label] = (handle.session, ev.user)
            if ev.user not in users:
                users.append(ev.user)
        elif ev.event == "turn":
            session, user = live[ev.session_label]
            if ev.speaker is Speaker.SYSTEM:
                api.append_turn(session, Speaker.SYSTEM, ev.text)
                continue
            exchange = api.converse(session, ev.text)
            resp = exchange.response
            report.queries.append({
                "label": ev.session_label,
                "session": session,
                "user": user,
                "turn_id": exchange.user_turn.turn_id,
                "text": ev.text,
                "mode": resp.mode.value,
                "intent": resp.intent,
                "source": _source(resp),
                "used_memory": list(resp.used_memory),
                "used_turns": list(resp.used_turns),
                "response": exchange.system_turn.text,
            })
        else:
            session, user = live.pop(ev.session_label)
            closure = api.close_session(session)
            report.sessions.append({
                "label": ev.session_label,
                "session": session,
                "user": user,
                "closure": closure.to_dict(),
            })
    for user in users:
        report.ltm_records[user] = len(api.inspect(user).records)
    return report
