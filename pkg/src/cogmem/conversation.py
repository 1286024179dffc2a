"""Short-term memory: per-session turn log plus a bounded attention window."""

from __future__ import annotations

import enum
import threading
from collections import deque
from dataclasses import dataclass
from typing import Callable

from .clock import Clock, wall_clock
from .errors import EmptyText, SessionClosed, UnknownSession


class Speaker(str, enum.Enum):
    USER = "User"
    SYSTEM = "System"

    @classmethod
    def parse(cls, value: "str | Speaker") -> "Speaker":
        if isinstance(value, Speaker):
            return value
        for member in cls:
            if isinstance(value, str) and value.lower() == member.value.lower():
                return member
        raise ValueError(f"unknown speaker {value!r}")


@dataclass(frozen=True)
class Turn:
    turn_id: int
    speaker: Speaker
    text: str
    timestamp: float

    def to_dict(self) -> dict:
        return {"turn_id": self.turn_id, "speaker": self.speaker.value, "text": self.text, "timestamp": self.timestamp}

    @classmethod
    def from_dict(cls, raw: dict) -> "Turn":
        return cls(raw["turn_id"], Speaker.parse(raw["speaker"]), raw["text"], raw["timestamp"])


@dataclass(frozen=True)
class AttentionWindow:
    items: tuple[Turn, ...]
    capacity: int

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class StmView:
    session: str
    turns: tuple[Turn, ...]
    window: AttentionWindow


TurnListener = Callable[[str, Turn], None]


class _SessionStm:
    __slots__ = ("turns", "window", "next_id", "last_ts", "open")

    def __init__(self, capacity: int):
        self.turns: list[Turn] = []
        self.window: deque[Turn] = deque(maxlen=capacity)
        self.next_id = 1
        self.last_ts = float("-inf")
        self.open = True


class ConversationContext:
    """Holds the live dialogue of every open session.

    Listeners registered with ``subscribe`` see each appended turn in append
    order; the relevance engine uses this to extract candidates from user
    turns. The gateway owns the lifecycle: after ``reset`` a session accepts
    no further turns.
    """

    def __init__(self, capacity: int = 7, clock: Clock = wall_clock):
        if capacity < 1:
            raise ValueError("window capacity must be positive")
        self.capacity = capacity
        self._clock = clock
        self._sessions: dict[str, _SessionStm] = {}
        self._listeners: list[TurnListener] = []
        self._lock = threading.RLock()

    def subscribe(self, listener: TurnListener) -> None:
        self._listeners.append(listener)

    def create(self, session: str) -> None:
        with self._lock:
            if session in self._sessions:
                raise ValueError(f"session {session} already has a context")
            self._sessions[session] = _SessionStm(self.capacity)

    def _get(self, session: str) -> _SessionStm:
        try:
            return self._sessions[session]
        except KeyError:
            raise UnknownSession(session) from None

    def append_turn(self, session: str, speaker: "Speaker | str", text: str) -> Turn:
        speaker = Speaker.parse(speaker)
        with self._lock:
            stm = self._get(session)
            if not stm.open:
                raise SessionClosed(session)
            if not text or not text.strip():
                raise EmptyText("turn text must be nonempty")
            ts = max(stm.last_ts, self._clock())
            turn = Turn(stm.next_id, speaker, text, ts)
            self._push(stm, turn)
        for listener in self._listeners:
            listener(session, turn)
        return turn

    def _push(self, stm: _SessionStm, turn: Turn) -> None:
        stm.turns.append(turn)
        stm.window.append(turn)
        stm.next_id = turn.turn_id + 1
        stm.last_ts = turn.timestamp

    def restore(self, session: str, turns: list[Turn]) -> None:
        """Rebuild a context from journaled turns without notifying listeners."""
        with self._lock:
            self.create(session)
            stm = self._sessions[session]
            for turn in sorted(turns, key=lambda t: t.turn_id):
                self._push(stm, turn)

    def snapshot(self, session: str) -> StmView:
        with self._lock:
            stm = self._get(session)
            return StmView(session, tuple(stm.turns), AttentionWindow(tuple(stm.window), self.capacity))

    def exists(self, session: str) -> bool:
        with self._lock:
            return session in self._sessions

    def turn_count(self, session: str) -> int:
        with self._lock:
            return len(self._get(session).turns)

    def is_open(self, session: str) -> bool:
        with self._lock:
            return self._get(session).open

    def reset(self, session: str) -> None:
        with self._lock:
            stm = self._get(session)
            stm.turns.clear()
            stm.window.clear()
            stm.open = False
