from __future__ import annotations

import threading
import time
from typing import Callable

Clock = Callable[[], float]


def wall_clock() -> float:
    return time.time()


class StepClock:
    """Deterministic clock: each reading advances by ``step`` seconds.

    Replays and dual-path harnesses use it so two runs that make the same
    sequence of calls see the same timestamps.
    """

    def __init__(self, start: float = 1_700_000_000.0, step: float = 1.0):
        self._now = start
        self._step = step
        self._lock = threading.Lock()

    def __call__(self) -> float:
        with self._lock:
            self._now += self._step
            return self._now

    def advance(self, seconds: float) -> None:
        with self._lock:
            self._now += seconds
