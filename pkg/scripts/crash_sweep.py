"""Crash the end-of-session commit after every byte and tally what recovery
finds. A session holding N confirmed statements is left open, the engine is
restarted (which closes the orphaned session in one batch), and the restart
is cut short at each byte offset of that batch.

    python scripts/crash_sweep.py [--statements 3] [--stride 1]
"""

import argparse
import collections
import shutil
import tempfile
import time
from pathlib import Path

from cogmem.clock import StepClock
from cogmem.config import Config
from cogmem.engine import Engine
from cogmem.store import ContextStore, FaultInjector, SimulatedCrash

STATEMENTS = [
    "I like green tea.",
    "Every Monday I play chess.",
    "My favorite drink is jasmine tea.",
    "I prefer trains over planes.",
    "Every Friday I cook dinner for friends.",
    "I love hiking in the mountains.",
]


def config(path: Path) -> Config:
    return Config().replace(store__data_dir=str(path), store__fsync=False)


def state(path: Path):
    s = ContextStore(path, read_only=True)
    return s.durable_bytes(), s.state_bytes()


def restart(path: Path, faults: FaultInjector | None = None) -> Engine:
    return Engine(config(path), clock=StepClock(start=2e9), faults=faults)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--statements", type=int, default=3, choices=range(1, len(STATEMENTS) + 1))
    ap.add_argument("--stride", type=int, default=1, help="test every k-th byte offset")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        base = tmp / "base"
        eng = Engine(config(base), clock=StepClock())
        session = eng.open_session(eng.issue_token("sweeper")).session
        for text in STATEMENTS[: args.statements]:
            eng.converse(session, text)
            eng.converse(session, "yes")
        # restating the first one keeps its recency from decaying below the threshold
        eng.converse(session, STATEMENTS[0])
        eng.close()
        pre = state(base)

        probe = tmp / "probe"
        shutil.copytree(base, probe)
        faults = FaultInjector()
        eng = restart(probe, faults)
        (report,) = eng.recovered
        eng.close()
        post = state(probe)
        total = faults.write_boundaries[-1]
        print(f"batch: {len(report.promoted)} promoted, {len(report.updated)} updated, "
              f"{report.discarded} discarded; {total} bytes over writes ending at {faults.write_boundaries}")

        tally = collections.Counter()
        t0 = time.perf_counter()
        for cut in sorted({*range(0, total + 1, args.stride), *faults.write_boundaries, total}):
            work = tmp / "work"
            shutil.copytree(base, work)
            try:
                restart(work, FaultInjector(crash_after_bytes=cut)).close()
                crashed = False
            except SimulatedCrash:
                crashed = True
            got = state(work)
            kind = "pre" if got == pre else "post" if got == post else "PARTIAL"
            tally[(kind, "crashed" if crashed else "completed")] += 1
            shutil.rmtree(work)
        elapsed = time.perf_counter() - t0

        for (kind, how), n in sorted(tally.items()):
            print(f"  {kind:8s} {how:10s} {n:6d}")
        partial = sum(n for (kind, _), n in tally.items() if kind == "PARTIAL")
        print(f"{sum(tally.values())} cuts in {elapsed:.1f}s, partial states: {partial}")
        # after any crash a clean restart finishes the job exactly once
        shutil.copytree(base, tmp / "again")
        try:
            restart(tmp / "again", FaultInjector(crash_after_bytes=total // 2)).close()
        except SimulatedCrash:
            pass
        eng = restart(tmp / "again")
        print(f"restart after a mid-batch crash recovers {len(eng.inspect('sweeper').records)} records")
        eng.close()


if __name__ == "__main__":
    main()
