"""Replay one transcript under both engine modes and print the answers side
by side, followed by the four behavioral contrasts between the modes.

    python scripts/compare_modes.py [transcript.jsonl] [--facts facts.tsv]
"""

import argparse
import tempfile
from pathlib import Path

from cogmem.clock import StepClock
from cogmem.config import Config
from cogmem.engine import Engine, EngineMode
from cogmem.replay import load_transcript, replay

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def durable_files(path: Path) -> dict[str, bytes]:
    return {str(p.relative_to(path)): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("transcript", nargs="?", default=FIXTURES / "two_session_transcript.jsonl")
    ap.add_argument("--facts", default=FIXTURES / "facts.tsv")
    ap.add_argument("--credentials", default=FIXTURES / "credentials.tsv")
    args = ap.parse_args()

    events = load_transcript(args.transcript)
    with tempfile.TemporaryDirectory() as tmp:
        cfg = Config().replace(
            store__data_dir=tmp,
            store__fsync=False,
            knowledge__facts_file=str(args.facts),
            auth__credentials_file=str(args.credentials),
        )
        reports = {}
        with Engine(cfg, EngineMode.COGNITIVE, clock=StepClock()) as eng:
            reports["Cognitive"] = replay(eng, events, "Cognitive")
        before = durable_files(Path(tmp))
        with Engine(cfg, EngineMode.TRADITIONAL, clock=StepClock()) as eng:
            reports["Traditional"] = replay(eng, events, "Traditional")
        unchanged = before == durable_files(Path(tmp))

    cog, trad = reports["Cognitive"], reports["Traditional"]
    for c, t in zip(cog.queries, trad.queries):
        print(f"[{c['label']}] {c['text']}")
        for name, q in (("cognitive  ", c), ("traditional", t)):
            extra = []
            if q["source"]:
                extra.append(f"source={q['source']}")
            if q["used_turns"]:
                extra.append(f"turns={q['used_turns']}")
            if q["used_memory"]:
                extra.append(f"memory={q['used_memory']}")
            print(f"  {name} {q['response']}" + (f"  ({', '.join(extra)})" if extra else ""))
    print()

    promoted = [rid for s in cog.sessions for rid in s["closure"]["promoted"]]
    window = any(q["used_turns"] for q in cog.queries)
    later = [q["source"] for q in cog.queries if q["label"] != cog.queries[0]["label"] and q["source"]]
    print(f"traditional left the store unchanged: {unchanged}")
    print(f"cognitive used the session window:     {window}")
    print(f"cognitive promoted records:            {promoted or 'none'}")
    print(f"cognitive sources in later sessions:   {later or 'none'}")
    print(f"records on disk after each run: cognitive {cog.ltm_records}, traditional {trad.ltm_records}")


if __name__ == "__main__":
    main()
