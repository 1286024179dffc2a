"""Replay the gate fixtures across a range of promotion thresholds and show
which statements each threshold lets through.

    python scripts/threshold_sweep.py [transcript.jsonl] [--thresholds 0.3 0.4 ...]
"""

import argparse
import tempfile
from pathlib import Path

from cogmem.clock import StepClock
from cogmem.config import Config
from cogmem.engine import Engine
from cogmem.replay import load_transcript, replay

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

SHORT = {
    "Promoted": "promoted",
    "Updated": "updated",
    "DiscardedBelowThreshold": "below",
    "DiscardedEphemeral": "ephemeral",
    "DiscardedRedundant": "redundant",
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("transcript", nargs="?", default=FIXTURES / "gate_transcript.jsonl")
    ap.add_argument("--thresholds", type=float, nargs="+", default=[0.2, 0.3, 0.4, 0.5, 0.55, 0.6, 0.7])
    ap.add_argument("--credentials", default=FIXTURES / "credentials.tsv")
    args = ap.parse_args()

    events = load_transcript(args.transcript)
    rows = {}
    for theta in args.thresholds:
        with tempfile.TemporaryDirectory() as tmp:
            cfg = Config().replace(
                store__data_dir=tmp,
                store__fsync=False,
                relevance__threshold=theta,
                auth__credentials_file=str(args.credentials),
            )
            with Engine(cfg, clock=StepClock()) as eng:
                report = replay(eng, events, "Cognitive")
        for session in report.sessions:
            for trace in session["closure"]["traces"]:
                key = (session["label"], trace["candidate_id"])
                rows.setdefault(key, {"score": trace["score"], "class": trace["class"]})[theta] = SHORT[trace["outcome"]]

    header = f"{'session':16s} {'score':>6s} {'class':14s}" + "".join(f"{t:>11.2f}" for t in args.thresholds)
    print(header)
    print("-" * len(header))
    for (label, _), row in rows.items():
        cells = "".join(f"{row[t]:>11s}" for t in args.thresholds)
        print(f"{label:16s} {row['score']:6.3f} {row['class']:14s}{cells}")


if __name__ == "__main__":
    main()
