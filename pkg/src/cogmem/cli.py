"""Command line: ``cogmem {init,replay,inspect,serve,verify}``.

Exit codes: 0 success, 1 usage error, 2 bad input file, 3 store corruption.
The data directory comes from ``--data-dir``, else ``COGMEM_DATA_DIR``,
else the config file, else ``./cogmem-data``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
from dataclasses import asdict
from pathlib import Path

from .clock import StepClock, wall_clock
from .config import Config
from .engine import Engine, EngineMode
from .errors import BadFactFile, BadTranscript, CogMemError, ConfigError, CorruptJournal
from .interaction import load_or_create_salt
from .replay import load_transcript, replay
from .service import CogMemServer, parse_bind
from .store import ContextStore

EXIT_OK, EXIT_USAGE, EXIT_BAD_INPUT, EXIT_CORRUPT = 0, 1, 2, 3
ENV_DATA_DIR = "COGMEM_DATA_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cogmem", description="Dual-context memory engine for conversational agents.")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--mode", choices=["cognitive", "traditional"], default="cognitive")
    p.add_argument("--data-dir", help=f"store directory (overrides ${ENV_DATA_DIR})")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    sub.add_parser("init", help="create the data directory and a default config")

    r = sub.add_parser("replay", help="drive the engine from a JSON-lines transcript")
    r.add_argument("transcript")
    r.add_argument("--output", "-o", help="write the RunReport here instead of stdout")
    r.add_argument("--wall-clock", action="store_true", help="use real time instead of a step clock")

    i = sub.add_parser("inspect", help="dump a user's long-term records and recent traces")
    i.add_argument("user")
    i.add_argument("--json", action="store_true")
    i.add_argument("--traces", type=int, default=20)

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--bind", default="127.0.0.1:8765", help="host:port")

    sub.add_parser("verify", help="run recovery read-only and report journal integrity")
    return p


def load_config(args) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    data_dir = args.data_dir or os.environ.get(ENV_DATA_DIR)
    if data_dir:
        cfg.store.data_dir = str(Path(data_dir).resolve())
    return cfg


def cmd_init(args, cfg: Config) -> int:
    data_dir = Path(cfg.store.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    salt_path = Path(cfg.ltm.salt_file) if cfg.ltm.salt_file else data_dir / "salt.key"
    load_or_create_salt(salt_path)
    config_path = data_dir / "config.json"
    if not config_path.exists():
        raw = cfg.to_dict()
        raw["store"]["data_dir"] = "."
        config_path.write_text(json.dumps(raw, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    ContextStore(data_dir, fsync=cfg.store.fsync).close()
    print(f"initialized {data_dir} (config {config_path})")
    return EXIT_OK


def cmd_replay(args, cfg: Config) -> int:
    events = load_transcript(args.transcript)
    mode = EngineMode.parse(args.mode)
    with Engine(cfg, mode, clock=wall_clock if args.wall_clock else StepClock()) as engine:
        report = replay(engine, events, mode.value)
    text = report.to_json()
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


def cmd_inspect(args, cfg: Config) -> int:
    with Engine(cfg, EngineMode.TRADITIONAL) as engine:  # read-only open
        dump = engine.inspect(args.user, args.traces)
    print(json.dumps(dump.to_dict(), indent=2, sort_keys=True) if args.json else dump.render())
    return EXIT_OK


def cmd_serve(args, cfg: Config) -> int:
    address = parse_bind(args.bind)
    engine = Engine(cfg, EngineMode.parse(args.mode))
    server = CogMemServer(engine, address)

    def _stop(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, _stop)
    print(f"serving {engine.mode.value} engine on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        engine.close()
    return EXIT_OK


def cmd_verify(args, cfg: Config) -> int:
    data_dir = Path(cfg.store.data_dir)
    if not data_dir.is_dir():
        print(f"no store at {data_dir}", file=sys.stderr)
        return EXIT_BAD_INPUT
    store = ContextStore(data_dir, read_only=True)
    print(json.dumps({"data_dir": str(data_dir), **asdict(store.recovery)}, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"init": cmd_init, "replay": cmd_replay, "inspect": cmd_inspect, "serve": cmd_serve, "verify": cmd_verify}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"cogmem: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.verb](args, cfg)
    except CorruptJournal as exc:
        print(f"cogmem: store corrupt: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (BadTranscript, BadFactFile, ConfigError) as exc:
        print(f"cogmem: bad input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except FileNotFoundError as exc:
        print(f"cogmem: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except CogMemError as exc:
        print(f"cogmem: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
