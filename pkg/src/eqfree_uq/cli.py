"""Command-line client.

Runs the command in-process by default; with ``--server URL`` the resolved
request is posted to a running service instead. Either way the CSV files land
in ``--out`` and the exit code is 0 (success), 2 (configuration error) or 3
(numerical failure).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import U64_MAX, ConfigError
from .jobs import COMMANDS, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("workers must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eqfree-uq", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="INI configuration file")
        s.add_argument("--seed", type=_u64, help="master seed; overrides the file")
        s.add_argument("--workers", type=_positive, help="worker threads; never changes the output")
        s.add_argument("--out", type=Path, default=Path("."), help="output directory")
        s.add_argument("--server", help="base URL of a running service, e.g. http://127.0.0.1:8000")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _remote(url: str, command: str, text: str, seed, workers) -> dict:
    import httpx

    resp = httpx.post(f"{url.rstrip('/')}/run/{command}",
                      json={"config": text, "seed": seed, "workers": workers}, timeout=None)
    if resp.status_code in (400, 422):
        raise ConfigError(json.dumps(resp.json().get("detail")))
    resp.raise_for_status()
    return resp.json()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.config.read_text() if args.config else ""
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.server:
            payload = _remote(args.server, args.command, text, args.seed, args.workers)
        else:
            res = run(args.command, text, args.seed, args.workers)
            payload = {"files": res.files, "summary": res.summary, "failure": res.failure,
                       "exit_code": res.exit_code}
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    args.out.mkdir(parents=True, exist_ok=True)
    for name, body in payload["files"].items():
        (args.out / name).write_text(body)
    print(json.dumps(payload["summary"], default=float, sort_keys=True))
    if payload["failure"]:
        print(f"numerical failure: {payload['failure']}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
