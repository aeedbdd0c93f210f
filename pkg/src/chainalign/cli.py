"""Command line entry point: ``align <experiment> [--config FILE] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import AlignError, ConfigError
from .experiments import EXPERIMENTS, manifest, parse_config, run_experiment
from .io import write_csv, write_json

OUT_ENV = "ALIGN_OUT_DIR"


def _parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value", text)
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def _apply_override(cfg: dict, path: list[str], value) -> None:
    node = cfg
    for part in path[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override inside non-mapping {part!r}", ".".join(path))
    node[path[-1]] = value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="align", description=__doc__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int, help="base seed (u64)")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    return parser


def _error(kind: str, exc: Exception, out: Path | None, key: str | None = None) -> dict:
    record = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    if key is not None:
        record["key"] = key
    print(json.dumps(record), file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "error.json", record)
        except OSError:
            pass
    return record


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out
    try:
        raw: dict = {}
        if args.config is not None:
            try:
                raw = json.loads(args.config.read_text())
            except FileNotFoundError:
                raise ConfigError(f"config file {str(args.config)!r} not found", "config") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}", "config") from None
            if not isinstance(raw, dict):
                raise ConfigError("config must be a JSON object", "config")
        for item in args.override:
            path, value = _parse_override(item)
            _apply_override(raw, path, value)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer", "seed")
            raw["base_seed"] = args.seed
        cfg = parse_config(raw, args.experiment)
        if out is None:
            out = Path(cfg.output_dir or os.environ.get(OUT_ENV, "results")) / cfg.experiment
    except ConfigError as exc:
        _error("config", exc, out, exc.key)
        return 2

    try:
        result = run_experiment(cfg)
    except ConfigError as exc:
        _error("config", exc, out, exc.key)
        return 2
    except AlignError as exc:
        _error("run", exc, out)
        return 1

    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "manifest.json", manifest(cfg))
    write_csv(out / "results.csv", result.columns, result.rows)
    write_json(out / "summary.json", result.summary)
    print(result.summary_line())
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
