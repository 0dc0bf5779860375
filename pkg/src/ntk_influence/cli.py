"""Command line: run experiments, validate configs, list what exists.

Exit codes: 0 on success, 1 for configuration or usage problems, 2 when an
experiment fails at runtime (ill-conditioned system, diverging training).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from .errors import DataFormatError
from .experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    apply_experiment_defaults,
    run_experiment,
)

_LIST_FIELDS = {"proportions", "lambda_grid", "widths", "seeds"}
_INT_LISTS = {"widths", "seeds"}


def _parse_value(name: str, raw: str, kind: type):
    raw = raw.strip()
    if name in _LIST_FIELDS:
        if not raw:
            return ()
        item = int if name in _INT_LISTS else float
        return tuple(item(part.strip()) for part in raw.split(","))
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def _field_kinds() -> dict[str, type]:
    kinds = {}
    for f in fields(ExperimentConfig):
        if f.name in _LIST_FIELDS:
            kinds[f.name] = tuple
        elif f.type == "int":
            kinds[f.name] = int
        elif f.type == "float":
            kinds[f.name] = float
        else:
            kinds[f.name] = str
    return kinds


def parse_config_file(path: str | Path) -> tuple[dict, list[str]]:
    """Parse key = value lines; returns (values, diagnostics)."""
    kinds = _field_kinds()
    values: dict = {}
    diagnostics: list[str] = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        return {}, [f"cannot read config: {exc}"]
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            diagnostics.append(f"line {lineno}: expected 'key = value', got {body!r}")
            continue
        key, _, raw = body.partition("=")
        key = key.strip()
        if key not in kinds:
            diagnostics.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _parse_value(key, raw, kinds[key])
        except ValueError:
            diagnostics.append(
                f"line {lineno}: cannot parse {raw.strip()!r} as {kinds[key].__name__} for {key!r}"
            )
    return values, diagnostics


def _apply_set_overrides(pairs: list[str], values: dict, diagnostics: list[str]) -> None:
    kinds = _field_kinds()
    for pair in pairs:
        if "=" not in pair:
            diagnostics.append(f"--set needs KEY=VALUE, got {pair!r}")
            continue
        key, _, raw = pair.partition("=")
        key = key.strip()
        if key not in kinds:
            diagnostics.append(f"--set: unknown key {key!r}")
            continue
        try:
            values[key] = _parse_value(key, raw, kinds[key])
        except ValueError:
            diagnostics.append(f"--set: cannot parse {raw!r} for {key!r}")


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    return str(v)


def build_config(args) -> tuple[ExperimentConfig | None, set[str], list[str]]:
    """Config file + --set + dedicated flags -> resolved config and diagnostics."""
    values: dict = {}
    diagnostics: list[str] = []
    if args.config:
        values, diagnostics = parse_config_file(args.config)
    _apply_set_overrides(args.set or [], values, diagnostics)
    if getattr(args, "experiment", None):
        values["experiment"] = args.experiment
    if args.out is not None:
        values["out_dir"] = args.out
    if args.seed is not None:
        values["seed"] = args.seed
    if args.threads is not None:
        values["threads"] = args.threads
    if diagnostics:
        return None, set(values), diagnostics
    try:
        cfg = ExperimentConfig(**values)
    except (TypeError, ValueError) as exc:
        return None, set(values), [str(exc)]
    return cfg, set(values), diagnostics


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", help="output directory (config key out_dir)")
    p.add_argument("--seed", type=int, help="master seed (config key seed)")
    p.add_argument("--threads", type=int, help="cap BLAS thread pools")
    p.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ntk-influence",
        description="Influence functions for wide two-layer ReLU networks",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    run_p = sub.add_parser("run", help="run one experiment")
    run_p.add_argument("experiment", nargs="?", help="experiment name (or set it in the config)")
    _add_common_flags(run_p)
    val_p = sub.add_parser("validate", help="parse a config and echo the normalized result")
    _add_common_flags(val_p)
    sub.add_parser("list-experiments", help="print the known experiment names")
    return parser


def cmd_list_experiments() -> int:
    for name in sorted(EXPERIMENTS):
        print(f"{name:20s} {EXPERIMENTS[name]}")
    return 0


def cmd_validate(args) -> int:
    cfg, user_keys, diagnostics = build_config(args)
    if diagnostics:
        for d in diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return 1
    if cfg.experiment:
        if cfg.experiment not in EXPERIMENTS:
            print(f"error: unknown experiment {cfg.experiment!r}", file=sys.stderr)
            return 1
        cfg = apply_experiment_defaults(cfg, user_keys)
    for f in fields(ExperimentConfig):
        print(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    return 0


def cmd_run(args) -> int:
    cfg, user_keys, diagnostics = build_config(args)
    if diagnostics:
        for d in diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return 1
    if not cfg.experiment:
        print("error: no experiment named (positionally or via config)", file=sys.stderr)
        return 1
    if cfg.experiment not in EXPERIMENTS:
        print(
            f"error: unknown experiment {cfg.experiment!r}; "
            f"known: {', '.join(sorted(EXPERIMENTS))}",
            file=sys.stderr,
        )
        return 1
    cfg = apply_experiment_defaults(cfg, user_keys)
    try:
        if cfg.threads > 0:
            import threadpoolctl

            with threadpoolctl.threadpool_limits(cfg.threads):
                out = run_experiment(cfg)
        else:
            out = run_experiment(cfg)
    except (ValueError, FileNotFoundError, DataFormatError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(
            f"runtime failure in {type(exc).__module__}.{type(exc).__name__}: {exc}",
            file=sys.stderr,
        )
        return 2
    manifest = json.loads((out / "manifest.json").read_text())
    print(f"wrote {out}")
    for key, value in sorted(manifest["summary"].items()):
        print(f"  {key} = {value}")
    return 0


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.verb == "list-experiments":
        return cmd_list_experiments()
    if args.verb == "validate":
        return cmd_validate(args)
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
