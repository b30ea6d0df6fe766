"""Operator entry point: configure, run, sweep, and compare experiments.

Every completed run directory contains manifest.json (how the run was
invoked, with timestamps), summary.json (per-repetition totals plus
Avg/Max/Min aggregates), report_###.json per repetition, and line-delimited
jobs_###.jsonl / events_###.jsonl streams.  Reports are append-only: a
repeated invocation writes a fresh directory instead of overwriting.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import ConfigError, InvalidInputError
from .simengine import ExperimentResult, SimConfig, run


def _write_json(path: Path, data: dict, indent: int | None = 2) -> None:
    # Atomic write: temp file in the same directory, then rename.
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=indent, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_jsonl(path: Path, records: list[dict]) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _coerce(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def apply_override(data: dict, dotted: str, value) -> None:
    """Set ``a.b.c`` in a nested dict, creating intermediate objects."""
    parts = dotted.split(".")
    node = data
    for part in parts[:-1]:
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            nxt = node[part] = {}
        node = nxt
    node[parts[-1]] = value


def _load_config(path: str, overrides: list[str], seed: int | None) -> SimConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be an object")
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError("override", f"expected KEY=VALUE, got {item!r}")
        apply_override(data, key, _coerce(raw))
    if seed is not None:
        data["seed"] = seed
    return SimConfig.from_dict(data, base_dir=Path(path).parent)


def _unique_dir(base: Path, name: str) -> Path:
    candidate = base / name
    suffix = 1
    while candidate.exists():
        suffix += 1
        candidate = base / f"{name}-{suffix}"
    candidate.mkdir(parents=True)
    return candidate


def _money(value: float) -> str:
    return f"{value:.2f}"


def _summary_table(rows: list[tuple[str, dict]]) -> str:
    header = (
        f"{'run':<28} {'perf avg':>9} {'max':>7} {'min':>7}"
        f" {'cost avg':>9} {'max':>8} {'min':>8}"
        f" {'makespan avg':>13} {'max':>10} {'min':>10}"
    )
    lines = [header, "-" * len(header)]
    for name, summary in rows:
        perf, cost, mk = summary["perf"], summary["cost"], summary["makespan_ms"]
        lines.append(
            f"{name:<28} {perf['avg']:>9.4f} {perf['max']:>7.4f} {perf['min']:>7.4f}"
            f" {_money(cost['avg']):>9} {_money(cost['max']):>8} {_money(cost['min']):>8}"
            f" {mk['avg']:>13.0f} {mk['max']:>10.0f} {mk['min']:>10.0f}"
        )
    return "\n".join(lines)


def write_run_outputs(result: ExperimentResult, out_dir: Path,
                      manifest_extra: dict | None = None) -> Path:
    for i, report in enumerate(result.reports):
        _write_json(out_dir / f"report_{i:03d}.json", report.to_dict())
        _write_jsonl(out_dir / f"jobs_{i:03d}.jsonl", report.jobs)
        _write_jsonl(out_dir / f"events_{i:03d}.jsonl", report.events)
    _write_json(out_dir / "summary.json", result.to_summary_dict())
    manifest = {
        "tool_version": __version__,
        "out_dir": str(out_dir),
        "resolved_config": result.config,
        "scenario_hash": result.scenario_hash,
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    _write_json(out_dir / "manifest.json", manifest)
    return out_dir


def _run_one(cfg: SimConfig, out: Path, name: str, manifest_extra: dict) -> ExperimentResult:
    started = datetime.now(timezone.utc).isoformat()
    result = run(cfg)
    finished = datetime.now(timezone.utc).isoformat()
    run_dir = _unique_dir(out, name)
    write_run_outputs(
        result, run_dir,
        manifest_extra={**manifest_extra, "started_at": started, "finished_at": finished},
    )
    return result


def cmd_simulate(args) -> int:
    if args.print_defaults:
        from .scenario import default_scenario

        cfg = SimConfig(scenario=default_scenario())
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return 0
    if not args.config or not args.out:
        print("simulate requires --config and --out", file=sys.stderr)
        return 2
    cfg = _load_config(args.config, args.override, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = f"{cfg.method.replace(':', '-')}-seed{cfg.seed}"
    result = _run_one(cfg, out, name, {"config_path": str(args.config)})
    print(_summary_table([(name, result.summary())]))
    return 0


def _parse_grid(items: list[str]) -> list[tuple[str, list]]:
    grid = []
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key or not raw:
            raise ConfigError("grid", f"expected KEY=V1,V2,..., got {item!r}")
        values = [_coerce(v) for v in raw.split(",") if v != ""]
        if not values:
            raise ConfigError("grid", f"no values for {key!r}")
        grid.append((key, values))
    if not grid:
        raise ConfigError("grid", "at least one KEY=V1,V2,... is required")
    return grid


def cmd_sweep(args) -> int:
    grid = _parse_grid(args.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    keys = [key for key, _ in grid]
    rows = []
    sweep_records = []
    for combo in itertools.product(*(values for _, values in grid)):
        overrides = [f"{k}={json.dumps(v)}" for k, v in zip(keys, combo)]
        cfg = _load_config(args.config, args.override + overrides, args.seed)
        label = ",".join(f"{k}={v}" for k, v in zip(keys, combo))
        dirname = label.replace(".", "_").replace(",", "__").replace(":", "-")
        result = _run_one(cfg, out, dirname,
                          {"config_path": str(args.config), "grid_point": label})
        rows.append((label, result.summary()))
        sweep_records.append({"point": label, "summary": result.summary(),
                              "scenario_hash": result.scenario_hash})
    table = _summary_table(rows)
    print(table)
    _write_json(out / "sweep_summary.json", {"grid": keys, "points": sweep_records})
    (out / "sweep_table.txt").write_text(table + "\n", encoding="utf-8")
    return 0


def _load_summary(path: str) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "summary.json"
    with open(p, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _pct(delta: float, base: float) -> str:
    if base == 0:
        return "n/a"
    return f"{100.0 * delta / base:.2f}%"


def cmd_compare(args) -> int:
    summaries = [_load_summary(p) for p in args.reports]
    ref = summaries[0]
    mismatched = [
        args.reports[i]
        for i, s in enumerate(summaries)
        if s["scenario_hash"] != ref["scenario_hash"]
    ]
    if mismatched:
        print(
            "refusing to compare: scenario/dataset differs from the reference "
            f"for {mismatched} (comparisons are only meaningful on the same workload)",
            file=sys.stderr,
        )
        return 2
    ref_perf = ref["summary"]["perf"]["avg"]
    ref_cost = ref["summary"]["cost"]["avg"]
    ref_mk = ref["summary"]["makespan_ms"]["avg"]
    header = (
        f"{'method':<24} {'perf':>8} {'IMPV':>9} {'cost':>10} {'SAVING':>9}"
        f" {'makespan':>12} {'SAVING':>9}"
    )
    print(header)
    print("-" * len(header))
    for s in summaries:
        perf = s["summary"]["perf"]["avg"]
        cost = s["summary"]["cost"]["avg"]
        mk = s["summary"]["makespan_ms"]["avg"]
        print(
            f"{s['method']:<24} {perf:>8.4f} {_pct(perf - ref_perf, ref_perf):>9}"
            f" {_money(cost):>10} {_pct(ref_cost - cost, ref_cost):>9}"
            f" {mk:>12.0f} {_pct(ref_mk - mk, ref_mk):>9}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llmsched",
        description="Cost-aware LLM workload scheduling simulator",
    )
    parser.add_argument("--version", action="version", version=f"llmsched {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one configuration")
    sim.add_argument("--config", help="path to a JSON config file")
    sim.add_argument("--seed", type=int, default=None, help="override the run seed")
    sim.add_argument("--override", action="append", default=[], metavar="KEY=VAL",
                     help="override a config field (dotted path), repeatable")
    sim.add_argument("--out", help="output directory (one run subdirectory is created)")
    sim.add_argument("--print-defaults", action="store_true",
                     help="print the default configuration and exit")
    sim.set_defaults(func=cmd_simulate)

    sweep = sub.add_parser("sweep", help="run a parameter grid")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--override", action="append", default=[], metavar="KEY=VAL")
    sweep.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2,...",
                       help="values to sweep (repeatable; repeats form a product)")
    sweep.add_argument("--out", required=True)
    sweep.set_defaults(func=cmd_sweep)

    cmp_ = sub.add_parser("compare", help="compare runs against the first (reference)")
    cmp_.add_argument("reports", nargs="+",
                      help="summary.json files or run directories; first is the reference")
    cmp_.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "compare" and len(args.reports) < 2:
        print("compare needs a reference and at least one other report", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
