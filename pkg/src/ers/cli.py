"""Command line front end: run, sweep, replay and validate scenarios."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness.runner import run
from .harness.scenario import ScenarioError, load, parse
from .harness.sweep import parse_values, sweep, to_csv


def _cmd_run(args) -> int:
    scenario = load(args.scenario, args.seed)
    result = run(scenario)
    out = Path(args.out)
    out.write_text(result.report_json(), encoding="utf-8")
    trace = Path(args.trace) if args.trace else out.with_suffix(out.suffix + ".trace")
    trace.write_text(result.trace_file(), encoding="utf-8")
    rep = result.report
    failed = [a for a in rep["assertions"] if not a["passed"]]
    print(f"{scenario.name}: min completion {rep['min_completion']}, converged {rep['converged']}, "
          f"{len(rep['assertions']) - len(failed)}/{len(rep['assertions'])} assertions passed")
    for a in failed:
        print(f"  FAILED {a['kind']}: {a['detail']}")
    print(f"report -> {out}\ntrace  -> {trace}")
    return 1 if failed else 0


def _cmd_sweep(args) -> int:
    data = json.loads(Path(args.scenario).read_text(encoding="utf-8"))
    rows = sweep(data, args.axis, parse_values(args.values), args.seed)
    table = to_csv(rows)
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def _cmd_replay(args) -> int:
    lines = Path(args.trace).read_text(encoding="utf-8").split("\n", 1)
    header = json.loads(lines[0])
    recorded = lines[1] if len(lines) > 1 else ""
    result = run(parse(header["scenario"], header["seed"]))
    if result.trace == recorded:
        print(f"replay identical ({len(result.world.trace)} records)")
        return 0
    new = result.trace.splitlines()
    old = recorded.splitlines()
    first = next((i for i, (a, b) in enumerate(zip(old, new)) if a != b), min(len(old), len(new)))
    print(f"replay differs at record {first + 1}: recorded {len(old)} records, replay {len(new)}")
    return 1


def _cmd_validate(args) -> int:
    scenario = load(args.scenario)
    print(f"{args.scenario}: ok ({scenario.name}, {len(scenario.nodes)} nodes, "
          f"{len(scenario.workload)} workload ops, {scenario.duration_ms} ms)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ers", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write its report")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="trace file (default: <out>.trace)")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("sweep", help="run a scenario once per value of one parameter")
    p.add_argument("scenario")
    p.add_argument("--axis", required=True,
                   help="latency, loss, duplication, corruption, reorder or a dotted path such as params.laps")
    p.add_argument("--values", required=True, help="comma separated values")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("replay", help="re-run a recorded trace and compare byte for byte")
    p.add_argument("--trace", required=True)
    p.set_defaults(fn=_cmd_replay)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(fn=_cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
