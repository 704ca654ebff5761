"""One-parameter sweeps over a scenario."""

from __future__ import annotations

import copy
import csv
import io
from dataclasses import dataclass

from ..netsim import derive_seed
from .runner import RunResult, run
from .scenario import ScenarioError, expand, parse

IMPAIRMENT_AXES = {"latency": "latency_ms", "latency_ms": "latency_ms", "loss": "loss",
                   "duplication": "duplication", "corruption": "corruption", "reorder": "reorder"}
CSV_HEADER = ("value", "min_completion", "converged")


@dataclass
class SweepRow:
    value: float
    min_completion: float
    converged: bool
    seed: int
    result: RunResult


def sweep_seed(base_seed: int, axis: str, index: int) -> int:
    return derive_seed(base_seed, "sweep", axis, index) % (2 ** 31)


def _set_path(d: dict, path: str, value) -> None:
    keys = path.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def scenario_for(data: dict, axis: str, value, seed: int) -> dict:
    """Explicit scenario dict with ``axis`` set to ``value``."""
    data = copy.deepcopy(data)
    if axis.startswith("params."):
        if "template" not in data:
            raise ScenarioError("axis", f"{axis} needs a template scenario")
        _set_path(data, axis, value)
        return expand(data, seed)
    out = expand(data, seed)
    if axis in IMPAIRMENT_AXES:
        imp = dict(out.get("impairment", {}))
        imp[IMPAIRMENT_AXES[axis]] = value
        out["impairment"] = imp
    else:
        _set_path(out, axis, value)
    return out


def parse_values(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        out.append(int(part) if part.lstrip("-").isdigit() else float(part))
    return out


def sweep(data: dict, axis: str, values: list, seed: int | None = None) -> list[SweepRow]:
    base = seed if seed is not None else data.get("seed", 0)
    rows = []
    for i, value in enumerate(values):
        run_seed = sweep_seed(base, axis, i)
        result = run(parse(scenario_for(data, axis, value, run_seed)))
        rep = result.report
        rows.append(SweepRow(value, rep["min_completion"], rep["converged"], run_seed, result))
    return rows


def to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([r.value, r.min_completion, str(r.converged).lower()])
    return buf.getvalue()


def monotone_non_increasing(rows: list[SweepRow]) -> bool:
    ordered = sorted(rows, key=lambda r: r.value)
    return all(a.min_completion >= b.min_completion for a, b in zip(ordered, ordered[1:]))
