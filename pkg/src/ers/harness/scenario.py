"""Scenario files: parsing, validation and template expansion."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..faults import ChaosPolicy, LatencyPolicy
from ..netsim import Impairment
from ..store import StoreScope
from ..sync import ROLES, SyncConfig

OPS = {
    "add_statement": ("entity", "predicate", "value"),
    "remove_statement": ("entity", "predicate", "value"),
    "set_value": ("entity", "predicate", "value"),
    "create_entity": ("entity",),
    "delete_entity": ("entity",),
    "cache_entity": ("entity",),
    "uncache_entity": ("entity",),
    "search_and_cache": (),
}
ACTIONS = ("move", "kill", "restart")
ASSERTIONS = ("converged", "converged_within", "cache_lacks", "public_intact", "no_private_leak", "interest_covers")


class ScenarioError(ValueError):
    """Invalid scenario; the message starts with the offending location."""

    def __init__(self, where: str, problem: str):
        super().__init__(f"{where}: {problem}")
        self.where = where


@dataclass
class NodeSpec:
    id: str
    role: str
    network: str | None
    hostname: str | None = None
    start_ms: int = 0
    data: list[dict] = field(default_factory=list)
    cache: list[str] = field(default_factory=list)
    max_cache_docs: int | None = None


@dataclass
class Scenario:
    name: str
    seed: int
    duration_ms: int
    nodes: list[NodeSpec]
    timeline: list[dict] = field(default_factory=list)
    workload: list[dict] = field(default_factory=list)
    impairment: Impairment = Impairment()
    network_impairments: dict[str, Impairment] = field(default_factory=dict)
    sync: SyncConfig = SyncConfig()
    chaos: ChaosPolicy | None = None
    latency: LatencyPolicy | None = None
    sample_ms: int = 1000
    track_stops: bool = False
    assertions: list[dict] = field(default_factory=list)
    source: dict = field(default_factory=dict)

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)


def _need(data: dict, key: str, where: str) -> Any:
    if key not in data:
        raise ScenarioError(where, f"missing field {key!r}")
    return data[key]


def _int(value: Any, where: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ScenarioError(where, f"expected an integer >= {minimum}, got {value!r}")
    return value


def expand(data: dict, seed: int | None = None) -> dict:
    """Turn a template reference into an explicit scenario dict."""
    from .templates import TEMPLATES

    if "template" not in data:
        out = copy.deepcopy(data)
        if seed is not None:
            out["seed"] = seed
        return out
    name = data["template"]
    if name not in TEMPLATES:
        raise ScenarioError("template", f"unknown template {name!r} (known: {', '.join(sorted(TEMPLATES))})")
    params = dict(data.get("params", {}))
    run_seed = seed if seed is not None else data.get("seed", 0)
    out = TEMPLATES[name](params, run_seed)
    for key in ("name", "sync", "impairment", "network_impairments", "policies", "sample_ms", "duration_ms"):
        if key in data:
            out[key] = copy.deepcopy(data[key])
    if "assertions" in data:
        out["assertions"] = out.get("assertions", []) + copy.deepcopy(data["assertions"])
    out["seed"] = run_seed
    return out


def parse(data: dict, seed: int | None = None) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("<root>", "scenario must be a JSON object")
    source = expand(data, seed)
    d = source
    name = str(d.get("name", "scenario"))
    duration = _int(_need(d, "duration_ms", "<root>"), "duration_ms", 1)
    run_seed = _int(d.get("seed", 0), "seed")

    nodes: list[NodeSpec] = []
    seen: set[str] = set()
    for i, raw in enumerate(_need(d, "nodes", "<root>")):
        where = f"nodes[{i}]"
        nid = str(_need(raw, "id", where))
        if nid in seen:
            raise ScenarioError(f"{where}.id", f"duplicate node id {nid!r}")
        seen.add(nid)
        role = _need(raw, "role", where)
        if role not in ROLES:
            raise ScenarioError(f"{where}.role", f"unknown role {role!r}")
        for j, st in enumerate(raw.get("data", [])):
            for key in ("entity", "predicate", "value"):
                _need(st, key, f"{where}.data[{j}]")
            if st.get("scope", "public") not in ("public", "private"):
                raise ScenarioError(f"{where}.data[{j}].scope", "must be public or private")
        start = _int(raw.get("start_ms", 0), f"{where}.start_ms")
        if start > duration:
            raise ScenarioError(f"{where}.start_ms", "after the end of the run")
        nodes.append(NodeSpec(nid, role, raw.get("network"), raw.get("hostname"), start,
                              list(raw.get("data", [])), list(raw.get("cache", [])), raw.get("max_cache_docs")))
    if not nodes:
        raise ScenarioError("nodes", "at least one node is required")

    def check_time(value: Any, where: str) -> int:
        t = _int(value, where)
        if t > duration:
            raise ScenarioError(where, f"time {t} beyond duration {duration}")
        return t

    def check_node(value: Any, where: str) -> str:
        if value not in seen:
            raise ScenarioError(where, f"undeclared node {value!r}")
        return value

    timeline = []
    for i, ev in enumerate(d.get("timeline", [])):
        where = f"timeline[{i}]"
        check_time(_need(ev, "at", where), f"{where}.at")
        check_node(_need(ev, "node", where), f"{where}.node")
        if _need(ev, "action", where) not in ACTIONS:
            raise ScenarioError(f"{where}.action", f"unknown action {ev['action']!r}")
        if ev["action"] == "move" and "network" not in ev:
            raise ScenarioError(where, "move needs a network (null for offline)")
        timeline.append(dict(ev))

    workload = []
    for i, op in enumerate(d.get("workload", [])):
        where = f"workload[{i}]"
        check_time(_need(op, "at", where), f"{where}.at")
        check_node(_need(op, "node", where), f"{where}.node")
        kind = _need(op, "op", where)
        if kind not in OPS:
            raise ScenarioError(f"{where}.op", f"unknown operation {kind!r}")
        args = op.get("args", {})
        for key in OPS[kind]:
            _need(args, key, f"{where}.args")
        if args.get("scope", "public") not in ("public", "private"):
            raise ScenarioError(f"{where}.args.scope", "must be public or private")
        if kind == "search_and_cache" and not ("pattern" in args or "predicate" in args):
            raise ScenarioError(f"{where}.args", "search needs a pattern or a predicate")
        if "every_ms" in op:
            _int(op["every_ms"], f"{where}.every_ms", 1)
            check_time(op.get("until_ms", duration), f"{where}.until_ms")
        workload.append(dict(op))

    try:
        impairment = Impairment.from_dict(d.get("impairment", {}))
        net_imp = {k: Impairment.from_dict(v) for k, v in d.get("network_impairments", {}).items()}
    except (TypeError, ValueError) as exc:
        raise ScenarioError("impairment", str(exc)) from None
    try:
        sync = SyncConfig.from_dict(d.get("sync"))
    except (TypeError, ValueError) as exc:
        raise ScenarioError("sync", str(exc)) from None

    policies = d.get("policies", {})
    chaos = latency = None
    try:
        if policies.get("chaos"):
            chaos = ChaosPolicy.from_dict(policies["chaos"])
            for n in chaos.eligible:
                check_node(n, "policies.chaos.eligible")
        if policies.get("latency"):
            latency = LatencyPolicy.from_dict(policies["latency"])
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError("policies", str(exc)) from None

    assertions = []
    for i, a in enumerate(d.get("assertions", [])):
        if _need(a, "kind", f"assertions[{i}]") not in ASSERTIONS:
            raise ScenarioError(f"assertions[{i}].kind", f"unknown assertion {a['kind']!r}")
        if "node" in a:
            check_node(a["node"], f"assertions[{i}].node")
        assertions.append(dict(a))

    return Scenario(name, run_seed, duration, nodes, timeline, workload, impairment, net_imp, sync,
                    chaos, latency, _int(d.get("sample_ms", 1000), "sample_ms", 1),
                    bool(d.get("track_stops", False)), assertions, source)


def load(path: str | Path, seed: int | None = None) -> Scenario:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    return parse(data, seed)


def scope_of(args: dict) -> StoreScope:
    return StoreScope(args.get("scope", "public"))
