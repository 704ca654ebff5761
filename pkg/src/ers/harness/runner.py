"""Executes a scenario and produces its report and trace."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from ..faults import ChaosMonkey, apply_latency_schedule
from ..model import Statement, make_doc_id
from ..node import Node, World
from ..registry import Query, Registry, RegistryError
from ..store import StoreScope
from .metrics import PrivacyAuditor, StopTracker, completion, link_count
from .scenario import Scenario, scope_of

TIMING_FIELDS = ("completion", "converged_at_ms", "links", "stops", "trace_summary", "chaos", "workload")


@dataclass
class RunResult:
    report: dict
    trace: str
    world: World

    def report_json(self) -> str:
        return dumps(self.report)

    def trace_file(self) -> str:
        header = json.dumps({"scenario": self.report["source"], "seed": self.report["seed"]},
                            sort_keys=True, ensure_ascii=False)
        return header + "\n" + self.trace


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def _round(x: float) -> float:
    return round(x, 6)


class _Run:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.world = World(scenario.seed, scenario.sync)
        w = self.world
        w.network.set_impairment(scenario.impairment)
        for net, imp in sorted(scenario.network_impairments.items()):
            w.network.set_impairment(imp, network=net)
        self.auditor = PrivacyAuditor()
        w.network.observers.append(self.auditor.observe)
        self.stops = StopTracker(w) if scenario.track_stops else None
        self.samples: dict[str, list] = {}
        self.links: list[list[int]] = []
        self.executed = 0
        self.skipped = 0
        self.chaos: ChaosMonkey | None = None

    # setup

    def setup(self) -> None:
        w, sc = self.world, self.sc
        for spec in sc.nodes:
            node = w.add_node(spec.id, spec.role, spec.network, spec.hostname, spec.max_cache_docs)
            offline = Registry(node.store)
            for st in spec.data:
                offline.add_statement(Statement(st["entity"], st["predicate"], st["value"]), scope_of(st))
            for entity in spec.cache:
                offline.cache_entity(entity)
            self.samples[spec.id] = []
            w.clock.at(spec.start_ms, node.start)
        for ev in sc.timeline:
            w.clock.at(ev["at"], self._timeline, ev)
        for op in sc.workload:
            w.clock.at(op["at"], self._workload, op, 0)
        if sc.chaos is not None:
            self.chaos = ChaosMonkey(w, sc.chaos)
            self.chaos.install()
        if sc.latency is not None:
            apply_latency_schedule(w, sc.latency)
        w.clock.at(0, self._sample)

    # events

    def _timeline(self, ev: dict) -> None:
        node = self.world.nodes[ev["node"]]
        action = ev["action"]
        if action == "move":
            old = node.location
            node.move(ev["network"])
            if self.stops is not None:
                self.stops.on_move(node, old, ev["network"])
        elif action == "kill":
            node.kill()
        else:
            node.restart()

    def _workload(self, op: dict, tick: int) -> None:
        node = self.world.nodes[op["node"]]
        if node.alive:
            try:
                self._execute(node, op, tick)
                self.executed += 1
            except RegistryError:
                self.skipped += 1
        else:
            self.skipped += 1
        every = op.get("every_ms")
        if every:
            nxt = self.world.clock.now + every
            if nxt <= op.get("until_ms", self.sc.duration_ms):
                self.world.clock.at(nxt, self._workload, op, tick + 1)

    def _execute(self, node: Node, op: dict, tick: int) -> None:
        reg = node.registry
        args = op.get("args", {})
        kind = op["op"]
        scope = scope_of(args)
        if kind in ("add_statement", "remove_statement", "set_value"):
            value = str(args["value"]).replace("{tick}", str(tick))
            stmt = Statement(args["entity"], args["predicate"], value)
            if kind == "add_statement":
                reg.add_statement(stmt, scope)
            elif kind == "remove_statement":
                reg.remove_statement(stmt, scope)
            else:
                self._set_value(reg, stmt, scope)
        elif kind == "create_entity":
            reg.create_entity(args["entity"], scope)
        elif kind == "delete_entity":
            reg.delete_entity(args["entity"], scope)
        elif kind == "cache_entity":
            reg.cache_entity(args["entity"])
        elif kind == "uncache_entity":
            reg.uncache_entity(args["entity"])
        elif kind == "search_and_cache":
            if "predicate" in args:
                q = Query.by_property(args["predicate"], args["value"], remote=True)
            else:
                q = Query.by_name(args["pattern"], remote=True)

            def cache_all(result, reg=reg, node=node):
                if node.alive and node.registry is reg:
                    known = set(reg.interest())
                    for e in result.entities:
                        if e not in known:
                            reg.cache_entity(e)

            reg.search(q, cache_all)

    @staticmethod
    def _set_value(reg: Registry, stmt: Statement, scope: StoreScope) -> None:
        """Replace every value of the predicate in one write."""
        from ..model import apply_statement, empty_document

        doc_id = make_doc_id(reg.graph, stmt.entity)
        head = reg.store.head(scope, doc_id)
        base = head if head is not None and not head.deleted else empty_document(reg.graph, stmt.entity)
        for old in list(base.properties.get(stmt.predicate, ())):
            base = apply_statement(base, Statement(stmt.entity, stmt.predicate, old), "remove")
        base = apply_statement(base, stmt, "add")
        reg.store.put(scope, base, head.revision if head else None)

    def _sample(self) -> None:
        w = self.world
        for nid in sorted(w.nodes):
            self.samples[nid].append([w.clock.now, _round(completion(w, w.nodes[nid]))])
        self.links.append([w.clock.now, link_count(w)])
        nxt = w.clock.now + self.sc.sample_ms
        if nxt <= self.sc.duration_ms:
            w.clock.at(nxt, self._sample)

    # results

    def converged_at(self) -> int | None:
        times = [t for t, _ in next(iter(self.samples.values()))]
        at = None
        for i in range(len(times) - 1, -1, -1):
            if all(series[i][1] == 1.0 for series in self.samples.values()):
                at = times[i]
            else:
                break
        return at

    def check(self, a: dict, final: dict[str, float], violations: list[str]) -> dict:
        w = self.world
        kind = a["kind"]
        passed, detail = False, ""
        if kind == "converged":
            lagging = sorted(n for n, v in final.items() if v != 1.0)
            passed, detail = not lagging, f"not converged: {lagging}" if lagging else "all nodes at 1.0"
        elif kind == "converged_within":
            deadline = a["after_ms"] + a["within_ms"]
            times = [t for t, _ in next(iter(self.samples.values()))]
            hit = None
            for i, t in enumerate(times):
                if a["after_ms"] <= t <= deadline and all(s[i][1] == 1.0 for s in self.samples.values()):
                    hit = t
                    break
            passed = hit is not None
            detail = f"full completion at {hit} ms" if passed else f"not complete by {deadline} ms"
        elif kind == "cache_lacks":
            doc = w.nodes[a["node"]].store.get(StoreScope.CACHE, make_doc_id(a["graph"], a["entity"]))
            passed = doc is None
            detail = "absent" if passed else f"still cached: {doc.to_json()}"
        elif kind == "public_intact":
            doc = w.nodes[a["node"]].store.get(StoreScope.PUBLIC, make_doc_id(a["node"], a["entity"]))
            want = {(p, v) for p, v in a["statements"]}
            have = {(s.predicate, s.value) for s in doc.statements()} if doc else set()
            passed = want <= have
            detail = "intact" if passed else f"missing {sorted(want - have)}"
        elif kind == "interest_covers":
            authored = set()
            for n in w.nodes.values():
                for doc in n.store.documents(StoreScope.PUBLIC):
                    if a["value"] in doc.properties.get(a["predicate"], ()):
                        authored.add(doc.entity)
            short = sorted(nid for nid, n in w.nodes.items()
                           if n.role == "contributor" and not authored <= set(n.store.local.get("interest", ())))
            passed = not short
            detail = f"{len(authored)} entities cached everywhere" if passed else f"incomplete interest: {short}"
        elif kind == "no_private_leak":
            passed = not violations
            detail = f"{len(violations)} violation(s)" + (f": {violations[:3]}" if violations else "")
        return {"kind": kind, "passed": passed, "detail": detail}

    def report(self) -> dict:
        w, sc = self.world, self.sc
        final = {n: s[-1][1] for n, s in sorted(self.samples.items())}
        violations = self.auditor.violations(w)
        stops = self.stops.stops if self.stops is not None else []
        candidates = list(final.values()) + [s["completion"] for s in stops]
        trace_text = w.trace.text()
        return {
            "scenario": sc.name,
            "seed": sc.seed,
            "duration_ms": sc.duration_ms,
            "sync": sc.sync.to_dict(),
            "impairment": sc.impairment.to_dict(),
            "final_completion": final,
            "min_completion": _round(min(candidates)),
            "converged": all(v == 1.0 for v in final.values()),
            "converged_at_ms": self.converged_at(),
            "stop_min_completion": _round(min((s["completion"] for s in stops), default=1.0)),
            "completion": self.samples,
            "links": self.links,
            "stops": [dict(s, completion=_round(s["completion"])) for s in stops],
            "privacy": {"violations": len(violations)},
            "assertions": [self.check(a, final, violations) for a in sc.assertions],
            "chaos": [[a.time_ms, a.action, a.node] for a in self.chaos.actions] if self.chaos else [],
            "workload": {"executed": self.executed, "skipped": self.skipped},
            "trace_summary": {
                "records": len(w.trace),
                "digest": hashlib.blake2b(trace_text.encode("utf-8"), digest_size=16).hexdigest(),
                "network": w.network.stats.to_dict(),
                "messages_checked": self.auditor.messages,
            },
            "source": sc.source,
        }


def run(scenario: Scenario) -> RunResult:
    r = _Run(scenario)
    r.setup()
    r.world.clock.advance(scenario.duration_ms)
    return RunResult(r.report(), r.world.trace.text(), r.world)


def strip_timing(report: dict) -> dict:
    """The report without fields that legitimately depend on message timing."""
    return {k: v for k, v in report.items() if k not in TIMING_FIELDS and k not in ("impairment", "source")}
