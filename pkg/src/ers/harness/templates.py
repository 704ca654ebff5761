"""Built-in scenario generators.

Each template takes a params dict and a seed and returns an explicit scenario
dict; random choices (endorsement times, prices) come from the seed.
"""

from __future__ import annotations

import random

from ..netsim import derive_seed

ATTENDEE_TYPE = "ers:ConferenceAttendee"
RDF_TYPE = "rdf:type"


def _params(params: dict, defaults: dict) -> dict:
    unknown = sorted(set(params) - set(defaults))
    if unknown:
        from .scenario import ScenarioError
        raise ScenarioError("params", f"unknown template parameter(s): {', '.join(unknown)}")
    return {**defaults, **params}


def simple(params: dict, seed: int) -> dict:
    """Two nodes on one network; node1 caches node2's statements, goes offline,
    node2 deletes its document, node1 comes back."""
    p = _params(params, {"disconnect_ms": 20000, "delete_ms": 30000, "reconnect_ms": 40000,
                         "duration_ms": 60000, "write_every_ms": 1000})
    entity = "urn:ers:thing/lamp"
    return {
        "name": "simple",
        "duration_ms": p["duration_ms"],
        "nodes": [
            {"id": "node1", "role": "contributor", "network": "lan",
             "data": [{"entity": entity, "predicate": "ex:colour", "value": "red"}]},
            {"id": "node2", "role": "contributor", "network": "lan",
             "data": [{"entity": entity, "predicate": "ex:size", "value": "large"}]},
        ],
        "workload": [
            {"at": 5000, "node": "node1", "op": "search_and_cache", "args": {"pattern": entity}},
            {"at": 6000, "node": "node2", "op": "set_value", "every_ms": p["write_every_ms"],
             "until_ms": p["delete_ms"] - 1,
             "args": {"entity": entity, "predicate": "ex:reading", "value": "{tick}"}},
            {"at": p["delete_ms"], "node": "node2", "op": "delete_entity", "args": {"entity": entity}},
        ],
        "timeline": [
            {"at": p["disconnect_ms"], "node": "node1", "action": "move", "network": None},
            {"at": p["reconnect_ms"], "node": "node1", "action": "move", "network": "lan"},
        ],
        "assertions": [
            {"kind": "cache_lacks", "node": "node1", "graph": "node2", "entity": entity},
            {"kind": "public_intact", "node": "node1", "entity": entity,
             "statements": [["ex:colour", "red"]]},
            {"kind": "converged"},
            {"kind": "no_private_leak"},
        ],
    }


def conference(params: dict, seed: int) -> dict:
    """One bridge and ``n`` attendees, each publishing a profile, searching for
    the other attendees, caching the results and endorsing a few of them."""
    p = _params(params, {"n": 30, "bridge": True, "duration_ms": 120000, "search_at_ms": 8000,
                         "search_every_ms": 10000, "write_from_ms": 10000, "write_until_ms": 60000,
                         "min_endorsements": 1, "max_endorsements": 5, "chaos": None})
    rng = random.Random(derive_seed(seed, "conference"))
    n = p["n"]
    width = max(2, len(str(n)))
    ids = [f"c{i:0{width}d}" for i in range(1, n + 1)]
    entity = {c: f"urn:ers:attendee/{c}" for c in ids}
    nodes = []
    if p["bridge"]:
        nodes.append({"id": "bridge", "role": "bridge", "network": "hall"})
    for c in ids:
        nodes.append({"id": c, "role": "contributor", "network": "hall", "start_ms": 1 if p["bridge"] else 0,
                      "data": [
                          {"entity": entity[c], "predicate": RDF_TYPE, "value": ATTENDEE_TYPE},
                          {"entity": entity[c], "predicate": "foaf:name", "value": f"Attendee {c}"},
                          {"entity": entity[c], "predicate": "ers:note",
                           "value": f"private-{c}-{rng.getrandbits(32):08x}", "scope": "private"},
                      ]})
    workload = []
    for c in ids:
        workload.append({"at": p["search_at_ms"] + rng.randint(0, 999), "node": c, "op": "search_and_cache",
                         "every_ms": p["search_every_ms"], "until_ms": p["write_until_ms"],
                         "args": {"predicate": RDF_TYPE, "value": ATTENDEE_TYPE}})
        for k in range(rng.randint(p["min_endorsements"], p["max_endorsements"])):
            target = rng.choice([x for x in ids if x != c] or ids)
            workload.append({"at": rng.randint(p["write_from_ms"], p["write_until_ms"]), "node": c,
                             "op": "add_statement",
                             "args": {"entity": entity[target], "predicate": "ers:endorsedBy",
                                      "value": f"{c}#{k}"}})
    workload.sort(key=lambda op: (op["at"], op["node"]))
    out = {
        "name": f"conference-{n}" + ("" if p["bridge"] else "-nobridge"),
        "duration_ms": p["duration_ms"],
        "nodes": nodes,
        "workload": workload,
        "assertions": [{"kind": "no_private_leak"}],
    }
    if p["bridge"]:
        # without a bridge, documents by third authors never reach a cacher
        out["assertions"] += [{"kind": "converged"},
                              {"kind": "interest_covers", "predicate": RDF_TYPE, "value": ATTENDEE_TYPE}]
    if p["chaos"]:
        chaos = dict(p["chaos"])
        chaos.setdefault("end_ms", p["write_until_ms"])
        out["policies"] = {"chaos": chaos}
        out["assertions"].append({"kind": "converged_within", "after_ms": chaos["end_ms"],
                                  "within_ms": chaos.get("settle_ms", 60000)})
        out["policies"]["chaos"].pop("settle_ms", None)
    return out


def truck(params: dict, seed: int) -> dict:
    """Isolated villages visited in turn by a bridge on a truck.

    Each vendor sells ``items`` goods and caches every other village's price
    list. After the truck leaves a village the vendor reprices everything;
    repricing happens on laps 1 .. laps-3 so the last two laps are quiet.
    """
    p = _params(params, {"villages": 6, "items": 10, "dwell_ms": 5000, "travel_ms": 2000, "laps": 6,
                         "reprice_delay_ms": 1000, "latency_ms": 0, "loss": 0.0, "duplication": 0.0,
                         "corruption": 0.0, "reorder": 0.0, "tail_ms": 2000})
    rng = random.Random(derive_seed(seed, "truck"))
    v, items, laps = p["villages"], p["items"], p["laps"]
    stop = p["dwell_ms"] + p["travel_ms"]
    lap_ms = v * stop
    vendors = [f"vendor{i}" for i in range(v)]
    item = {(i, j): f"urn:ers:village{i}/item{j:02d}" for i in range(v) for j in range(items)}

    nodes = [{"id": "truck", "role": "bridge", "network": None}]
    workload = []
    for i, vendor in enumerate(vendors):
        nodes.append({"id": vendor, "role": "contributor", "network": f"village{i}",
                      "data": [{"entity": item[i, j], "predicate": "ex:price", "value": str(rng.randint(100, 999))}
                               for j in range(items)],
                      "cache": [item[k, j] for k in range(v) if k != i for j in range(items)]})
    timeline = []
    for lap in range(laps):
        for i in range(v):
            arrive = lap * lap_ms + i * stop + p["travel_ms"]
            depart = arrive + p["dwell_ms"]
            timeline.append({"at": arrive, "node": "truck", "action": "move", "network": f"village{i}"})
            timeline.append({"at": depart, "node": "truck", "action": "move", "network": None})
            if 1 <= lap <= laps - 3:
                for j in range(items):
                    workload.append({"at": depart + p["reprice_delay_ms"], "node": vendors[i], "op": "set_value",
                                     "args": {"entity": item[i, j], "predicate": "ex:price",
                                              "value": str(rng.randint(100, 999))}})
    imp = {"latency_ms": p["latency_ms"], "loss": p["loss"], "duplication": p["duplication"],
           "corruption": p["corruption"], "reorder": p["reorder"]}
    return {
        "name": "truck",
        "duration_ms": laps * lap_ms + p["tail_ms"],
        "nodes": nodes,
        "timeline": timeline,
        "workload": workload,
        "impairment": imp,
        "track_stops": True,
        "assertions": [{"kind": "converged"}, {"kind": "no_private_leak"}],
    }


TEMPLATES = {"simple": simple, "conference": conference, "truck": truck}
