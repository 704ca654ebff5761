"""Omniscient measurements taken by the harness, never by the nodes."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..model import Revision
from ..netsim import Message
from ..node import Node, World
from ..store import StoreScope
from ..sync import BRIDGE

P, PRIV, C = StoreScope.PUBLIC, StoreScope.PRIVATE, StoreScope.CACHE


def _heads(node: Node, scope: StoreScope):
    return node.store._db(scope, reading=False).docs


def _satisfied(holder: Node, doc_id: str, rev: Revision, deleted: bool) -> bool:
    have = _heads(holder, C).get(doc_id)
    if deleted:
        return have is None or have.deleted
    return have is not None and have.revision >= rev


def expected_docs(world: World, node: Node) -> dict[str, tuple[Revision, bool]]:
    """Latest public heads by other authors that ``node`` should hold in cache.

    A contributor should hold every document about an entity in its interest
    set; a bridge should hold every public document of every contributor.
    """
    interest = None if node.role == BRIDGE else set(node.store.local.get("interest", ()))
    out = {}
    for other_id in sorted(world.nodes):
        other = world.nodes[other_id]
        if other_id == node.id or other.role == BRIDGE:
            continue
        for doc_id, doc in _heads(other, P).items():
            if interest is None or doc.entity in interest:
                out[doc_id] = (doc.revision, doc.deleted)
    return out


def completion(world: World, node: Node) -> float:
    expected = expected_docs(world, node)
    if not expected:
        return 1.0
    ok = sum(_satisfied(node, d, r, x) for d, (r, x) in expected.items())
    return ok / len(expected)


def link_count(world: World) -> int:
    ids = set()
    for n in world.nodes.values():
        if n.alive:
            ids.update(n.engine.links)
    return len(ids)


@dataclass
class _OpenStop:
    bridge: str
    network: str
    arrive_ms: int
    upload: dict[str, dict[str, tuple[Revision, bool]]]
    download: dict[str, dict[str, tuple[Revision, bool]]]


class StopTracker:
    """Per-stop completion for mobile bridges.

    At arrival it notes which documents each village node should hand to the
    bridge (its public heads) and receive from it (bridge cache heads about
    its interest set); at departure it scores how many actually moved.
    """

    def __init__(self, world: World):
        self.world = world
        self.stops: list[dict] = []
        self._open: dict[str, _OpenStop] = {}

    def on_move(self, node: Node, old: str | None, new: str | None) -> None:
        if node.role != BRIDGE or old == new:
            return
        if old is not None and node.id in self._open:
            self._close(self._open.pop(node.id))
        if new is not None:
            self._open[node.id] = self._arrive(node, new)

    def _arrive(self, bridge: Node, network: str) -> _OpenStop:
        upload, download = {}, {}
        bridge_cache = _heads(bridge, C)
        for nid in sorted(self.world.nodes):
            v = self.world.nodes[nid]
            if v.role == BRIDGE or v.location != network:
                continue
            upload[nid] = {d: (doc.revision, doc.deleted) for d, doc in _heads(v, P).items()}
            interest = set(v.store.local.get("interest", ()))
            download[nid] = {d: (doc.revision, doc.deleted) for d, doc in bridge_cache.items()
                             if doc.entity in interest and doc.graph != nid}
        return _OpenStop(bridge.id, network, self.world.clock.now, upload, download)

    def _close(self, stop: _OpenStop) -> None:
        bridge = self.world.nodes[stop.bridge]
        for nid in sorted(stop.upload):
            village = self.world.nodes[nid]
            up = sum(_satisfied(bridge, d, r, x) for d, (r, x) in stop.upload[nid].items())
            down = sum(_satisfied(village, d, r, x) for d, (r, x) in stop.download[nid].items())
            total = len(stop.upload[nid]) + len(stop.download[nid])
            self.stops.append({
                "bridge": stop.bridge, "network": stop.network, "node": nid,
                "arrive_ms": stop.arrive_ms, "depart_ms": self.world.clock.now,
                "upload": [up, len(stop.upload[nid])], "download": [down, len(stop.download[nid])],
                "completion": (up + down) / total if total else 1.0,
            })


@dataclass
class PrivacyAuditor:
    """Watches every send and records the documents and values put on the wire."""

    wire_revs: set[tuple[str, str]] = field(default_factory=set)
    wire_values: set[tuple[str, str, str, str]] = field(default_factory=set)
    messages: int = 0

    def observe(self, msg: Message) -> None:
        self.messages += 1
        self._walk(msg.payload)

    def _walk(self, obj) -> None:
        if isinstance(obj, dict):
            if "_id" in obj and "rev" in obj and "graph" in obj:
                self.wire_revs.add((obj["_id"], obj["rev"]))
                for key, values in obj.items():
                    if key not in ("_id", "rev", "graph", "entity", "deleted") and isinstance(values, list):
                        for v in values:
                            self.wire_values.add((obj["graph"], obj["entity"], key, v))
                return
            for v in obj.values():
                self._walk(v)
        elif isinstance(obj, list):
            for v in obj:
                self._walk(v)

    def violations(self, world: World) -> list[str]:
        """Wire documents whose revision exists only in a private scope, and
        wire statements that their author only ever made privately."""
        found = []
        private_revs, public_revs = set(), set()
        private_values, public_values = set(), set()
        for nid in sorted(world.nodes):
            store = world.nodes[nid].store
            for scope, revs, values in ((PRIV, private_revs, private_values), (P, public_revs, public_values)):
                db = store._db(scope, reading=False)
                for d, known in db.known.items():
                    revs.update((d, str(r)) for r in known)
                for doc in db.docs.values():
                    values.update((doc.graph, s.entity, s.predicate, s.value) for s in doc.statements())
        for d, r in sorted(self.wire_revs):
            if (d, r) in private_revs and (d, r) not in public_revs:
                found.append(f"private revision {d} {r} on the wire")
        for g, e, p, v in sorted(self.wire_values & (private_values - public_values)):
            found.append(f"private statement ({e}, {p}, {v}) by {g} on the wire")
        return found
