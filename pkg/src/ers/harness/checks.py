"""Competing writers: two authors about one entity never get merged on disk."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..model import Statement, make_doc_id, merge_statements
from ..node import World
from ..store import StoreScope


@dataclass
class CheckResult:
    passed: bool
    checks: dict[str, bool] = field(default_factory=dict)

    def failures(self) -> list[str]:
        return sorted(k for k, ok in self.checks.items() if not ok)


def competing_writer_check(seed: int = 0) -> CheckResult:
    """A, B and C share a bridgeless network. A caches B's entity, then C
    writes about it too. Without a bridge A only follows the document it
    already holds; once a bridge arrives A gets C's document as well, stored
    separately, and the merged view is the union."""
    w = World(seed)
    a, b, c = (w.add_node(n, "contributor", "lan") for n in ("A", "B", "C"))
    for n in (a, b, c):
        n.start()
    entity = "urn:ers:people/b"
    own = [Statement(entity, "foaf:name", "B"), Statement(entity, "ex:city", "Ghent")]
    for s in own:
        b.registry.add_statement(s)
    w.run_until(3000)

    a.registry.cache_entity(entity)
    w.run_until(6000)
    b_doc, c_doc = make_doc_id("B", entity), make_doc_id("C", entity)
    checks = {"a_has_b_doc": a.store.get(StoreScope.CACHE, b_doc) is not None}

    foreign = [Statement(entity, "ex:city", "Brussels"), Statement(entity, "ex:knows", "urn:ers:people/c")]
    for s in foreign:
        c.registry.add_statement(s)
    b.registry.add_statement(Statement(entity, "ex:age", "41"))
    w.run_until(12000)

    cached = {d.doc_id for d in a.store.documents(StoreScope.CACHE) if d.entity == entity}
    checks["a_follows_b_updates"] = (a.store.get(StoreScope.CACHE, b_doc) is not None and
                                     Statement(entity, "ex:age", "41") in a.store.get(StoreScope.CACHE, b_doc).statements())
    checks["mesh_only_b_doc"] = cached == {b_doc}
    b_public = b.store.get(StoreScope.PUBLIC, b_doc)
    checks["b_doc_untouched"] = b_public.statements() == frozenset(own + [Statement(entity, "ex:age", "41")])

    bridge = w.add_node("bridge", "bridge", "lan")
    bridge.start()
    w.run_until(20000)
    docs = [d for d in a.store.documents(StoreScope.CACHE) if d.entity == entity]
    checks["bridge_brings_both_docs"] = {d.doc_id for d in docs} == {b_doc, c_doc}
    by_id = {d.doc_id: d.statements() for d in docs}
    checks["docs_not_merged"] = (by_id.get(b_doc) == b.store.get(StoreScope.PUBLIC, b_doc).statements() and
                                 by_id.get(c_doc) == frozenset(foreign))
    view = a.registry.get_entity(entity).plain()
    checks["view_is_union"] = view == merge_statements(
        [b.store.get(StoreScope.PUBLIC, b_doc), c.store.get(StoreScope.PUBLIC, c_doc)])
    return CheckResult(all(checks.values()), checks)
