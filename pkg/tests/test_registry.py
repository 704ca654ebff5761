import time

import pytest
from hypothesis import given, settings, strategies as st

from ers.model import EntityDocument, Revision, Statement, make_doc_id
from ers.node import World
from ers.registry import AlreadyExistsError, NotFoundError, Query, Registry, RegistryError
from ers.store import StoreScope, TriStore

P, PRIV, C = StoreScope.PUBLIC, StoreScope.PRIVATE, StoreScope.CACHE


def reg(owner="me"):
    return Registry(TriStore(owner))


def test_add_then_get():
    r = reg()
    r.add_statement(Statement("e", "p", "v"))
    assert r.get_entity("e").plain() == {Statement("e", "p", "v")}
    assert r.get_entity("e").values("p") == ["v"]


def test_create_twice_fails():
    r = reg()
    r.create_entity("e")
    with pytest.raises(AlreadyExistsError):
        r.create_entity("e")


def test_create_after_delete_is_allowed():
    r = reg()
    r.create_entity("e")
    r.delete_entity("e")
    r.create_entity("e")
    assert r.store.head(P, "me|e").revision.generation == 3


def test_remove_missing_raises():
    r = reg()
    with pytest.raises(NotFoundError):
        r.remove_statement(Statement("e", "p", "v"))
    r.add_statement(Statement("e", "p", "v"))
    with pytest.raises(NotFoundError):
        r.remove_statement(Statement("e", "p", "w"))


def test_delete_missing_raises():
    with pytest.raises(NotFoundError):
        reg().delete_entity("e")


def test_cache_is_not_a_user_scope():
    with pytest.raises(RegistryError):
        reg().add_statement(Statement("e", "p", "v"), C)


def test_private_and_public_are_separate_documents():
    r = reg()
    r.add_statement(Statement("e", "p", "pub"))
    r.add_statement(Statement("e", "p", "priv"), PRIV)
    view = r.get_entity("e")
    assert {(s.value, scope) for s, scope, _ in view.statements} == {("pub", P), ("priv", PRIV)}
    assert r.store.get(P, "me|e").properties == {"p": ("pub",)}


def test_view_merges_cached_graphs():
    r = reg()
    r.add_statement(Statement("e", "p", "mine"))
    r.store.force_put(C, EntityDocument("e", "other", {"p": ["theirs"]}, Revision(1, "aa")))
    view = r.get_entity("e")
    assert view.values("p") == ["mine", "theirs"]
    assert {g for _, _, g in view.statements} == {"me", "other"}


def test_local_search_by_name_and_property():
    r = reg()
    r.add_statement(Statement("urn:a/1", "rdf:type", "T"))
    r.add_statement(Statement("urn:b/2", "rdf:type", "U"), PRIV)
    assert r.local_search(Query.by_name("urn:a/*")) == ["urn:a/1"]
    assert r.local_search(Query.by_property("rdf:type", "U")) == ["urn:b/2"]
    assert r.local_search(Query.by_property("rdf:type", "U", scope_mask=frozenset({P}))) == []


def test_search_ignores_tombstones():
    r = reg()
    r.add_statement(Statement("e", "p", "v"))
    r.delete_entity("e")
    assert r.local_search(Query.by_name("*")) == []


def test_bad_queries():
    with pytest.raises(ValueError):
        Query("sideways")
    with pytest.raises(ValueError):
        Query.by_property("", "v")


def test_cache_and_uncache_manage_interest():
    r = reg()
    r.cache_entity("x")
    r.cache_entity("x")
    assert r.interest() == ["x"]
    r.store.force_put(C, EntityDocument("x", "other", {"p": ["v"]}, Revision(1, "aa")))
    r.uncache_entity("x")
    assert r.interest() == [] and r.store.doc_ids(C) == frozenset()


# reference model: a dict of statement sets per scope


ops = st.lists(st.tuples(
    st.sampled_from(["add", "remove", "delete", "create"]),
    st.sampled_from([P, PRIV]),
    st.sampled_from(["e1", "e2"]),
    st.sampled_from(["p", "q"]),
    st.sampled_from(["x", "y"]),
), max_size=30)


@given(ops)
def test_registry_matches_reference_model(script):
    r = reg()
    model: dict[tuple, set | None] = {}
    for op, scope, e, p, v in script:
        key = (scope, e)
        live = model.get(key) is not None
        stmt = Statement(e, p, v)
        if op == "add":
            r.add_statement(stmt, scope)
            if not live:
                model[key] = set()
            model[key].add((p, v))
        elif op == "remove":
            if live and (p, v) in model[key]:
                r.remove_statement(stmt, scope)
                model[key].discard((p, v))
            else:
                with pytest.raises(NotFoundError):
                    r.remove_statement(stmt, scope)
        elif op == "delete":
            if live:
                r.delete_entity(e, scope)
                model[key] = None
            else:
                with pytest.raises(NotFoundError):
                    r.delete_entity(e, scope)
        else:
            if live:
                with pytest.raises(AlreadyExistsError):
                    r.create_entity(e, scope)
            else:
                r.create_entity(e, scope)
                model[key] = set()
    for (scope, e), stmts in model.items():
        doc = r.store.get(scope, make_doc_id("me", e))
        if stmts is None:
            assert doc is None
        else:
            assert {(s.predicate, s.value) for s in doc.statements()} == stmts


# networked behaviour


def network(n=3, bridge=False):
    w = World(4)
    nodes = [w.add_node(f"c{i}", "contributor", "lan") for i in range(n)]
    if bridge:
        nodes.append(w.add_node("b", "bridge", "lan"))
    return w, nodes


def test_remote_search_finds_peer_entities():
    w, (a, b, c) = network()
    Registry(b.store).add_statement(Statement("urn:x", "rdf:type", "T"))
    Registry(c.store).add_statement(Statement("urn:y", "rdf:type", "T"))
    Registry(c.store).add_statement(Statement("urn:z", "rdf:type", "T"), PRIV)
    for n in (a, b, c):
        n.start()
    w.run_until(5000)
    out = []
    a.registry.search(Query.by_property("rdf:type", "T", remote=True), out.append)
    w.run_until(8000)
    assert out[0].entities == ["urn:x", "urn:y"] and not out[0].partial
    assert out[0].answered == ["c1", "c2"]


def test_remote_search_flags_silent_peers():
    w, (a, b, c) = network()
    for n in (a, b, c):
        n.start()
    w.run_until(5000)
    c.kill()
    out = []
    a.registry.search(Query.by_name("*", remote=True), out.append)
    w.run_until(10_000)
    assert out[0].partial and out[0].missing == ["c2"]


def test_remote_search_without_network_fails():
    with pytest.raises(RegistryError):
        reg().search(Query.by_name("*", remote=True))


def test_cache_entity_pulls_existing_docs_from_bridge():
    w, (a, b, bridge) = network(2, bridge=True)
    Registry(b.store).add_statement(Statement("urn:x", "p", "v"))
    for n in (a, b, bridge):
        n.start()
    w.run_until(10_000)
    assert a.store.doc_ids(C) == frozenset()
    a.registry.cache_entity("urn:x")
    w.run_until(12_000)
    assert a.store.doc_ids(C) == {"c1|urn:x"}
    assert a.store.local["pending_fetch"] == []


def test_fetch_never_returns_private_or_own_docs():
    w, (a, b) = network(2)
    Registry(b.store).add_statement(Statement("urn:x", "p", "secret"), PRIV)
    Registry(a.store).add_statement(Statement("urn:x", "p", "mine"))
    for n in (a, b):
        n.start()
    w.run_until(5000)
    a.registry.cache_entity("urn:x")
    w.run_until(8000)
    assert a.store.doc_ids(C) == frozenset()


def test_throughput_floor():
    r = reg()
    t0 = time.perf_counter()
    for i in range(200):
        r.create_entity(f"e{i}")
    creates = 200 / (time.perf_counter() - t0)
    t0 = time.perf_counter()
    for i in range(500):
        r.add_statement(Statement(f"e{i % 200}", "p", str(i)))
    edits = 500 / (time.perf_counter() - t0)
    assert creates >= 5 and edits >= 20


@settings(max_examples=10, deadline=None)
@given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=6))
def test_interest_is_a_set(names):
    r = reg()
    for n in names:
        r.cache_entity(n)
    assert r.interest() == sorted(set(names))


def test_mesh_node_not_owning_the_link_still_fetches():
    # CC links are run by the smaller id; the other end must fetch on its own
    w, (a, b) = network(2)
    Registry(a.store).add_statement(Statement("urn:x", "p", "v"))
    Registry(b.store).cache_entity("urn:x")
    for n in (a, b):
        n.start()
    w.run_until(5000)
    assert b.store.doc_ids(C) == {"c0|urn:x"}
    a.registry.add_statement(Statement("urn:x", "p", "w"))
    w.run_until(8000)
    assert b.store.get(C, "c0|urn:x").properties == {"p": ("v", "w")}
