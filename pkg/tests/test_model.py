import hashlib
import itertools
import json
import random

import pytest
from hypothesis import given, strategies as st

from ers.model import (
    EntityDocument,
    EntityMismatchError,
    ModelError,
    Revision,
    Statement,
    TombstoneWriteError,
    apply_statement,
    compute_digest,
    empty_document,
    make_doc_id,
    merge_statements,
    split_doc_id,
)

names = st.text(alphabet="ab|\\-: /", min_size=1, max_size=6)
values = st.text(alphabet="xyz", max_size=2)
predicates = st.sampled_from(["p", "q", "rdf:type", "foaf:name"])


def doc_strategy(entity="e"):
    return st.builds(
        lambda graph, pairs, deleted: EntityDocument(
            entity, graph, {} if deleted else _props(pairs), deleted=deleted),
        st.sampled_from(["g1", "g2", "g3"]),
        st.lists(st.tuples(predicates, values), max_size=5),
        st.booleans(),
    )


def _props(pairs):
    out = {}
    for p, v in pairs:
        out.setdefault(p, []).append(v)
    return out


# doc ids

def test_doc_id_is_canonical_join():
    assert make_doc_id("g1", "e1") == "g1|e1"
    assert make_doc_id("g1", "e1") == make_doc_id("g1", "e1")


def test_doc_id_escapes_separator():
    assert make_doc_id("g1", "a|b") != make_doc_id("g1|a", "b")


def test_doc_id_injective_over_separator_corpus():
    # every pair over a small alphabet heavy in separator/escape characters
    alphabet = ["a", "|", "\\", "a|", "|\\", "\\|", "a\\", "||"]
    pairs = [(g, e) for g in alphabet for e in alphabet]
    ids = [make_doc_id(g, e) for g, e in pairs]
    assert len(set(ids)) == len(pairs)


@given(names, names, names, names)
def test_doc_id_injective(g1, e1, g2, e2):
    if (g1, e1) != (g2, e2):
        assert make_doc_id(g1, e1) != make_doc_id(g2, e2)


@given(names, names)
def test_split_inverts_make(g, e):
    assert split_doc_id(make_doc_id(g, e)) == (g, e)


@pytest.mark.parametrize("bad", ["", "a\nb", "a\tb", "x\x00"])
def test_names_reject_empty_and_control(bad):
    with pytest.raises(ModelError):
        make_doc_id("g", bad)


def test_reserved_predicate_rejected():
    with pytest.raises(ModelError):
        Statement("e", "_id", "v")
    with pytest.raises(ModelError):
        Statement("e", "", "v")


# statements

def test_add_to_empty_doc():
    doc = apply_statement(empty_document("g", "e"), Statement("e", "p", "v"))
    assert doc.properties == {"p": ("v",)}


def test_add_is_idempotent():
    s = Statement("e", "p", "v")
    doc = apply_statement(apply_statement(empty_document("g", "e"), s), s)
    assert doc.properties == {"p": ("v",)}


def test_remove_twice_is_harmless():
    s = Statement("e", "p", "v")
    doc = apply_statement(empty_document("g", "e"), s)
    once = apply_statement(doc, s, "remove")
    assert apply_statement(once, s, "remove") == once
    assert once.properties == {}


def test_apply_errors():
    doc = empty_document("g", "e")
    with pytest.raises(EntityMismatchError):
        apply_statement(doc, Statement("other", "p", "v"))
    with pytest.raises(TombstoneWriteError):
        apply_statement(doc.tombstone(), Statement("e", "p", "v"))


@given(st.lists(st.tuples(st.sampled_from(["add", "remove"]), predicates, values), max_size=40))
def test_apply_matches_reference_set(ops):
    doc = empty_document("g", "e")
    ref = set()
    for mode, p, v in ops:
        doc = apply_statement(doc, Statement("e", p, v), mode)
        (ref.add if mode == "add" else ref.discard)((p, v))
    assert {(s.predicate, s.value) for s in doc.statements()} == ref


def test_apply_keeps_revision():
    doc = empty_document("g", "e").with_revision(Revision(3, "ab"))
    assert apply_statement(doc, Statement("e", "p", "v")).revision == Revision(3, "ab")


def test_tombstone_cannot_carry_properties():
    with pytest.raises(ModelError):
        EntityDocument("e", "g", {"p": ["v"]}, deleted=True)


def test_duplicate_values_collapse():
    assert EntityDocument("e", "g", {"p": ["a", "b", "a"]}).properties == {"p": ("a", "b")}


# merge

def test_merge_examples():
    assert merge_statements([]) == frozenset()
    d1 = EntityDocument("e", "g1", {"p": ["a"]})
    d2 = EntityDocument("e", "g2", {"p": ["a"], "q": ["b"]})
    assert merge_statements([d1]) == {Statement("e", "p", "a")}
    assert merge_statements([d1, d2]) == {Statement("e", "p", "a"), Statement("e", "q", "b")}


def test_merge_rejects_mixed_entities():
    with pytest.raises(EntityMismatchError):
        merge_statements([empty_document("g", "e1"), empty_document("g", "e2")])


@given(st.lists(doc_strategy(), max_size=6))
def test_merge_matches_union_oracle(docs):
    oracle = set()
    for d in docs:
        if not d.deleted:
            for p, vs in d.properties.items():
                oracle.update(Statement("e", p, v) for v in vs)
    assert merge_statements(docs) == oracle


@given(st.lists(doc_strategy(), max_size=5), st.randoms())
def test_merge_order_and_duplication_invariant(docs, rnd):
    shuffled = docs + docs[: len(docs) // 2]
    rnd.shuffle(shuffled)
    assert merge_statements(shuffled) == merge_statements(docs)
    half = len(docs) // 2
    assert merge_statements(docs) == merge_statements(docs[:half]) | merge_statements(docs[half:])


# revisions and digests

def test_revision_order_and_text():
    assert Revision(1, "ff") < Revision(2, "00")
    assert Revision(2, "aa") < Revision(2, "ab")
    assert Revision.parse(str(Revision(7, "beef"))) == Revision(7, "beef")
    with pytest.raises(ModelError):
        Revision.parse("nope")


def test_revision_order_exhaustive():
    revs = [Revision(g, d) for g in (1, 2, 3) for d in ("0", "00", "0a", "a", "b")]
    for a, b in itertools.product(revs, repeat=2):
        if a < b:
            assert not b < a
        assert (a < b) or (b < a) or (a == b)
    for a, b, c in itertools.product(revs, repeat=3):
        if a < b and b < c:
            assert a < c


def test_digest_deterministic_and_order_free():
    d1 = EntityDocument("e", "g", {"p": ["1"], "q": ["2"]})
    d2 = EntityDocument("e", "g", {"q": ["2"], "p": ["1"]})
    parent = Revision(1, "aa")
    assert compute_digest(d1, parent) == compute_digest(d1, parent)
    assert compute_digest(d1, parent) == compute_digest(d2, parent)
    assert compute_digest(d1, parent) != compute_digest(d1, None)
    assert len(compute_digest(d1, None)) == 32


def test_digest_frozen_value():
    # pins the canonical serialization and hash choice across platforms
    doc = EntityDocument("urn:ers:people/alice", "g1", {"foaf:name": ["Alice"]})
    assert doc.to_json() == ('{"_id":"g1|urn:ers:people/alice","entity":"urn:ers:people/alice",'
                             '"graph":"g1","rev":null,"deleted":false,"foaf:name":["Alice"]}')
    assert compute_digest(doc, None) == FROZEN_DIGEST
    body = doc.to_json().replace('"rev":null,', "")
    assert hashlib.blake2b((body + "\x00").encode(), digest_size=16).hexdigest() == FROZEN_DIGEST


FROZEN_DIGEST = "653cdad8f9cfb2cc2cee70a411876ec0"


def test_digest_collision_scan():
    rng = random.Random(5)
    base = {"p": ["v0"], "q": ["w"]}
    seen = set()
    for i in range(100_000):
        props = dict(base)
        props["p"] = [f"v{rng.getrandbits(48)}-{i}"]
        seen.add(compute_digest(EntityDocument("e", "g", props), None))
    assert len(seen) == 100_000


def test_serialization_round_trip():
    doc = EntityDocument("e", "g", {"b": ["2", "1"], "a": ["x"]}, Revision(2, "cd"))
    data = json.loads(doc.to_json())
    assert list(data)[:5] == ["_id", "entity", "graph", "rev", "deleted"]
    assert list(data)[5:] == ["a", "b"]
    assert data["b"] == ["2", "1"]
    assert EntityDocument.from_json(doc.to_json()) == doc
    bad = dict(data, _id="other|e")
    with pytest.raises(ModelError):
        EntityDocument.from_dict(bad)
