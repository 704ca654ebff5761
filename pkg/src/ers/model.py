"""Entities, statements and the graph-entity document encoding.

A document holds one author's (graph's) statements about one entity, with
predicates used directly as JSON keys. Documents are immutable values; every
edit returns a new document and leaves revision assignment to the store.
"""

from __future__ import annotations

import hashlib
import json
import unicodedata
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

DOC_ID_SEPARATOR = "|"
_ESCAPE = "\\"

# Field names owned by the serialization; predicates may not shadow them.
RESERVED_KEYS = frozenset({"_id", "entity", "graph", "rev", "deleted"})

DIGEST_BYTES = 16  # blake2b-128


class ModelError(ValueError):
    pass


class EntityMismatchError(ModelError):
    pass


class TombstoneWriteError(ModelError):
    pass


def _check_name(value: str, what: str) -> str:
    if not isinstance(value, str) or not value:
        raise ModelError(f"{what} must be non-empty text")
    for ch in value:
        if unicodedata.category(ch) == "Cc":
            raise ModelError(f"{what} contains a control character: {value!r}")
    return value


def check_entity_name(value: str) -> str:
    return _check_name(value, "entity name")


def check_graph_id(value: str) -> str:
    return _check_name(value, "graph id")


def check_predicate(value: str) -> str:
    if not isinstance(value, str) or not value:
        raise ModelError("predicate must be non-empty text")
    if value in RESERVED_KEYS:
        raise ModelError(f"predicate {value!r} collides with a reserved document key")
    return value


@dataclass(frozen=True, order=True)
class Statement:
    entity: str
    predicate: str
    value: str

    def __post_init__(self) -> None:
        check_entity_name(self.entity)
        check_predicate(self.predicate)
        if not isinstance(self.value, str):
            raise ModelError("statement value must be text")


@dataclass(frozen=True, order=True)
class Revision:
    """Document revision; ordering is generation first, then digest text."""

    generation: int
    digest: str

    def __post_init__(self) -> None:
        if self.generation < 1:
            raise ModelError("revision generation must be positive")

    def __str__(self) -> str:
        return f"{self.generation}-{self.digest}"

    @classmethod
    def parse(cls, text: str) -> Revision:
        gen, sep, digest = text.partition("-")
        if not sep or not gen.isdigit() or not digest:
            raise ModelError(f"malformed revision {text!r}")
        return cls(int(gen), digest)


def _escape(part: str) -> str:
    return part.replace(_ESCAPE, _ESCAPE * 2).replace(DOC_ID_SEPARATOR, _ESCAPE + DOC_ID_SEPARATOR)


def make_doc_id(graph: str, entity: str) -> str:
    """Join graph and entity into a document id, escaping the separator."""
    check_graph_id(graph)
    check_entity_name(entity)
    return f"{_escape(graph)}{DOC_ID_SEPARATOR}{_escape(entity)}"


def split_doc_id(doc_id: str) -> tuple[str, str]:
    """Inverse of :func:`make_doc_id`."""
    parts: list[str] = []
    buf: list[str] = []
    it = iter(doc_id)
    for ch in it:
        if ch == _ESCAPE:
            nxt = next(it, None)
            if nxt is None:
                raise ModelError(f"dangling escape in doc id {doc_id!r}")
            buf.append(nxt)
        elif ch == DOC_ID_SEPARATOR:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf))
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise ModelError(f"malformed doc id {doc_id!r}")
    return parts[0], parts[1]


@dataclass(frozen=True)
class EntityDocument:
    entity: str
    graph: str
    # predicate -> values in insertion order, no duplicates
    properties: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    revision: Revision | None = None
    deleted: bool = False

    def __post_init__(self) -> None:
        check_entity_name(self.entity)
        check_graph_id(self.graph)
        props = {}
        for pred, values in self.properties.items():
            check_predicate(pred)
            vals = tuple(dict.fromkeys(values))
            if vals:
                props[pred] = vals
        if self.deleted and props:
            raise ModelError("a tombstone cannot carry properties")
        object.__setattr__(self, "properties", props)

    @property
    def doc_id(self) -> str:
        return make_doc_id(self.graph, self.entity)

    def statements(self) -> frozenset[Statement]:
        if self.deleted:
            return frozenset()
        return frozenset(
            Statement(self.entity, p, v) for p, vals in self.properties.items() for v in vals
        )

    def with_revision(self, revision: Revision) -> EntityDocument:
        return replace(self, revision=revision)

    def tombstone(self) -> EntityDocument:
        return EntityDocument(self.entity, self.graph, {}, self.revision, deleted=True)

    def same_body(self, other: EntityDocument) -> bool:
        return (
            self.entity == other.entity
            and self.graph == other.graph
            and self.deleted == other.deleted
            and {p: set(v) for p, v in self.properties.items()}
            == {p: set(v) for p, v in other.properties.items()}
        )

    # canonical serialization

    def to_dict(self) -> dict:
        out: dict = {
            "_id": self.doc_id,
            "entity": self.entity,
            "graph": self.graph,
            "rev": str(self.revision) if self.revision else None,
            "deleted": self.deleted,
        }
        for pred in sorted(self.properties):
            out[pred] = list(self.properties[pred])
        return out

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping) -> EntityDocument:
        props = {k: tuple(v) for k, v in data.items() if k not in RESERVED_KEYS}
        rev = data.get("rev")
        doc = cls(
            entity=data["entity"],
            graph=data["graph"],
            properties=props,
            revision=Revision.parse(rev) if rev else None,
            deleted=bool(data.get("deleted", False)),
        )
        if data.get("_id", doc.doc_id) != doc.doc_id:
            raise ModelError(f"_id {data['_id']!r} does not match graph/entity")
        return doc

    @classmethod
    def from_json(cls, text: str) -> EntityDocument:
        return cls.from_dict(json.loads(text))


def empty_document(graph: str, entity: str) -> EntityDocument:
    return EntityDocument(entity=entity, graph=graph)


def canonical_json(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def apply_statement(doc: EntityDocument, stmt: Statement, mode: str = "add") -> EntityDocument:
    """Insert or remove one (predicate, value) pair with set semantics.

    The revision is carried over unchanged.
    """
    if stmt.entity != doc.entity:
        raise EntityMismatchError(f"statement about {stmt.entity!r} applied to {doc.entity!r}")
    if doc.deleted:
        raise TombstoneWriteError(f"document {doc.doc_id!r} is deleted")
    props = {p: list(v) for p, v in doc.properties.items()}
    if mode == "add":
        values = props.setdefault(stmt.predicate, [])
        if stmt.value not in values:
            values.append(stmt.value)
    elif mode == "remove":
        values = props.get(stmt.predicate)
        if values and stmt.value in values:
            values.remove(stmt.value)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return replace(doc, properties={p: tuple(v) for p, v in props.items()})


def merge_statements(docs: Iterable[EntityDocument]) -> frozenset[Statement]:
    """Union of the statements of all live documents about one entity."""
    entity = None
    out: set[Statement] = set()
    for doc in docs:
        if entity is None:
            entity = doc.entity
        elif doc.entity != entity:
            raise EntityMismatchError(f"cannot merge documents about {entity!r} and {doc.entity!r}")
        out.update(doc.statements())
    return frozenset(out)


def compute_digest(doc: EntityDocument, parent: Revision | None) -> str:
    body = doc.to_dict()
    body.pop("rev")
    payload = canonical_json(body) + "\x00" + (str(parent) if parent else "")
    return hashlib.blake2b(payload.encode("utf-8"), digest_size=DIGEST_BYTES).hexdigest()


def next_revision(doc: EntityDocument, parent: Revision | None) -> Revision:
    gen = parent.generation + 1 if parent else 1
    return Revision(gen, compute_digest(doc, parent))
