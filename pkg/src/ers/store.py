"""Per-node versioned document store with public, private and cache scopes.

Writes are committed synchronously; there is no write-back buffer, so the
in-memory state *is* the durable state and survives a simulated crash. Only
head revisions are kept (plus the set of revision ids ever seen per document,
which is what ``revs_diff`` needs).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Iterator

from .model import EntityDocument, Revision, next_revision, split_doc_id


class StoreScope(str, Enum):
    PUBLIC = "public"
    PRIVATE = "private"
    CACHE = "cache"


SCOPES = (StoreScope.PUBLIC, StoreScope.PRIVATE, StoreScope.CACHE)


class StoreError(Exception):
    pass


class ConflictError(StoreError):
    pass


class NotFoundError(StoreError):
    pass


class PrivacyError(StoreError):
    """Raised when replication code touches the private scope."""


@dataclass(frozen=True)
class ChangeEntry:
    seq: int
    doc_id: str
    revision: Revision
    deleted: bool

    @property
    def graph(self) -> str:
        return split_doc_id(self.doc_id)[0]

    @property
    def entity(self) -> str:
        return split_doc_id(self.doc_id)[1]


@dataclass(frozen=True)
class ChangeBatch:
    since: int
    entries: tuple[ChangeEntry, ...]
    last_seq: int


@dataclass
class _ScopeDB:
    docs: dict[str, EntityDocument] = field(default_factory=dict)
    known: dict[str, set[Revision]] = field(default_factory=dict)
    seq: int = 0
    # index i holds the entry with seq i+1
    log: list[tuple[str, Revision, bool]] = field(default_factory=list)
    latest_seq: dict[str, int] = field(default_factory=dict)

    def append(self, doc: EntityDocument) -> int:
        self.seq += 1
        head = self.docs[doc.doc_id]
        self.log.append((doc.doc_id, head.revision, head.deleted))
        self.latest_seq[doc.doc_id] = self.seq
        return self.seq


Listener = Callable[[StoreScope, int], None]


def _scope(scope) -> StoreScope:
    return scope if isinstance(scope, StoreScope) else StoreScope(scope)


class TriStore:
    """The three databases of one node.

    ``local`` holds non-replicated metadata (replication checkpoints, cache
    interest) and is persisted together with the documents.
    """

    def __init__(self, owner: str, max_cache_docs: int | None = None):
        self.owner = owner
        self.max_cache_docs = max_cache_docs
        self._dbs = {s: _ScopeDB() for s in SCOPES}
        self.local: dict[str, object] = {}
        self.reads: Counter = Counter()
        self._listeners: dict[int, tuple[StoreScope, Listener]] = {}
        self._next_token = 0

    # listeners are volatile; a crashed node's runtime drops them

    def subscribe(self, scope, callback: Listener) -> int:
        self._next_token += 1
        self._listeners[self._next_token] = (_scope(scope), callback)
        return self._next_token

    def unsubscribe(self, token: int) -> None:
        self._listeners.pop(token, None)

    def drop_listeners(self) -> None:
        self._listeners.clear()

    def _notify(self, scope: StoreScope, seq: int) -> None:
        for s, cb in list(self._listeners.values()):
            if s is scope:
                cb(scope, seq)

    def _db(self, scope, reading: bool = True) -> _ScopeDB:
        scope = _scope(scope)
        if reading:
            self.reads[scope] += 1
        return self._dbs[scope]

    # writes

    def put(self, scope, doc: EntityDocument, expected_parent: Revision | None = None) -> Revision:
        scope = _scope(scope)
        db = self._db(scope, reading=False)
        current = db.docs.get(doc.doc_id)
        if current is not None and not current.deleted:
            if expected_parent != current.revision:
                raise ConflictError(
                    f"{doc.doc_id!r}: expected parent {expected_parent}, head is {current.revision}"
                )
        elif current is not None:
            if expected_parent not in (None, current.revision):
                raise ConflictError(f"{doc.doc_id!r}: stale parent for recreate")
        elif expected_parent is not None:
            raise ConflictError(f"{doc.doc_id!r}: no such document to update")
        parent = current.revision if current is not None else None
        body = EntityDocument(doc.entity, doc.graph, doc.properties, None, doc.deleted)
        rev = next_revision(body, parent)
        stored = body.with_revision(rev)
        db.docs[doc.doc_id] = stored
        db.known.setdefault(doc.doc_id, set()).add(rev)
        seq = db.append(stored)
        self._notify(scope, seq)
        return rev

    def delete(self, scope, doc_id: str, expected_parent: Revision | None) -> Revision:
        scope = _scope(scope)
        db = self._db(scope, reading=False)
        current = db.docs.get(doc_id)
        if current is None or current.deleted:
            raise NotFoundError(doc_id)
        if expected_parent != current.revision:
            raise ConflictError(f"{doc_id!r}: expected parent {expected_parent}, head is {current.revision}")
        return self.put(scope, current.tombstone(), expected_parent)

    def force_put(self, scope, doc: EntityDocument) -> bool:
        """Store a replicated revision without a parent check.

        Returns True when the revision was new to this scope. The winning head
        is the greatest revision seen.
        """
        scope = _scope(scope)
        if scope is StoreScope.PRIVATE:
            raise PrivacyError("replicated writes never target the private scope")
        if doc.revision is None:
            raise ValueError("force_put needs a revision")
        db = self._db(scope, reading=False)
        known = db.known.setdefault(doc.doc_id, set())
        if doc.revision in known:
            return False
        known.add(doc.revision)
        current = db.docs.get(doc.doc_id)
        if current is None or doc.revision > current.revision:
            db.docs[doc.doc_id] = doc
        seq = db.append(doc)
        if scope is StoreScope.CACHE:
            self._evict()
        self._notify(scope, seq)
        return True

    def purge(self, scope, doc_id: str) -> None:
        """Forget a document locally; purges are not replicated."""
        db = self._db(scope, reading=False)
        db.docs.pop(doc_id, None)
        db.known.pop(doc_id, None)
        db.latest_seq.pop(doc_id, None)

    def _evict(self) -> None:
        if self.max_cache_docs is None:
            return
        db = self._dbs[StoreScope.CACHE]
        while len(db.docs) > self.max_cache_docs:
            oldest = min(db.latest_seq, key=db.latest_seq.__getitem__)
            self.purge(StoreScope.CACHE, oldest)

    # reads

    def get(self, scope, doc_id: str) -> EntityDocument | None:
        doc = self._db(scope).docs.get(doc_id)
        if doc is None or doc.deleted:
            return None
        return doc

    def head(self, scope, doc_id: str) -> EntityDocument | None:
        """Current head including tombstones."""
        return self._db(scope).docs.get(doc_id)

    def documents(self, scope, include_deleted: bool = False) -> Iterator[EntityDocument]:
        db = self._db(scope)
        for doc_id in sorted(db.docs):
            doc = db.docs[doc_id]
            if include_deleted or not doc.deleted:
                yield doc

    def doc_ids(self, scope) -> frozenset[str]:
        db = self._db(scope)
        return frozenset(d for d, doc in db.docs.items() if not doc.deleted)

    def seq(self, scope) -> int:
        return self._dbs[_scope(scope)].seq

    def changes_since(self, scope, since: int = 0, limit: int | None = None) -> ChangeBatch:
        if since < 0:
            raise ValueError("since must be non-negative")
        db = self._db(scope)
        entries: list[ChangeEntry] = []
        for idx in range(since, db.seq):
            seq = idx + 1
            doc_id = db.log[idx][0]
            if db.latest_seq.get(doc_id) != seq:
                continue
            head = db.docs[doc_id]
            entries.append(ChangeEntry(seq, doc_id, head.revision, head.deleted))
            if limit is not None and len(entries) >= limit:
                break
        last = entries[-1].seq if entries else since
        return ChangeBatch(since, tuple(entries), last)

    def revs_diff(self, scope, offered: Iterable[tuple[str, Revision]]) -> list[tuple[str, Revision]]:
        db = self._db(scope)
        return [(d, r) for d, r in offered if r not in db.known.get(d, ())]

    def change_log(self, scope) -> list[tuple[int, str, Revision, bool]]:
        db = self._db(scope)
        return [(i + 1, d, r, x) for i, (d, r, x) in enumerate(db.log)]

    # persistence

    def snapshot(self) -> str:
        data = {"owner": self.owner, "local": self.local, "scopes": {}}
        for scope in SCOPES:
            db = self._dbs[scope]
            data["scopes"][scope.value] = {
                "seq": db.seq,
                "docs": [db.docs[d].to_dict() for d in sorted(db.docs)],
                "known": {d: sorted(str(r) for r in db.known[d]) for d in sorted(db.known)},
                "log": [[d, str(r), x] for d, r, x in db.log],
                "latest": {d: db.latest_seq[d] for d in sorted(db.latest_seq)},
            }
        return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def load(cls, text: str, max_cache_docs: int | None = None) -> TriStore:
        data = json.loads(text)
        store = cls(data["owner"], max_cache_docs)
        store.local = data["local"]
        for scope in SCOPES:
            raw = data["scopes"][scope.value]
            db = store._dbs[scope]
            db.seq = raw["seq"]
            db.docs = {d["_id"]: EntityDocument.from_dict(d) for d in raw["docs"]}
            db.known = {d: {Revision.parse(r) for r in revs} for d, revs in raw["known"].items()}
            db.log = [(d, Revision.parse(r), x) for d, r, x in raw["log"]]
            db.latest_seq = dict(raw["latest"])
        return store

    def state_equals(self, other: TriStore) -> bool:
        return self.snapshot() == other.snapshot()


class ReplicationView:
    """The slice of a TriStore visible to replication: public and cache only."""

    _allowed = (StoreScope.PUBLIC, StoreScope.CACHE)

    def __init__(self, store: TriStore):
        self._store = store

    @property
    def owner(self) -> str:
        return self._store.owner

    def _check(self, scope) -> StoreScope:
        scope = _scope(scope)
        if scope not in self._allowed:
            raise PrivacyError(f"replication may not access the {scope.value} scope")
        return scope

    def changes_since(self, scope, since: int, limit: int | None = None) -> ChangeBatch:
        return self._store.changes_since(self._check(scope), since, limit)

    def revs_diff(self, scope, offered):
        return self._store.revs_diff(self._check(scope), offered)

    def head(self, scope, doc_id: str) -> EntityDocument | None:
        return self._store.head(self._check(scope), doc_id)

    def force_put(self, scope, doc: EntityDocument) -> bool:
        return self._store.force_put(self._check(scope), doc)

    def doc_ids(self, scope) -> frozenset[str]:
        return self._store.doc_ids(self._check(scope))

    def documents(self, scope, include_deleted: bool = False):
        return self._store.documents(self._check(scope), include_deleted)

    def seq(self, scope) -> int:
        return self._store.seq(self._check(scope))

    def subscribe(self, scope, callback: Listener) -> int:
        return self._store.subscribe(self._check(scope), callback)

    def unsubscribe(self, token: int) -> None:
        self._store.unsubscribe(token)
