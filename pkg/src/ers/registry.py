"""User-facing entity registry API for one node.

Local operations are synchronous. Remote search and cache population are
asynchronous message exchanges with linked peers; peers only ever answer from
their public and cache scopes.
"""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable

from .model import EntityDocument, Statement, apply_statement, empty_document, make_doc_id
from .store import ConflictError, ReplicationView, StoreScope, TriStore

if TYPE_CHECKING:
    from .netsim import Message, SimClock
    from .rpc import Rpc
    from .sync import SyncEngine

SEARCH_TIMEOUT_MS = 2000
WRITE_RETRIES = 3
USER_SCOPES = (StoreScope.PUBLIC, StoreScope.PRIVATE)


class RegistryError(Exception):
    pass


class AlreadyExistsError(RegistryError):
    pass


class NotFoundError(RegistryError):
    pass


@dataclass(frozen=True)
class EntityView:
    entity: str
    statements: frozenset[tuple[Statement, StoreScope, str]] = frozenset()

    def plain(self) -> frozenset[Statement]:
        return frozenset(s for s, _, _ in self.statements)

    def values(self, predicate: str) -> list[str]:
        return sorted({s.value for s, _, _ in self.statements if s.predicate == predicate})


@dataclass(frozen=True)
class Query:
    kind: str  # "by_name" or "by_property_value"
    pattern: str = "*"
    predicate: str = ""
    value: str = ""
    scope_mask: frozenset[StoreScope] = frozenset({StoreScope.PUBLIC, StoreScope.PRIVATE, StoreScope.CACHE})
    remote: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("by_name", "by_property_value"):
            raise ValueError(f"unknown query kind {self.kind!r}")
        if self.kind == "by_property_value" and not self.predicate:
            raise ValueError("property query needs a predicate")

    @classmethod
    def by_name(cls, pattern: str, **kw) -> Query:
        return cls("by_name", pattern=pattern, **kw)

    @classmethod
    def by_property(cls, predicate: str, value: str, **kw) -> Query:
        return cls("by_property_value", predicate=predicate, value=value, **kw)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "pattern": self.pattern, "predicate": self.predicate, "value": self.value}


@dataclass
class SearchResult:
    entities: list[str]
    partial: bool = False
    answered: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)


def _match(query: Query, docs: Iterable[EntityDocument]) -> set[str]:
    """Entities among ``docs`` that satisfy ``query``."""
    by_entity: dict[str, list[EntityDocument]] = {}
    for doc in docs:
        if not doc.deleted:
            by_entity.setdefault(doc.entity, []).append(doc)
    if query.kind == "by_name":
        return {e for e in by_entity if fnmatch.fnmatchcase(e, query.pattern)}
    return {e for e, ds in by_entity.items()
            if any(query.value in d.properties.get(query.predicate, ()) for d in ds)}


class Registry:
    def __init__(self, store: TriStore, clock: SimClock | None = None, rpc: Rpc | None = None,
                 engine: SyncEngine | None = None, search_timeout_ms: int = SEARCH_TIMEOUT_MS):
        self.store = store
        self.graph = store.owner
        self.clock = clock
        self.rpc = rpc
        self.engine = engine
        self.search_timeout_ms = search_timeout_ms
        self._view = ReplicationView(store)
        self.searches_completed = 0
        if rpc is not None:
            rpc.handlers["Search"] = self._serve_search
            rpc.handlers["Fetch"] = self._serve_fetch
        if engine is not None:
            engine.on_link_ready.append(self._on_link_ready)

    # writes

    @staticmethod
    def _scope(scope) -> StoreScope:
        scope = StoreScope(scope)
        if scope not in USER_SCOPES:
            raise RegistryError("user writes go to the public or private scope")
        return scope

    def create_entity(self, name: str, scope=StoreScope.PUBLIC) -> None:
        scope = self._scope(scope)
        doc_id = make_doc_id(self.graph, name)
        head = self.store.head(scope, doc_id)
        if head is not None and not head.deleted:
            raise AlreadyExistsError(name)
        self.store.put(scope, empty_document(self.graph, name), head.revision if head else None)

    def _edit(self, stmt: Statement, scope: StoreScope, mode: str) -> None:
        doc_id = make_doc_id(self.graph, stmt.entity)
        for attempt in range(WRITE_RETRIES):
            head = self.store.head(scope, doc_id)
            live = head is not None and not head.deleted
            if not live:
                if mode == "remove":
                    raise NotFoundError(f"{stmt.entity}: no local document")
                base = empty_document(self.graph, stmt.entity)
            else:
                base = head
            if mode == "remove" and stmt.value not in base.properties.get(stmt.predicate, ()):
                raise NotFoundError(f"{stmt.predicate}={stmt.value!r} not stated about {stmt.entity}")
            updated = apply_statement(base, stmt, mode)
            try:
                self.store.put(scope, updated, head.revision if head else None)
                return
            except ConflictError:
                if attempt == WRITE_RETRIES - 1:
                    raise

    def add_statement(self, stmt: Statement, scope=StoreScope.PUBLIC) -> None:
        self._edit(stmt, self._scope(scope), "add")

    def remove_statement(self, stmt: Statement, scope=StoreScope.PUBLIC) -> None:
        self._edit(stmt, self._scope(scope), "remove")

    def delete_entity(self, name: str, scope=StoreScope.PUBLIC) -> None:
        scope = self._scope(scope)
        doc_id = make_doc_id(self.graph, name)
        head = self.store.head(scope, doc_id)
        if head is None or head.deleted:
            raise NotFoundError(name)
        self.store.delete(scope, doc_id, head.revision)

    # reads

    def documents_about(self, name: str, scopes: Iterable[StoreScope] = (StoreScope.PUBLIC, StoreScope.PRIVATE,
                                                                         StoreScope.CACHE)) -> list[tuple[StoreScope, EntityDocument]]:
        out = []
        for scope in scopes:
            for doc in self.store.documents(scope):
                if doc.entity == name:
                    out.append((scope, doc))
        return out

    def get_entity(self, name: str) -> EntityView:
        items = set()
        for scope, doc in self.documents_about(name):
            for stmt in doc.statements():
                items.add((stmt, scope, doc.graph))
        return EntityView(name, frozenset(items))

    def local_search(self, query: Query) -> list[str]:
        found: set[str] = set()
        for scope in sorted(query.scope_mask):
            found |= _match(query, self.store.documents(scope))
        return sorted(found)

    def search(self, query: Query, on_done: Callable[[SearchResult], None] | None = None) -> SearchResult | None:
        """Local search; with ``query.remote`` also ask every linked peer.

        Remote results are delivered to ``on_done`` once all peers answered or
        the timeout fired, flagged partial in the latter case.
        """
        local = self.local_search(query)
        if not query.remote:
            result = SearchResult(local)
            if on_done is not None:
                on_done(result)
            return result
        if self.rpc is None or self.engine is None:
            raise RegistryError("remote search needs a networked node")
        peers = self.engine.linked_peers()
        found = set(local)
        answered: list[str] = []
        state = {"done": False}

        def finish() -> None:
            if state["done"]:
                return
            state["done"] = True
            timer.cancel()
            self.searches_completed += 1
            missing = sorted(set(peers) - set(answered))
            if on_done is not None:
                on_done(SearchResult(sorted(found), bool(missing), sorted(answered), missing))

        def answer(peer: str, body: dict) -> None:
            if state["done"]:
                return
            found.update(body["entities"])
            answered.append(peer)
            if len(answered) == len(peers):
                finish()

        timer = self.clock.after(self.search_timeout_ms, finish)
        for peer in peers:
            self.rpc.request(peer, "Search", query.to_dict(), lambda b, p=peer: answer(p, b),
                             extra_timeout_ms=self.search_timeout_ms)
        if not peers:
            finish()
        return None

    # cache management

    def interest(self) -> list[str]:
        return list(self.store.local.get("interest", []))

    def _set(self, key: str, values: Iterable[str]) -> None:
        self.store.local[key] = sorted(set(values))

    def cache_entity(self, name: str) -> None:
        self._set("interest", self.interest() + [name])
        self._set("pending_fetch", self.store.local.get("pending_fetch", []) + [name])
        if self.engine is not None:
            for peer in self.engine.linked_peers():
                self._fetch(peer)

    def uncache_entity(self, name: str) -> None:
        self._set("interest", (e for e in self.interest() if e != name))
        self._set("pending_fetch", (e for e in self.store.local.get("pending_fetch", []) if e != name))
        for doc in list(self.store.documents(StoreScope.CACHE, include_deleted=True)):
            if doc.entity == name:
                self.store.purge(StoreScope.CACHE, doc.doc_id)

    def _on_link_ready(self, peer: str) -> None:
        self._fetch(peer)

    def _fetch(self, peer: str) -> None:
        """Copy what ``peer`` already holds about newly cached entities.

        Replication only forwards changes after its checkpoint, so documents
        that reached the peer before the entity became interesting need this
        one-off copy. An answer from a bridge (which holds everything) settles
        the entity; in a bridgeless mesh it stays pending so each new peer is
        asked as well.
        """
        pending = self.store.local.get("pending_fetch", [])
        if not pending or self.rpc is None:
            return
        wanted = list(pending)

        def got(body: dict) -> None:
            interest = set(self.interest())
            for raw in body["docs"]:
                doc = EntityDocument.from_dict(raw)
                if doc.graph != self.graph and doc.entity in interest:
                    self._view.force_put(StoreScope.CACHE, doc)
            if body["bridge"]:
                left = set(self.store.local.get("pending_fetch", [])) - set(wanted)
                self._set("pending_fetch", left)

        self.rpc.request(peer, "Fetch", {"entities": wanted}, got)

    # server side

    def _serve_search(self, msg: Message) -> dict:
        body = msg.payload["body"]
        query = Query(body["kind"], body["pattern"], body["predicate"], body["value"])
        found: set[str] = set()
        for scope in (StoreScope.PUBLIC, StoreScope.CACHE):
            found |= _match(query, self._view.documents(scope))
        return {"entities": sorted(found)}

    def _serve_fetch(self, msg: Message) -> dict:
        wanted = set(msg.payload["body"]["entities"])
        docs = []
        for scope in (StoreScope.PUBLIC, StoreScope.CACHE):
            for doc in self._view.documents(scope, include_deleted=True):
                if doc.entity in wanted and doc.graph != msg.src:
                    docs.append(doc.to_dict())
        bridge = self.engine is not None and self.engine.role == "bridge"
        return {"docs": docs, "bridge": bridge}

