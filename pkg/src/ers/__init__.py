"""Entity registry with offline-first replication over a simulated network."""

from .model import EntityDocument, Revision, Statement, make_doc_id, merge_statements
from .netsim import Impairment, Network, SimClock
from .node import Node, World
from .registry import Query, Registry
from .store import StoreScope, TriStore
from .sync import LinkKind, SyncConfig

__all__ = [
    "EntityDocument", "Impairment", "LinkKind", "Network", "Node", "Query", "Registry",
    "Revision", "SimClock", "Statement", "StoreScope", "SyncConfig", "TriStore", "World",
    "make_doc_id", "merge_statements",
]
