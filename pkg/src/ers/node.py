"""Simulated nodes and the world they live in.

A node's TriStore is its disk: it survives kills. Everything else (RPC
endpoint, replication engine, registry session, discovery daemon) is runtime
state rebuilt on every start.
"""

from __future__ import annotations

from dataclasses import dataclass

from .discovery import Discovery
from .netsim import Network, SimClock, TraceLog
from .registry import Registry
from .rpc import Rpc
from .store import TriStore
from .sync import ROLES, SyncConfig, SyncEngine


@dataclass
class _Runtime:
    rpc: Rpc
    engine: SyncEngine
    registry: Registry


class World:
    """Clock, network, discovery and trace shared by all nodes of one run."""

    def __init__(self, seed: int = 0, config: SyncConfig | None = None):
        self.seed = seed
        self.config = config or SyncConfig()
        self.clock = SimClock()
        self.trace = TraceLog()
        self.network = Network(self.clock, seed, self.trace)
        self.discovery = Discovery(self.clock, seed, self.trace)
        self.nodes: dict[str, Node] = {}

    def add_node(self, node_id: str, role: str, network: str | None, hostname: str | None = None,
                 max_cache_docs: int | None = None) -> Node:
        if node_id in self.nodes:
            raise ValueError(f"duplicate node {node_id!r}")
        node = Node(self, node_id, role, hostname or node_id, network, max_cache_docs)
        self.nodes[node_id] = node
        return node

    def run_until(self, time_ms: int) -> None:
        self.clock.advance(time_ms)


class Node:
    def __init__(self, world: World, node_id: str, role: str, hostname: str, network: str | None,
                 max_cache_docs: int | None = None):
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        self.world = world
        self.id = node_id
        self.role = role
        self.hostname = hostname
        self.location = network  # where the node physically is, even while down
        self.store = TriStore(node_id, max_cache_docs)
        self.runtime: _Runtime | None = None
        self.boots = 0

    @property
    def alive(self) -> bool:
        return self.runtime is not None

    @property
    def registry(self) -> Registry:
        if self.runtime is None:
            raise RuntimeError(f"node {self.id} is down")
        return self.runtime.registry

    @property
    def engine(self) -> SyncEngine:
        if self.runtime is None:
            raise RuntimeError(f"node {self.id} is down")
        return self.runtime.engine

    def start(self) -> None:
        if self.runtime is not None:
            return
        w = self.world
        cfg = w.config
        rpc = Rpc(self.id, w.network, w.clock, cfg.retry_timeout_ms, cfg.initial_timeout_ms)
        engine = SyncEngine(self.id, self.role, self.store, rpc, w.clock, cfg, w.trace)
        registry = Registry(self.store, w.clock, rpc, engine)
        self.runtime = _Runtime(rpc, engine, registry)
        self.boots += 1
        w.network.attach(self.id, rpc.receive)
        w.network.set_membership(self.id, self.location)
        w.discovery.start(self.id, self.role, self.hostname, self.location,
                          engine.on_peer_appeared, engine.on_peer_vanished)

    def kill(self) -> None:
        """Abrupt power loss: no goodbye, runtime state is gone, disk stays."""
        rt = self.runtime
        if rt is None:
            return
        w = self.world
        w.trace.record(w.clock.now, "kill", self.id)
        self.runtime = None
        rt.rpc.close()
        rt.engine.shutdown()
        self.store.drop_listeners()
        w.discovery.stop(self.id)
        w.network.detach(self.id)
        w.network.set_membership(self.id, None)

    def restart(self) -> None:
        self.world.trace.record(self.world.clock.now, "restart", self.id)
        self.start()

    def move(self, network: str | None) -> None:
        """Physically move to another network (``None`` = out of range)."""
        self.location = network
        if self.runtime is None:
            return
        self.world.network.set_membership(self.id, network)
        self.world.discovery.on_network_change(self.id, network)
