"""Simulated zeroconf service discovery.

Each node announces one service record on its current network. A browsing
node resolves pending records one at a time, ``per_peer_delay_ms`` apiece, so
the time to a full peer list grows linearly with the number of peers.
Records of departed nodes linger for ``ttl_ms`` before browsers drop them
(there is no goodbye packet on power loss or when a truck drives off).
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass
from typing import Callable

from .netsim import SimClock, TraceLog, derive_seed

PER_PEER_DELAY_MS = 75
RECORD_TTL_MS = 2000
SUFFIX_LENGTH = 6
_ALPHABET = string.ascii_lowercase + string.digits


@dataclass(frozen=True)
class ServiceRecord:
    service_name: str
    node: str
    role: str
    network: str


PeerCallback = Callable[[ServiceRecord], None]


class _Browser:
    def __init__(self, node: str, on_appeared: PeerCallback, on_vanished: PeerCallback, rng: random.Random):
        self.node = node
        self.on_appeared = on_appeared
        self.on_vanished = on_vanished
        self.rng = rng
        self.visible: dict[str, ServiceRecord] = {}
        self.busy_until = 0
        self.generation = 0  # bumped on network change; stale events check it


class Discovery:
    def __init__(self, clock: SimClock, seed: int = 0, trace: TraceLog | None = None,
                 per_peer_delay_ms: int = PER_PEER_DELAY_MS, ttl_ms: int = RECORD_TTL_MS):
        self.clock = clock
        self.trace = trace if trace is not None else TraceLog()
        self.per_peer_delay_ms = per_peer_delay_ms
        self.ttl_ms = ttl_ms
        self._rng = random.Random(derive_seed(seed, "discovery"))
        self._seed = seed
        self._used_names: set[str] = set()
        self.records: dict[str, ServiceRecord] = {}  # node -> live record
        self._browsers: dict[str, _Browser] = {}
        self._hostnames: dict[str, tuple[str, str]] = {}
        self._names: dict[str, str] = {}  # survives moves, replaced on start

    def _fresh_name(self, hostname: str) -> str:
        while True:
            suffix = "".join(self._rng.choice(_ALPHABET) for _ in range(SUFFIX_LENGTH))
            name = f"{hostname}-{suffix}"
            if name not in self._used_names:
                self._used_names.add(name)
                return name

    # node lifecycle

    def start(self, node: str, role: str, hostname: str, network: str | None,
              on_appeared: PeerCallback, on_vanished: PeerCallback) -> ServiceRecord | None:
        """Start a node's daemon: fresh service name, browse, announce."""
        rng = random.Random(derive_seed(self._seed, "browser", node, len(self._used_names)))
        self._browsers[node] = _Browser(node, on_appeared, on_vanished, rng)
        self._hostnames[node] = (hostname, role)
        self._names.pop(node, None)
        if network is None:
            return None
        return self.announce(node, network)

    def stop(self, node: str) -> None:
        """Abrupt stop: the browser disappears, peers expire the record after TTL."""
        self._browsers.pop(node, None)
        self._withdraw(node)

    def announce(self, node: str, network: str, name: str | None = None) -> ServiceRecord:
        hostname, role = self._hostnames[node]
        name = name or self._names.get(node) or self._fresh_name(hostname)
        self._names[node] = name
        record = ServiceRecord(name, node, role, network)
        self.records[node] = record
        self.trace.record(self.clock.now, "announce", node, network, record.service_name)
        for other, rec in sorted(self.records.items()):
            if other != node and rec.network == network and other in self._browsers:
                self._enqueue(self._browsers[other], [record])
        own = self._browsers.get(node)
        if own is not None:
            peers = [r for n, r in sorted(self.records.items()) if n != node and r.network == network]
            own.rng.shuffle(peers)
            self._enqueue(own, peers)
        return record

    def on_network_change(self, node: str, new_network: str | None) -> None:
        self._withdraw(node)
        browser = self._browsers.get(node)
        if browser is not None:
            browser.generation += 1
            browser.busy_until = self.clock.now
            for rec in sorted(browser.visible.values(), key=lambda r: r.service_name):
                self._emit_vanished(browser, rec)
            browser.visible.clear()
        if new_network is not None and node in self._browsers:
            self.announce(node, new_network)

    def _withdraw(self, node: str) -> None:
        record = self.records.pop(node, None)
        if record is None:
            return
        self.trace.record(self.clock.now, "withdraw", node, record.network, record.service_name)
        for other in sorted(self._browsers):
            browser = self._browsers[other]
            if record.service_name in browser.visible:
                self.clock.after(self.ttl_ms, self._expire, browser, record, browser.generation)

    # browsing

    def _enqueue(self, browser: _Browser, records: list[ServiceRecord]) -> None:
        for rec in records:
            due = max(self.clock.now, browser.busy_until) + self.per_peer_delay_ms
            browser.busy_until = due
            self.clock.at(due, self._resolve, browser, rec, browser.generation)

    def _live(self, rec: ServiceRecord) -> bool:
        return self.records.get(rec.node) == rec

    def _resolve(self, browser: _Browser, rec: ServiceRecord, generation: int) -> None:
        if self._browsers.get(browser.node) is not browser or generation != browser.generation:
            return
        own = self.records.get(browser.node)
        if not self._live(rec) or own is None or own.network != rec.network:
            return
        if rec.service_name in browser.visible:
            return
        browser.visible[rec.service_name] = rec
        self.trace.record(self.clock.now, "peer_up", browser.node, rec.node, rec.service_name)
        browser.on_appeared(rec)

    def _expire(self, browser: _Browser, rec: ServiceRecord, generation: int) -> None:
        if self._browsers.get(browser.node) is not browser or generation != browser.generation:
            return
        if self._live(rec):
            return
        if browser.visible.pop(rec.service_name, None) is not None:
            self._emit_vanished(browser, rec)

    def _emit_vanished(self, browser: _Browser, rec: ServiceRecord) -> None:
        self.trace.record(self.clock.now, "peer_down", browser.node, rec.node, rec.service_name)
        browser.on_vanished(rec)

    def browse(self, node: str) -> list[ServiceRecord]:
        browser = self._browsers.get(node)
        if browser is None:
            return []
        return sorted(browser.visible.values(), key=lambda r: r.service_name)
