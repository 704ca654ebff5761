"""Deterministic discrete-event network.

Time is an integer number of milliseconds. Every directed link draws from its
own seeded RNG stream, so adding traffic on one link never perturbs another.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import json
import random
from dataclasses import dataclass
from typing import Any, Callable

from .model import canonical_json

DUPLICATE_GAP_MS = 1
REORDER_FLUSH_MS = 100


def derive_seed(*parts: Any) -> int:
    text = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "big")


def payload_digest(payload: Any) -> str:
    return hashlib.blake2b(canonical_json(payload).encode("utf-8"), digest_size=8).hexdigest()


class Event:
    __slots__ = ("time", "callback", "args", "cancelled")

    def __init__(self, time: int, callback: Callable, args: tuple):
        self.time = time
        self.callback = callback
        self.args = args
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class SimClock:
    def __init__(self) -> None:
        self.now = 0
        self._queue: list[tuple[int, int, Event]] = []
        self._counter = itertools.count()

    def at(self, time: int, callback: Callable, *args) -> Event:
        if time < self.now:
            raise ValueError(f"cannot schedule in the past ({time} < {self.now})")
        ev = Event(int(time), callback, args)
        heapq.heappush(self._queue, (ev.time, next(self._counter), ev))
        return ev

    def after(self, delay: int, callback: Callable, *args) -> Event:
        return self.at(self.now + int(delay), callback, *args)

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._queue if not ev.cancelled)

    def advance(self, until: int | None = None) -> int:
        """Fire events in (time, enqueue order) until ``until`` or until idle."""
        fired = 0
        q = self._queue
        while q:
            t, _, ev = q[0]
            if until is not None and t > until:
                break
            heapq.heappop(q)
            if ev.cancelled:
                continue
            self.now = t
            ev.callback(*ev.args)
            fired += 1
        if until is not None and until > self.now:
            self.now = until
        return fired


@dataclass(frozen=True)
class Impairment:
    latency_ms: int = 0
    loss: float = 0.0
    corruption: float = 0.0
    duplication: float = 0.0
    reorder: float = 0.0

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError("latency must be non-negative")
        for name in ("loss", "corruption", "duplication", "reorder"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} probability {p} outside [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> Impairment:
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "latency_ms": self.latency_ms,
            "loss": self.loss,
            "corruption": self.corruption,
            "duplication": self.duplication,
            "reorder": self.reorder,
        }


PERFECT = Impairment()


@dataclass
class Message:
    src: str
    dst: str
    kind: str
    payload: dict
    link: str = "-"
    digest: str = ""
    network: str | None = None
    corrupted: bool = False

    def __post_init__(self) -> None:
        if not self.digest:
            self.digest = payload_digest(self.payload)

    def intact(self) -> bool:
        return not self.corrupted and payload_digest(self.payload) == self.digest


class TraceLog:
    """Newline-delimited JSON records with a fixed field order."""

    def __init__(self) -> None:
        self.lines: list[str] = []

    def record(self, time: int, kind: str, src: str = "-", dst: str = "-",
               link: str = "-", digest: str = "-", outcome: str = "-") -> None:
        self.lines.append(json.dumps([time, kind, src, dst, link, digest, outcome], ensure_ascii=False))

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)

    def __len__(self) -> int:
        return len(self.lines)


@dataclass
class NetStats:
    sent: int = 0
    lost: int = 0
    unreachable: int = 0
    corrupted: int = 0
    duplicated: int = 0
    reordered: int = 0
    delivered: int = 0
    dropped_in_flight: int = 0
    in_flight: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class _Held:
    message: Message
    flush: Event


class Network:
    """Networks, membership and per-directed-link impairments.

    A node belongs to at most one network at a time (``None`` = offline).
    Messages are only deliverable between nodes on the same network; a
    delivery whose receiver has left the sending network is dropped.
    """

    def __init__(self, clock: SimClock, seed: int = 0, trace: TraceLog | None = None):
        self.clock = clock
        self.seed = seed
        self.trace = trace if trace is not None else TraceLog()
        self.membership: dict[str, str | None] = {}
        self.default_impairment: Impairment = PERFECT
        self.network_impairment: dict[str, Impairment] = {}
        self.link_impairment: dict[tuple[str, str], Impairment] = {}
        self.handlers: dict[str, Callable[[Message], None]] = {}
        self.observers: list[Callable[[Message], None]] = []
        self.stats = NetStats()
        self._rngs: dict[tuple[str, str], random.Random] = {}
        self._held: dict[tuple[str, str], _Held] = {}

    # topology

    def attach(self, node: str, handler: Callable[[Message], None]) -> None:
        self.handlers[node] = handler
        self.membership.setdefault(node, None)

    def detach(self, node: str) -> None:
        self.handlers.pop(node, None)

    def set_membership(self, node: str, network: str | None) -> None:
        old = self.membership.get(node)
        self.membership[node] = network
        if old != network:
            self.trace.record(self.clock.now, "membership", node, network or "-", outcome=old or "-")

    def network_of(self, node: str) -> str | None:
        return self.membership.get(node)

    def members(self, network: str) -> list[str]:
        return sorted(n for n, net in self.membership.items() if net == network)

    def set_impairment(self, imp: Impairment, *, network: str | None = None,
                       link: tuple[str, str] | None = None) -> None:
        if link is not None:
            self.link_impairment[link] = imp
        elif network is not None:
            self.network_impairment[network] = imp
        else:
            self.default_impairment = imp
        where = f"{link[0]}>{link[1]}" if link else (network or "*")
        self.trace.record(self.clock.now, "impairment", where,
                          outcome=json.dumps(imp.to_dict(), sort_keys=True))

    def clear_link_impairment(self, link: tuple[str, str]) -> None:
        self.link_impairment.pop(link, None)

    def impairment_for(self, src: str, dst: str) -> Impairment:
        imp = self.link_impairment.get((src, dst))
        if imp is not None:
            return imp
        net = self.membership.get(src)
        if net is not None and net in self.network_impairment:
            return self.network_impairment[net]
        return self.default_impairment

    def _rng(self, src: str, dst: str) -> random.Random:
        key = (src, dst)
        rng = self._rngs.get(key)
        if rng is None:
            rng = self._rngs[key] = random.Random(derive_seed(self.seed, "link", src, dst))
        return rng

    # transport

    def send(self, message: Message) -> None:
        clock, trace, stats = self.clock, self.trace, self.stats
        src, dst = message.src, message.dst
        stats.sent += 1
        for obs in self.observers:
            obs(message)
        net = self.membership.get(src)
        if net is None or self.membership.get(dst) != net:
            stats.unreachable += 1
            trace.record(clock.now, "send", src, dst, message.link, message.digest, "unreachable")
            return
        message.network = net
        imp = self.impairment_for(src, dst)
        rng = self._rng(src, dst)
        # fixed draw count keeps streams aligned across parameter values
        r_loss, r_corrupt, r_dup, r_reorder = rng.random(), rng.random(), rng.random(), rng.random()
        if r_loss < imp.loss:
            stats.lost += 1
            trace.record(clock.now, "send", src, dst, message.link, message.digest, "lost")
            return
        if r_corrupt < imp.corruption:
            message.corrupted = True
        due = clock.now + imp.latency_ms
        trace.record(clock.now, "send", src, dst, message.link, message.digest,
                     "corrupt" if message.corrupted else "sent")

        key = (src, dst)
        held = self._held.pop(key, None)
        if held is not None and not held.flush.cancelled:
            held.flush.cancel()
            self._schedule(held.message, due + DUPLICATE_GAP_MS)

        if r_reorder < imp.reorder:
            stats.reordered += 1
            flush = clock.at(due + REORDER_FLUSH_MS, self._flush, key)
            self._held[key] = _Held(message, flush)
        else:
            self._schedule(message, due)
        if r_dup < imp.duplication:
            stats.duplicated += 1
            copy = Message(src, dst, message.kind, message.payload, message.link,
                           message.digest, net, message.corrupted)
            self._schedule(copy, due + DUPLICATE_GAP_MS, duplicate=True)

    def _flush(self, key: tuple[str, str]) -> None:
        held = self._held.pop(key, None)
        if held is not None:
            self._schedule(held.message, self.clock.now)

    def _schedule(self, message: Message, due: int, duplicate: bool = False) -> None:
        self.stats.in_flight += 1
        self.clock.at(due, self._deliver, message, duplicate)

    def _deliver(self, message: Message, duplicate: bool) -> None:
        stats, trace = self.stats, self.trace
        stats.in_flight -= 1
        now = self.clock.now
        if self.membership.get(message.dst) != message.network or message.dst not in self.handlers:
            stats.dropped_in_flight += 1
            trace.record(now, "deliver", message.src, message.dst, message.link, message.digest, "gone")
            return
        if not message.intact():
            stats.corrupted += 1
            trace.record(now, "deliver", message.src, message.dst, message.link, message.digest, "discarded")
            return
        stats.delivered += 1
        trace.record(now, "deliver", message.src, message.dst, message.link, message.digest,
                     "dup" if duplicate else "ok")
        self.handlers[message.dst](message)

    def idle(self) -> bool:
        return self.stats.in_flight == 0 and not self._held

