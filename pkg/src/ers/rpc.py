"""Request/response over the simulated network with adaptive timeouts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .netsim import Event, Message, Network, SimClock

RTT_GAIN = 0.125
MAX_EXPIRED = 1024  # expired requests remembered for late RTT samples


@dataclass
class _Pending:
    dst: str
    sent_at: int
    on_response: Callable[[dict], None]
    on_timeout: Callable[[], None] | None
    timer: Event
    sample: bool


class Rpc:
    """One node's RPC endpoint.

    The timeout for a request is ``srtt + slack_ms`` once a round-trip sample
    to that peer exists, else ``initial_timeout_ms``. Late responses are
    discarded but still feed the round-trip estimate.
    """

    def __init__(self, node: str, network: Network, clock: SimClock,
                 slack_ms: int, initial_timeout_ms: int):
        self.node = node
        self.network = network
        self.clock = clock
        self.slack_ms = slack_ms
        self.initial_timeout_ms = initial_timeout_ms
        self.srtt: dict[str, float] = {}
        self.handlers: dict[str, Callable[[Message], dict | None]] = {}
        self._pending: dict[int, _Pending] = {}
        self._expired: dict[int, tuple[str, int]] = {}
        self._next_id = 0
        self.closed = False
        self.exchanges = 0

    def timeout_for(self, dst: str) -> int:
        est = self.srtt.get(dst)
        if est is None:
            return self.initial_timeout_ms
        return int(est) + self.slack_ms

    def _sample(self, dst: str, rtt: int) -> None:
        est = self.srtt.get(dst)
        self.srtt[dst] = float(rtt) if est is None else est + RTT_GAIN * (rtt - est)

    def request(self, dst: str, kind: str, body: dict, on_response: Callable[[dict], None],
                on_timeout: Callable[[], None] | None = None, link: str = "-",
                extra_timeout_ms: int = 0, sample_rtt: bool = True) -> int:
        self._next_id += 1
        rid = self._next_id
        timer = self.clock.after(self.timeout_for(dst) + extra_timeout_ms, self._expire, rid)
        self._pending[rid] = _Pending(dst, self.clock.now, on_response, on_timeout, timer, sample_rtt)
        self.exchanges += 1
        self.network.send(Message(self.node, dst, kind + "Request", {"id": rid, "body": body}, link))
        return rid

    def cancel(self, rid: int) -> None:
        p = self._pending.pop(rid, None)
        if p is not None:
            p.timer.cancel()

    def _expire(self, rid: int) -> None:
        p = self._pending.pop(rid, None)
        if p is None:
            return
        if p.sample:
            self._expired[rid] = (p.dst, p.sent_at)
            if len(self._expired) > MAX_EXPIRED:
                del self._expired[next(iter(self._expired))]
        if p.on_timeout is not None:
            p.on_timeout()

    def respond(self, request: Message, body: dict) -> None:
        kind = request.kind[: -len("Request")] + "Response"
        self.network.send(Message(self.node, request.src, kind,
                                  {"id": request.payload["id"], "body": body}, request.link))

    def close(self) -> None:
        self.closed = True
        for p in self._pending.values():
            p.timer.cancel()
        self._pending.clear()

    def receive(self, msg: Message) -> None:
        if self.closed:
            return
        if msg.kind.endswith("Response"):
            rid = msg.payload["id"]
            p = self._pending.pop(rid, None)
            if p is None:
                late = self._expired.pop(rid, None)
                if late is not None:
                    self._sample(late[0], self.clock.now - late[1])
                return
            p.timer.cancel()
            if p.sample:
                self._sample(p.dst, self.clock.now - p.sent_at)
            p.on_response(msg.payload["body"])
        elif msg.kind.endswith("Request"):
            handler = self.handlers.get(msg.kind[: -len("Request")])
            if handler is None:
                return
            body = handler(msg)
            if body is not None:
                self.respond(msg, body)
