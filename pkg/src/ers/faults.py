"""Fault injectors: random node termination and scheduled link impairment."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .netsim import Impairment, derive_seed

if TYPE_CHECKING:
    from .node import World


@dataclass(frozen=True)
class ChaosPolicy:
    interval_ms: int
    kill_prob: float
    min_down_ms: int
    max_down_ms: int
    eligible: tuple[str, ...] = ()
    stream: str = "chaos"
    start_ms: int = 0
    end_ms: int | None = None

    def __post_init__(self) -> None:
        if self.interval_ms <= 0:
            raise ValueError("interval_ms must be positive")
        if not 0.0 <= self.kill_prob <= 1.0:
            raise ValueError("kill_prob outside [0, 1]")
        if not 0 <= self.min_down_ms <= self.max_down_ms:
            raise ValueError("need 0 <= min_down_ms <= max_down_ms")

    @classmethod
    def from_dict(cls, data: dict) -> ChaosPolicy:
        data = dict(data)
        data["eligible"] = tuple(data.get("eligible", ()))
        return cls(**data)


@dataclass(frozen=True)
class ImpairmentWindow:
    start_ms: int
    end_ms: int
    targets: tuple[str, ...]  # "src>dst", "net:<network>" or "*"
    impairment: Impairment

    def __post_init__(self) -> None:
        if not 0 <= self.start_ms < self.end_ms:
            raise ValueError("window needs 0 <= start_ms < end_ms")
        for t in self.targets:
            if t != "*" and not t.startswith("net:") and t.count(">") != 1:
                raise ValueError(f"bad impairment target {t!r}")

    @classmethod
    def from_dict(cls, data: dict) -> ImpairmentWindow:
        return cls(data["start_ms"], data["end_ms"], tuple(data["targets"]),
                   Impairment.from_dict(data["impairment"]))


@dataclass(frozen=True)
class LatencyPolicy:
    schedule: tuple[ImpairmentWindow, ...] = ()

    @classmethod
    def from_dict(cls, data: dict) -> LatencyPolicy:
        return cls(tuple(ImpairmentWindow.from_dict(w) for w in data.get("schedule", ())))


@dataclass(frozen=True)
class ChaosAction:
    time_ms: int
    action: str  # "kill" or "restart"
    node: str


class ChaosMonkey:
    """Every ``interval_ms``, with probability ``kill_prob``, kills one live
    eligible node and restarts it after a uniform random downtime."""

    def __init__(self, world: World, policy: ChaosPolicy):
        self.world = world
        self.policy = policy
        self.rng = random.Random(derive_seed(world.seed, policy.stream))
        self.actions: list[ChaosAction] = []
        self._down: set[str] = set()

    def install(self) -> None:
        self.world.clock.at(self.policy.start_ms + self.policy.interval_ms, self._tick)

    def chaos_tick(self) -> list[ChaosAction]:
        p, w = self.policy, self.world
        now = w.clock.now
        draw = self.rng.random()
        candidates = [n for n in sorted(p.eligible or w.nodes)
                      if n not in self._down and w.nodes[n].alive]
        if draw >= p.kill_prob or not candidates:
            return []
        victim = self.rng.choice(candidates)
        down = self.rng.randint(p.min_down_ms, p.max_down_ms)
        self._down.add(victim)
        w.nodes[victim].kill()
        w.clock.after(down, self._restart, victim)
        kill = ChaosAction(now, "kill", victim)
        self.actions.append(kill)
        return [kill, ChaosAction(now + down, "restart", victim)]

    def _tick(self) -> None:
        self.chaos_tick()
        nxt = self.world.clock.now + self.policy.interval_ms
        if self.policy.end_ms is None or nxt < self.policy.end_ms:
            self.world.clock.at(nxt, self._tick)

    def _restart(self, node: str) -> None:
        self._down.discard(node)
        self.world.nodes[node].restart()
        self.actions.append(ChaosAction(self.world.clock.now, "restart", node))


class LatencyMonkey:
    """Applies impairment windows. Where windows overlap on a target, the one
    listed later wins; when none is active the target's prior setting returns."""

    def __init__(self, world: World, policy: LatencyPolicy):
        self.world = world
        self.policy = policy
        self._baseline: dict[str, Impairment | None] = {}

    def install(self) -> None:
        net = self.world.network
        for w in self.policy.schedule:
            for t in w.targets:
                if t in self._baseline:
                    continue
                if t == "*":
                    self._baseline[t] = net.default_impairment
                elif t.startswith("net:"):
                    self._baseline[t] = net.network_impairment.get(t[4:])
                else:
                    self._baseline[t] = net.link_impairment.get(tuple(t.split(">")))
        for w in self.policy.schedule:
            self.world.clock.at(w.start_ms, self._refresh, w.targets)
            self.world.clock.at(w.end_ms, self._refresh, w.targets)

    def effective(self, target: str, now: int) -> Impairment | None:
        active = [w for w in self.policy.schedule if target in w.targets and w.start_ms <= now < w.end_ms]
        return active[-1].impairment if active else self._baseline[target]

    def _refresh(self, targets: tuple[str, ...]) -> None:
        net, now = self.world.network, self.world.clock.now
        for t in targets:
            imp = self.effective(t, now)
            if t == "*":
                net.set_impairment(imp)
            elif t.startswith("net:"):
                if imp is None:
                    net.network_impairment.pop(t[4:], None)
                else:
                    net.set_impairment(imp, network=t[4:])
            else:
                link = tuple(t.split(">"))
                if imp is None:
                    net.clear_link_impairment(link)
                else:
                    net.set_impairment(imp, link=link)


def apply_latency_schedule(world: World, policy: LatencyPolicy) -> LatencyMonkey:
    monkey = LatencyMonkey(world, policy)
    monkey.install()
    return monkey
