import pytest

from ers.faults import ChaosMonkey, ChaosPolicy, ImpairmentWindow, LatencyPolicy, apply_latency_schedule
from ers.model import Statement
from ers.netsim import Impairment
from ers.node import World
from ers.registry import Registry
from ers.store import StoreScope


def world(n=4, seed=1):
    w = World(seed)
    b = w.add_node("b", "bridge", "lan")
    cs = [w.add_node(f"c{i}", "contributor", "lan") for i in range(n)]
    return w, b, cs


def test_zero_probability_never_acts():
    w, b, cs = world()
    for n in [b] + cs:
        n.start()
    monkey = ChaosMonkey(w, ChaosPolicy(1000, 0.0, 100, 200))
    monkey.install()
    w.run_until(60_000)
    assert monkey.actions == []


def test_certain_kill_then_restart():
    w, b, cs = world()
    for n in [b] + cs:
        n.start()
    monkey = ChaosMonkey(w, ChaosPolicy(1000, 1.0, 500, 500, eligible=("c0",), end_ms=1500))
    monkey.install()
    w.run_until(1000)
    assert not cs[0].alive
    w.run_until(1500)
    assert cs[0].alive
    assert [(a.time_ms, a.action, a.node) for a in monkey.actions] == [(1000, "kill", "c0"), (1500, "restart", "c0")]


def test_restarted_node_catches_up():
    w, b, cs = world(2)
    for n in [b] + cs:
        n.start()
    Registry(cs[1].store).cache_entity("urn:x")
    w.run_until(5000)
    monkey = ChaosMonkey(w, ChaosPolicy(1000, 1.0, 3000, 3000, eligible=("c1",), start_ms=5000, end_ms=6500))
    monkey.install()
    w.run_until(6500)
    assert not cs[1].alive
    cs[0].registry.add_statement(Statement("urn:x", "p", "while-down"))
    w.run_until(20_000)
    assert cs[1].alive
    assert cs[1].store.get(StoreScope.CACHE, "c0|urn:x").properties == {"p": ("while-down",)}


def test_down_node_is_not_killed_twice():
    w, b, cs = world(1)
    for n in [b] + cs:
        n.start()
    monkey = ChaosMonkey(w, ChaosPolicy(100, 1.0, 10_000, 10_000, eligible=("c0",)))
    monkey.install()
    w.run_until(5000)
    assert [a.action for a in monkey.actions] == ["kill"]


def test_chaos_is_seeded():
    def actions(seed):
        w, b, cs = world(5, seed)
        for n in [b] + cs:
            n.start()
        m = ChaosMonkey(w, ChaosPolicy(1000, 0.5, 500, 3000))
        m.install()
        w.run_until(60_000)
        return m.actions

    assert actions(3) == actions(3)
    assert actions(3) != actions(4)


@pytest.mark.parametrize("bad", [dict(interval_ms=0), dict(kill_prob=2.0), dict(min_down_ms=5, max_down_ms=1)])
def test_bad_chaos_policy(bad):
    args = dict(interval_ms=10, kill_prob=0.5, min_down_ms=0, max_down_ms=1)
    args.update(bad)
    with pytest.raises(ValueError):
        ChaosPolicy(**args)


def _latencies(schedule, probe_times):
    w = World(1)
    w.network.set_impairment(Impairment(latency_ms=1))
    for n in ("a", "b"):
        w.network.attach(n, lambda m: None)
        w.network.set_membership(n, "lan")
    apply_latency_schedule(w, LatencyPolicy(tuple(schedule)))
    out = []
    for t in probe_times:
        w.run_until(t)
        out.append(w.network.impairment_for("a", "b").latency_ms)
    return out


def test_empty_schedule_changes_nothing():
    assert _latencies([], [0, 500, 5000]) == [1, 1, 1]


def test_window_applies_only_inside():
    win = ImpairmentWindow(100, 200, ("*",), Impairment(latency_ms=100))
    assert _latencies([win], [50, 100, 199, 200, 300]) == [1, 100, 100, 1, 1]


def test_overlapping_windows_later_listed_wins():
    first = ImpairmentWindow(100, 400, ("*",), Impairment(latency_ms=10))
    second = ImpairmentWindow(200, 300, ("*",), Impairment(latency_ms=20))
    assert _latencies([first, second], [150, 250, 350, 450]) == [10, 20, 10, 1]
    # reversed listing: the long window is later and masks the short one
    assert _latencies([second, first], [150, 250, 350, 450]) == [10, 10, 10, 1]


def test_link_and_network_targets():
    win = ImpairmentWindow(0, 100, ("a>b", "net:lan"), Impairment(latency_ms=7))
    w = World(1)
    for n in ("a", "b"):
        w.network.attach(n, lambda m: None)
        w.network.set_membership(n, "lan")
    apply_latency_schedule(w, LatencyPolicy((win,)))
    w.run_until(50)
    assert w.network.impairment_for("a", "b").latency_ms == 7
    assert w.network.impairment_for("b", "a").latency_ms == 7
    w.run_until(150)
    assert w.network.impairment_for("a", "b").latency_ms == 0
    assert ("a", "b") not in w.network.link_impairment and "lan" not in w.network.network_impairment


def test_bad_window():
    with pytest.raises(ValueError):
        ImpairmentWindow(10, 10, ("*",), Impairment())
    with pytest.raises(ValueError):
        ImpairmentWindow(0, 10, ("nonsense",), Impairment())
