from ers.netsim import Impairment, Network, SimClock
from ers.rpc import MAX_EXPIRED, Rpc


def endpoints(latency=10, loss=0.0):
    clock = SimClock()
    net = Network(clock, 5)
    a = Rpc("a", net, clock, slack_ms=50, initial_timeout_ms=1000)
    b = Rpc("b", net, clock, slack_ms=50, initial_timeout_ms=1000)
    for r in (a, b):
        net.attach(r.node, r.receive)
        net.set_membership(r.node, "lan")
    net.set_impairment(Impairment(latency_ms=latency, loss=loss))
    b.handlers["Echo"] = lambda msg: {"echo": msg.payload["body"]["x"]}
    return clock, net, a, b


def test_request_response_round_trip():
    clock, net, a, b = endpoints()
    got = []
    a.request("b", "Echo", {"x": 1}, got.append)
    clock.advance()
    assert got == [{"echo": 1}]
    assert a.srtt["b"] == 20.0


def test_timeout_uses_initial_then_estimate():
    clock, net, a, b = endpoints()
    assert a.timeout_for("b") == 1000
    a.request("b", "Echo", {"x": 1}, lambda r: None)
    clock.advance()
    assert a.timeout_for("b") == 20 + 50


def test_timeout_fires_on_loss():
    clock, net, a, b = endpoints(loss=1.0)
    fired, got = [], []
    a.request("b", "Echo", {"x": 1}, got.append, lambda: fired.append(clock.now))
    clock.advance()
    assert got == [] and fired == [1000]


def test_late_response_is_dropped_but_sampled():
    clock, net, a, b = endpoints(latency=600)
    fired, got = [], []
    a.request("b", "Echo", {"x": 1}, got.append, lambda: fired.append(1))
    clock.advance()
    assert fired == [1] and got == []
    assert a.srtt["b"] == 1200.0


def test_unknown_handler_gets_no_answer():
    clock, net, a, b = endpoints()
    fired = []
    a.request("b", "Nope", {}, lambda r: None, lambda: fired.append(1))
    clock.advance()
    assert fired == [1]


def test_closed_endpoint_ignores_everything():
    clock, net, a, b = endpoints()
    got = []
    a.request("b", "Echo", {"x": 1}, got.append)
    a.close()
    clock.advance()
    assert got == []


def test_expired_memory_is_bounded():
    clock, net, a, b = endpoints(loss=1.0)
    for _ in range(MAX_EXPIRED + 50):
        a.request("b", "Echo", {"x": 1}, lambda r: None)
    clock.advance()
    assert len(a._expired) == MAX_EXPIRED
