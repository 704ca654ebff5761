from ers.discovery import PER_PEER_DELAY_MS, RECORD_TTL_MS, Discovery
from ers.netsim import SimClock


class Peers:
    """Collects appeared/vanished callbacks, keyed by service name."""

    def __init__(self):
        self.records = {}
        self.events = []

    @property
    def visible(self):
        return {r.node for r in self.records.values()}

    def up(self, rec):
        self.events.append(("up", rec.node))
        self.records[rec.service_name] = rec

    def down(self, rec):
        self.events.append(("down", rec.node))
        self.records.pop(rec.service_name, None)


def setup(n, network="lan"):
    clock = SimClock()
    disc = Discovery(clock, seed=3)
    peers = {}
    for i in range(n):
        node = f"n{i}"
        peers[node] = Peers()
        disc.start(node, "contributor", node, network, peers[node].up, peers[node].down)
    return clock, disc, peers


def test_single_peer_resolves_after_one_delay():
    clock, disc, peers = setup(1)
    p = Peers()
    disc.start("new", "contributor", "new", "lan", p.up, p.down)
    clock.advance(PER_PEER_DELAY_MS - 1)
    assert p.visible == set()
    clock.advance(PER_PEER_DELAY_MS)
    assert p.visible == {"n0"}


def test_forty_peers_take_linear_time():
    clock, disc, peers = setup(40)
    p = Peers()
    clock.advance(10_000)
    start = clock.now
    disc.start("late", "contributor", "late", "lan", p.up, p.down)
    clock.advance(start + 40 * PER_PEER_DELAY_MS - 1)
    assert len(p.visible) == 39
    clock.advance(start + 40 * PER_PEER_DELAY_MS)
    assert len(p.visible) == 40


def test_everyone_sees_everyone():
    clock, disc, peers = setup(5)
    clock.advance()
    for node, p in peers.items():
        assert p.visible == set(peers) - {node}


def test_other_networks_stay_invisible():
    clock, disc, peers = setup(2)
    q = Peers()
    disc.start("x", "contributor", "x", "elsewhere", q.up, q.down)
    clock.advance()
    assert q.visible == set() and "x" not in peers["n0"].visible


def test_move_keeps_service_name():
    clock, disc, peers = setup(1)
    name = disc.records["n0"].service_name
    disc.on_network_change("n0", None)
    disc.on_network_change("n0", "other")
    assert disc.records["n0"].service_name == name


def test_service_names_are_unique_per_start():
    clock, disc, peers = setup(1)
    first = disc.records["n0"].service_name
    disc.stop("n0")
    disc.start("n0", "contributor", "n0", "lan", peers["n0"].up, peers["n0"].down)
    assert disc.records["n0"].service_name != first
    assert first.startswith("n0-")


def test_stopped_node_expires_after_ttl():
    clock, disc, peers = setup(2)
    clock.advance()
    t = clock.now
    disc.stop("n1")
    clock.advance(t + RECORD_TTL_MS - 1)
    assert "n1" in peers["n0"].visible
    clock.advance(t + RECORD_TTL_MS)
    assert peers["n0"].visible == set()


def test_moving_node_drops_its_peer_list_immediately():
    clock, disc, peers = setup(3)
    clock.advance()
    disc.on_network_change("n0", None)
    assert peers["n0"].visible == set()
    clock.advance()
    assert "n0" not in peers["n1"].visible


def test_flapping_ends_in_same_state():
    clock, disc, peers = setup(3)
    clock.advance()
    before = {n: set(p.visible) for n, p in peers.items()}
    for _ in range(5):
        disc.on_network_change("n0", None)
        clock.advance(clock.now + 10)
        disc.on_network_change("n0", "lan")
        clock.advance(clock.now + 10)
    clock.advance()
    assert {n: p.visible for n, p in peers.items()} == before
    ups = [e for e in peers["n1"].events if e == ("up", "n0")]
    downs = [e for e in peers["n1"].events if e == ("down", "n0")]
    assert len(ups) - len(downs) == 1


def test_browse_lists_visible_records():
    clock, disc, peers = setup(3)
    clock.advance()
    assert [r.node for r in disc.browse("n0")] == sorted(["n1", "n2"], key=lambda n: disc.records[n].service_name)
    assert disc.browse("nobody") == []


def test_same_seed_same_names():
    a = setup(4)[1]
    b = setup(4)[1]
    assert {n: r.service_name for n, r in a.records.items()} == {n: r.service_name for n, r in b.records.items()}
