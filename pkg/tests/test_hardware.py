from hypothesis import given
from hypothesis import strategies as st
import pytest

from helpers import profile
from modlock.core import Module
from modlock.errors import CapacityExceeded, ConfigError, UnknownComponent, UnknownLink
from modlock.hardware import (
    CommBudget,
    HardwareModel,
    LinkProfile,
    ThreadPool,
    Topology,
)


def test_message_delay_includes_budget_queueing(two_node_topology):
    hardware = HardwareModel(two_node_topology)
    assert hardware.charge_message("a", "b", 0.0) == pytest.approx(2.0)
    # one op per microsecond: the second message waits for the first
    assert hardware.charge_message("a", "b", 0.0) == pytest.approx(3.0)
    assert hardware.ledger.comm_ops["a"] == hardware.ledger.comm_ops["b"] == 2
    assert hardware.ledger.in_flight(("a", "b")) == 2
    hardware.ledger.deliver(("a", "b"))
    assert hardware.ledger.total_in_flight() == 1


def test_saturated_receiver_delays_the_eleventh_message():
    topology = Topology(
        [profile("cn", comm_ops_budget=1e9), profile("mn", comm_ops_budget=2e6)],
        [LinkProfile(("cn", "mn"), 2.0)],
    )
    hardware = HardwareModel(topology)
    for _ in range(10):
        hardware.charge_message("cn", "mn", 0.0)
    assert hardware.charge_message("cn", "mn", 0.0) == pytest.approx(5.0 + 2.0)


def _delays(offered):
    topology = Topology(
        [profile("cn", comm_ops_budget=1e8), profile("mn", comm_ops_budget=1e6)],
        [LinkProfile(("cn", "mn"), 1.0)],
    )
    hardware = HardwareModel(topology)
    delays = {}
    for now, tag in sorted(offered, key=lambda item: item[0]):
        delay = hardware.charge_message("cn", "mn", now)
        if tag is not None:
            delays[tag] = delay
    return delays


@given(
    st.lists(st.floats(0.0, 50.0), min_size=1, max_size=30),
    st.lists(st.floats(0.0, 50.0), max_size=30),
)
def test_extra_load_never_shortens_a_delay(arrivals, extra):
    base = [(now, index) for index, now in enumerate(arrivals)]
    loaded = base + [(now, None) for now in extra]
    quiet = _delays(base)
    busy = _delays(loaded)
    for tag, delay in quiet.items():
        assert busy[tag] >= delay - 1e-9


def test_categories_are_tallied_separately(two_node_topology):
    hardware = HardwareModel(two_node_topology)
    hardware.charge_message("a", "b", category="poll")
    hardware.charge_message("b", "a", category="data")
    assert hardware.ledger.comm_by_category["poll"]["a"] == 1
    assert hardware.ledger.comm_by_category["data"]["a"] == 1
    assert hardware.ledger.comm_by_category["lock"]["a"] == 0


def test_unknown_routes(two_node_topology):
    hardware = HardwareModel(two_node_topology)
    with pytest.raises(UnknownLink):
        hardware.charge_message("a", "a")
    with pytest.raises(UnknownComponent):
        hardware.charge_message("a", "z")


def test_memory_is_a_hard_capacity():
    topology = Topology([profile("nic", memory_capacity=1000)], [])
    hardware = HardwareModel(topology)
    hardware.charge_memory("nic", "mode", 600)
    with pytest.raises(CapacityExceeded) as info:
        hardware.charge_memory("nic", "holder", 500)
    assert info.value.needed == 1100
    assert hardware.ledger.peak_memory["nic"] == 600
    assert hardware.ledger.resident_bytes("nic") == 600


def test_processing_pays_miss_penalty_past_fast_memory():
    topology = Topology(
        [profile("nic", proc_cost_per_op=2.0, fast_memory_capacity=1024, miss_penalty_multiplier=3.0)],
        [],
    )
    hardware = HardwareModel(topology)
    assert hardware.charge_processing("nic", "decide", 1024) == 2.0
    assert hardware.charge_processing("nic", "decide", 1025) == 6.0
    assert hardware.ledger.processing_ops["nic"] == 2
    assert hardware.ledger.processing_kinds[("nic", "decide")] == 2


def test_working_set_is_per_thread():
    topology = Topology([profile("nic", parallelism=4)], [])
    hardware = HardwareModel(topology)
    hardware.charge_memory("nic", "mode", 4000)
    assert hardware.working_set("nic") == 1000


def test_thread_pool_runs_first_come_first_served():
    pool = ThreadPool(2)
    assert [pool.run(0.0, 1.0) for _ in range(3)] == [1.0, 1.0, 2.0]
    assert pool.run(5.0, 1.0) == 6.0


@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=50), st.floats(0.01, 5.0))
def test_comm_budget_never_exceeds_its_rate(arrivals, interval):
    budget = CommBudget(interval)
    starts = []
    for now in sorted(arrivals):
        start = budget.earliest(now)
        budget.consume(start, 1)
        assert start >= now
        starts.append(start)
    for a, b in zip(starts, starts[1:]):
        assert b - a >= interval * (1 - 1e-9)


def test_profile_validation():
    with pytest.raises(ConfigError, match="proc_cost_per_op"):
        profile("x", proc_cost_per_op=0)
    with pytest.raises(ConfigError, match="fast_memory_capacity"):
        profile("x", memory_capacity=10, fast_memory_capacity=20)
    with pytest.raises(ConfigError, match="scarce"):
        profile("x", scarce=frozenset({"bandwidth"}))
    with pytest.raises(ConfigError, match="eligible"):
        profile("x", eligible=frozenset({"cache"}))


def test_topology_checks_links_and_eligibility():
    with pytest.raises(ConfigError, match="unknown component"):
        Topology([profile("a")], [LinkProfile(("a", "b"), 1.0)])
    with pytest.raises(ConfigError):
        LinkProfile(("a", "b"), -1.0)
    topology = Topology(
        [profile("a"), profile("cn", eligible=frozenset({"grant"}))],
        [LinkProfile(("cn", "a"), 1.0)],
    )
    assert topology.route("a", "cn").latency == 1.0
    assert topology.profile("a").hosts(Module.MODE)
    assert not topology.profile("cn").hosts(Module.MODE)
    assert topology.profile("cn").hosts(Module.GRANT)
