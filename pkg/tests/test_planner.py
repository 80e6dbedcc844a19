from hypothesis import given
from hypothesis import strategies as st
import pytest

from modlock.config import load_scenario
from modlock.core import MODULES
from modlock.errors import ConfigError
from modlock.planner import (
    Assignment,
    WorkloadParams,
    default_requirements,
    enumerate_assignments,
    format_plans,
    fuse,
    grant_beside_clients,
    module_footprints,
    score,
    to_toml,
)

MODE, HOLDER, WAITER, GRANT = MODULES


def placement(plan: Assignment) -> dict:
    return dict(plan.placement)


def ranked(name: str, strict: bool = False):
    scenario = load_scenario(name)
    plans = enumerate_assignments(
        scenario.topology, default_requirements(), scenario.workload_params(), strict=strict
    )
    return scenario, plans


def test_smartnic_plan_puts_mode_and_grant_on_the_nic():
    _, plans = ranked("smartnic_base")
    best, best_score = plans[0]
    assert placement(best) == {MODE: "nic", HOLDER: "server", WAITER: "server", GRANT: "nic"}
    assert best.fusion_groups == ((MODE, GRANT), (HOLDER, WAITER))
    assert best_score.feasible
    assert best_score.bottleneck_violations == 0
    assert best_score.predicted_grant_latency == pytest.approx(5.0)
    zero = [plan for plan, s in plans if s.feasible and s.bottleneck_violations == 0]
    assert zero == [best]


def test_smartnic_monolithic_scores():
    scenario, _ = ranked("smartnic_base")
    params = scenario.workload_params()
    cpu = score(Assignment.monolithic("server"), scenario.topology, default_requirements(), params)
    assert cpu.feasible
    assert cpu.bottleneck_violations == 2
    assert cpu.predicted_grant_latency == pytest.approx(7.0)
    nic = score(Assignment.monolithic("nic"), scenario.topology, default_requirements(), params)
    # holder and waiter state no longer fit the per-thread cache
    assert nic.predicted_grant_latency == pytest.approx(7.0)
    assert nic.bottleneck_violations == 2


def test_dm_plan_puts_grant_beside_the_clients():
    _, plans = ranked("dm_base")
    best, best_score = plans[0]
    assert placement(best) == {MODE: "mn", HOLDER: "mn", WAITER: "mn", GRANT: "cn"}
    assert best.fusion_groups == ((MODE, HOLDER, WAITER), (GRANT,))
    assert best_score.bottleneck_violations == 0
    assert grant_beside_clients(best, ["cn"])


def test_ineligible_components_make_plans_infeasible():
    scenario, plans = ranked("smartnic_base")
    on_clients = Assignment.monolithic("clients")
    result = score(on_clients, scenario.topology, default_requirements(), scenario.workload_params())
    assert not result.feasible
    assert "mode may not run on clients" in result.problems
    assert all(not s.feasible for plan, s in plans if "clients" in plan.names())


def test_strict_mode_rejects_violations():
    _, plans = ranked("smartnic_base", strict=True)
    feasible = [s for _, s in plans if s.feasible]
    assert len(feasible) == 1
    assert plans[0][1].feasible


def test_capacity_violation_is_reported():
    scenario = load_scenario("smartnic_base", overrides=[("workload.num_locks", 1_000_000)])
    result = score(
        Assignment.monolithic("nic"),
        scenario.topology,
        default_requirements(),
        scenario.workload_params(),
    )
    assert not result.feasible
    assert any(problem.startswith("nic holds") for problem in result.problems)


def test_fusion_groups():
    where = {MODE: "a", HOLDER: "b", WAITER: "b", GRANT: "a"}
    unfused = Assignment.of(where, fused=False)
    assert len(unfused.fusion_groups) == 4
    fused = fuse(unfused)
    assert fused.fusion_groups == ((MODE, GRANT), (HOLDER, WAITER))
    assert fused.fused(HOLDER, WAITER)
    assert not fused.fused(MODE, HOLDER)
    assert fused.describe() == "mode+grant@a holder+waiter@b"


@given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=4, max_size=4))
def test_fusion_is_idempotent(components):
    plan = Assignment.of(dict(zip(MODULES, components)))
    assert fuse(plan) == plan
    assert fuse(Assignment.of(dict(zip(MODULES, components)), fused=False)) == plan


def test_fused_modules_must_share_a_component():
    with pytest.raises(ConfigError, match="span components"):
        Assignment(
            ((MODE, "a"), (HOLDER, "b"), (WAITER, "b"), (GRANT, "a")),
            ((MODE, HOLDER), (WAITER,), (GRANT,)),
        )
    with pytest.raises(ConfigError, match="exactly once"):
        Assignment(((MODE, "a"),), ((MODE,),))


def test_fused_holder_and_waiter_share_storage():
    params = WorkloadParams(num_locks=100, max_holders=4, max_waiters=4)
    apart = module_footprints(
        Assignment.of({MODE: "a", HOLDER: "a", WAITER: "b", GRANT: "a"}),
        default_requirements(),
        params,
    )
    together = module_footprints(Assignment.monolithic("a"), default_requirements(), params)
    assert together[HOLDER] == apart[HOLDER] / 2
    assert together[WAITER] == apart[WAITER] / 2
    assert together[MODE] == apart[MODE] == 900


def test_plan_rendering():
    _, plans = ranked("smartnic_base")
    text = to_toml(plans[0][0])
    assert text.splitlines() == [
        "[assignment]",
        'mode = "nic"',
        'holder = "server"',
        'waiter = "server"',
        'grant = "nic"',
        "fuse = true",
    ]
    table = format_plans(plans, limit=3)
    assert len(table.splitlines()) == 4
    assert "mode+grant@nic holder+waiter@server" in table
