import pytest

from helpers import profile
from modlock.config import load_scenario
from modlock.hardware import LinkProfile, Topology


@pytest.fixture
def two_node_topology() -> Topology:
    return Topology(
        [profile("a", comm_ops_budget=1e6), profile("b", comm_ops_budget=1e6)],
        [LinkProfile(("a", "b"), latency=2.0)],
    )


@pytest.fixture
def small():
    """Load a built-in scenario with a reduced operation count."""

    def load(name: str, total_ops: int = 1000, *, variant=None, overrides=()):
        return load_scenario(
            name, variant=variant, overrides=[("workload.total_ops", total_ops), *overrides]
        )

    return load


@pytest.fixture
def scenario_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("MODLOCK_SCENARIO_DIR", str(tmp_path))
    return tmp_path
