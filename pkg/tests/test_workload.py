from hypothesis import given, settings
from hypothesis import strategies as st
import numpy as np
import pytest

from modlock.core import AcquireMode
from modlock.errors import ConfigError
from modlock.workload import (
    Workload,
    generate_ops,
    grant_race_script,
    random_micro_script,
    sample_locks,
    zipf_cdf,
    zipf_mass,
)


def test_zipf_cdf_is_a_distribution():
    cdf = zipf_cdf(100, 0.99)
    assert cdf[-1] == pytest.approx(1.0)
    assert np.all(np.diff(cdf) > 0)


def test_zipf_mass():
    assert zipf_mass(1, 10, 0.0) == pytest.approx(0.1)
    assert zipf_mass(10, 10, 0.99) == pytest.approx(1.0)
    assert 0.4 < zipf_mass(1000, 1_000_000, 0.99) < 0.6


def test_zipf_sampling_favours_low_ids():
    workload = Workload(4, 100, distribution="zipf", theta=0.99)
    draws = sample_locks(workload, np.random.default_rng(3), 20_000)
    counts = np.bincount(draws, minlength=100)
    assert counts.argmax() == 0
    assert draws.min() >= 0 and draws.max() < 100
    assert counts[0] / len(draws) == pytest.approx(zipf_mass(1, 100, 0.99), abs=0.02)


def test_uniform_sampling_stays_in_range():
    workload = Workload(4, 7)
    draws = sample_locks(workload, np.random.default_rng(1), 5000)
    assert set(np.unique(draws)) == set(range(7))


def test_streams_are_reproducible():
    workload = Workload(4, 50, distribution="zipf", shared_fraction=0.3, total_ops=500)
    a = generate_ops(workload, np.random.default_rng(9))
    b = generate_ops(workload, np.random.default_rng(9))
    assert np.array_equal(a.locks, b.locks)
    assert np.array_equal(a.shared, b.shared)
    assert len(a) == 500
    lock, mode = a.op(0)
    assert isinstance(mode, AcquireMode)
    assert 0 <= lock < 50


def test_exclusive_only_workload():
    stream = generate_ops(Workload(2, 5, total_ops=100), np.random.default_rng(0))
    assert all(stream.op(i)[1] is AcquireMode.EXCLUSIVE for i in range(len(stream)))


@pytest.mark.parametrize(
    "kwargs, field",
    [
        ({"shared_fraction": 1.5}, "workload.shared_fraction"),
        ({"distribution": "pareto"}, "workload.distribution"),
        ({"critical_section_ops": 2}, "workload.data_component"),
        ({"clients": {"a": 1}}, "workload.clients"),
        ({"theta": -1.0}, "workload.theta"),
    ],
)
def test_invalid_workloads(kwargs, field):
    with pytest.raises(ConfigError) as info:
        Workload(2, 10, **kwargs)
    assert info.value.field == field


def test_client_locations_fill_components_in_name_order():
    workload = Workload(3, 1, clients={"b": 1, "a": 2})
    assert workload.client_locations("ignored") == ["a", "a", "b"]
    assert Workload(2, 1).client_locations("cn") == ["cn", "cn"]


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_micro_scripts_stay_small(seed):
    script = random_micro_script(np.random.default_rng(seed))
    assert 2 <= script.clients() <= 4
    assert script.locks() <= 2
    assert 2 * len(script) <= 12
    for op in script.ops:
        assert op.release_at > op.at


def test_race_script_is_timed_around_one_release():
    script = grant_race_script()
    assert [op.at for op in script.ops] == [0.0, 2.0, 12.0]
    assert [op.mode for op in script.ops] == [
        AcquireMode.SHARED,
        AcquireMode.EXCLUSIVE,
        AcquireMode.SHARED,
    ]
    by_client = script.by_client()
    assert sorted(by_client) == [0, 1, 2]
