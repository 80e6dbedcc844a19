from hypothesis import given, settings
from hypothesis import strategies as st
import numpy as np
import pytest

from modlock.config import load_scenario
from modlock.sim import run
from modlock.suite import check_result, print_suite, run_suite, verify_race
from modlock.workload import random_micro_script


@pytest.fixture(scope="module")
def race():
    return load_scenario("grant_race", overrides=[("workload.total_ops", 100)])


def test_suite_passes_and_sees_aborts(race):
    suite = run_suite(race, range(1, 3), micro=5, race=3)
    assert suite.ok, [r.problems for r in suite.reports if not r.ok]
    assert suite.count("workload") == 2
    assert suite.count("micro") == 5
    assert suite.count("race") == 3
    assert suite.aborts("race") == 3


def test_suite_without_validation_fails(race, capsys):
    suite = run_suite(race, [], race=2, validate=False)
    assert not suite.ok
    assert suite.aborts("race") == 0
    with pytest.raises(SystemExit) as info:
        print_suite(suite, race.name)
    assert info.value.code == 1
    assert "mutual exclusion" in capsys.readouterr().err


def test_print_suite_reports_success(race, capsys):
    print_suite(run_suite(race, [1], race=1), race.name)
    assert capsys.readouterr().out.startswith("Verify grant_race: OK (1 workload, 1 race;")


def test_parallel_jobs_match_serial(race):
    serial = run_suite(race, range(1, 4), jobs=1)
    parallel = run_suite(race, range(1, 4), jobs=2)
    assert [r.acquires for r in serial.reports] == [r.acquires for r in parallel.reports]
    assert parallel.ok


def test_race_reports_count_aborts(race):
    report = verify_race(race, 7)
    assert report.ok
    assert report.aborts == 1
    assert report.acquires == 3


@pytest.mark.parametrize("name", ["smartnic_modular", "dm_polling_baseline", "grant_race"])
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_micro_histories_linearize(name, seed):
    scenario = load_scenario(name)
    script = random_micro_script(np.random.default_rng(seed))
    result = run(scenario, seed, script=script)
    assert check_result(result, linearizability=True) == []
