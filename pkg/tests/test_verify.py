import pytest

from modlock.core import AcquireMode, ClientId, LockId, LockMode, RequestId
from modlock.errors import MalformedHistory, TooLarge
from modlock.protocol import PipelineStep, PipelineTrace
from modlock.verify import (
    EventKind,
    FinalState,
    History,
    check_linearizable,
    check_liveness,
    check_mutual_exclusion,
    check_trace,
    hold_intervals,
)

S = AcquireMode.SHARED
X = AcquireMode.EXCLUSIVE
LOCK = LockId(0)


def hold(history: History, client: int, mode: AcquireMode, invoke, grant, release=None):
    history.record(invoke, client, LOCK, EventKind.ACQUIRE_INVOKE, mode)
    history.record(grant, client, LOCK, EventKind.GRANT_OBSERVED)
    if release is not None:
        history.record(release, client, LOCK, EventKind.RELEASE_INVOKE)
        history.record(release, client, LOCK, EventKind.RELEASE_RETURN)


def ordered(history: History) -> History:
    return History(sorted(history.events, key=lambda e: e.time))


def test_overlapping_exclusive_holds_are_reported():
    history = History()
    hold(history, 1, X, 0.0, 1.0, 5.0)
    hold(history, 2, S, 2.0, 3.0, 4.0)
    window = check_mutual_exclusion(ordered(history))
    assert window is not None
    assert (window.first.client, window.second.client) == (1, 2)
    assert "overlaps" in str(window)


def test_shared_holds_may_overlap():
    history = History()
    hold(history, 1, S, 0.0, 1.0, 5.0)
    hold(history, 2, S, 0.0, 2.0, 6.0)
    assert check_mutual_exclusion(ordered(history)) is None


def test_back_to_back_holds_do_not_overlap():
    history = History()
    hold(history, 1, X, 0.0, 1.0, 3.0)
    hold(history, 2, X, 0.5, 3.0, 4.0)
    assert check_mutual_exclusion(ordered(history)) is None


def test_unreleased_hold_stays_open():
    history = History()
    hold(history, 1, X, 0.0, 1.0)
    (interval,) = hold_intervals(history.events)
    assert interval.end == float("inf")


def test_aborts_do_not_grant():
    history = History()
    history.record(0.0, 1, LOCK, EventKind.ACQUIRE_INVOKE, X)
    history.record(1.0, 1, LOCK, EventKind.ABORT)
    history.record(2.0, 1, LOCK, EventKind.GRANT_OBSERVED)
    assert check_mutual_exclusion(history) is None
    assert hold_intervals(history.events)[0].start == 2.0


@pytest.mark.parametrize(
    "events",
    [
        [(0.0, EventKind.GRANT_OBSERVED, None)],
        [(0.0, EventKind.ACQUIRE_INVOKE, X), (1.0, EventKind.RELEASE_INVOKE, None)],
        [(0.0, EventKind.ACQUIRE_INVOKE, None)],
        [(2.0, EventKind.ACQUIRE_INVOKE, X), (1.0, EventKind.GRANT_OBSERVED, None)],
    ],
)
def test_malformed_histories(events):
    history = History()
    for time, kind, mode in events:
        history.record(time, 1, LOCK, kind, mode)
    with pytest.raises(MalformedHistory):
        check_mutual_exclusion(history)


def test_linearizable_overlap():
    history = History()
    history.record(0.0, 0, LOCK, EventKind.ACQUIRE_INVOKE, X)
    history.record(1.0, 1, LOCK, EventKind.ACQUIRE_INVOKE, X)
    history.record(3.0, 1, LOCK, EventKind.GRANT_OBSERVED)
    history.record(4.0, 1, LOCK, EventKind.RELEASE_INVOKE)
    history.record(4.0, 1, LOCK, EventKind.RELEASE_RETURN)
    history.record(5.0, 0, LOCK, EventKind.GRANT_OBSERVED)
    result = check_linearizable(history)
    assert result.ok
    assert [(op.client, op.kind) for op in result.witness] == [
        (1, "acquire"),
        (1, "release"),
        (0, "acquire"),
    ]


def test_double_exclusive_grant_is_not_linearizable():
    history = History()
    hold(history, 0, X, 0.0, 1.0)
    hold(history, 1, X, 2.0, 3.0)
    assert not check_linearizable(history).ok


def test_linearizability_size_bound():
    history = History()
    for index in range(7):
        hold(history, index, X, 10.0 * index, 10.0 * index + 1, 10.0 * index + 2)
    with pytest.raises(TooLarge):
        check_linearizable(history)
    assert check_linearizable(history, max_ops=14).ok


def test_liveness():
    history = History()
    hold(history, 1, X, 0.0, 1.0, 2.0)
    history.record(3.0, 2, LOCK, EventKind.ACQUIRE_INVOKE, X)
    clean = FinalState({LOCK: LockMode.FREE}, {LOCK: 0}, {LOCK: 0})
    stuck = check_liveness(history, clean)
    assert stuck.ungranted == ((2, LOCK),)
    assert "never granted" in str(stuck)

    history.record(4.0, 2, LOCK, EventKind.GRANT_OBSERVED)
    assert check_liveness(history, clean) is None
    broken = FinalState({LOCK: LockMode.EXCLUSIVE}, {LOCK: 0}, {LOCK: 1})
    stuck = check_liveness(history, broken)
    assert stuck.waiting_locks == (LOCK,)
    assert stuck.inconsistent_locks == (LOCK,)


def test_history_json_lines(tmp_path):
    history = History()
    hold(history, 3, S, 0.5, 1.25, 2.0)
    path = tmp_path / "history.jsonl"
    history.export(path)
    first = path.read_text().splitlines()[0]
    assert first == '{"client": 3, "kind": "AcquireInvoke", "lock": 0, "mode": "S", "time": 0.5}'
    assert History.load(path).events == history.events


def test_trace_checks():
    trace = PipelineTrace(RequestId(1), ClientId(1, "c"), LOCK, "release")
    assert check_trace(trace) == ["request 1: empty trace"]
    trace.record(PipelineStep.REMOVE_HOLDER, "b", 1.0)
    trace.record(PipelineStep.PROMOTE_HOLDERS, "b", 2.0)
    trace.record(PipelineStep.VALIDATE_MODE, "a", 1.5)
    problems = check_trace(trace)
    assert "request 1: RemoveHolder -> PromoteHolders is not allowed" in problems
    assert any("precedes" in problem for problem in problems)
