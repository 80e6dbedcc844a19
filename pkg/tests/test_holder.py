from hypothesis import given
from hypothesis import strategies as st
import pytest

from helpers import client
from modlock.core import LockId
from modlock.errors import DuplicateHolder, NoReleaseInProgress, NotHolder
from modlock.holder import HolderManager, holder_footprint

LOCK = LockId(0)


def test_last_release_returns_snapshot():
    holder = HolderManager(1)
    holder.add_holders(LOCK, [client(1), client(2)], 2)
    outcome = holder.remove_holder(LOCK, client(1))
    assert not outcome.last_holder
    assert outcome.remaining == 1
    outcome = holder.remove_holder(LOCK, client(2))
    assert outcome.last_holder
    assert outcome.snapshot == 2
    assert holder.release_in_progress(LOCK)


def test_snapshot_keeps_highest_grant():
    holder = HolderManager(1)
    holder.add_holders(LOCK, [client(1)], 5)
    holder.add_holders(LOCK, [client(2)], 3)
    assert holder.record(LOCK).last_grant_snapshot == 5


def test_set_tracking_rejects_duplicates_and_strangers():
    holder = HolderManager(1)
    holder.add_holders(LOCK, [client(1)], 1)
    with pytest.raises(DuplicateHolder):
        holder.add_holders(LOCK, [client(1)], 2)
    with pytest.raises(NotHolder):
        holder.remove_holder(LOCK, client(9))


def test_counter_tracking_only_counts():
    holder = HolderManager(1, tracking="counter")
    holder.add_holders(LOCK, [client(1)], 1)
    holder.add_holders(LOCK, [client(1)], 2)
    assert holder.holder_count(LOCK) == 2
    assert holder.record(LOCK).holders == frozenset()
    holder.remove_holder(LOCK, client(7))
    assert holder.remove_holder(LOCK, client(8)).last_holder
    with pytest.raises(NotHolder):
        holder.remove_holder(LOCK, client(1))


def test_promotion_needs_release_in_flight():
    holder = HolderManager(1)
    with pytest.raises(NoReleaseInProgress):
        holder.promote_waiters(LOCK, [client(1)], 1)
    with pytest.raises(NoReleaseInProgress):
        holder.finish_release(LOCK)


def test_rollback_restores_holders_and_snapshot():
    holder = HolderManager(1)
    holder.add_holders(LOCK, [client(1)], 1)
    holder.remove_holder(LOCK, client(1))
    holder.promote_waiters(LOCK, [client(2), client(3)], 3)
    assert holder.record(LOCK).last_grant_snapshot == 3
    holder.rollback_promotion(LOCK, [client(2), client(3)])
    record = holder.record(LOCK)
    assert record.holder_count == 0
    assert record.holders == frozenset()
    assert record.last_grant_snapshot == 1
    holder.finish_release(LOCK)
    assert not holder.release_in_progress(LOCK)


def test_racing_grant_survives_rollback():
    holder = HolderManager(1)
    holder.add_holders(LOCK, [client(1)], 1)
    holder.remove_holder(LOCK, client(1))
    holder.promote_waiters(LOCK, [client(2)], 2)
    # a shared grant decided before validation lands during the release
    holder.add_holders(LOCK, [client(3)], 2)
    holder.rollback_promotion(LOCK, [client(2)])
    record = holder.record(LOCK)
    assert record.holders == frozenset({client(3)})
    assert record.last_grant_snapshot == 2


@given(st.lists(st.tuples(st.booleans(), st.integers(0, 5)), max_size=60))
def test_counter_and_set_agree(steps):
    by_set = HolderManager(1, tracking="set")
    by_count = HolderManager(1, tracking="counter")
    held: set[int] = set()
    grants = 0
    for add, index in steps:
        if by_set.release_in_progress(LOCK):
            by_set.finish_release(LOCK)
            by_count.finish_release(LOCK)
        if add and index not in held:
            grants += 1
            by_set.add_holders(LOCK, [client(index)], grants)
            by_count.add_holders(LOCK, [client(index)], grants)
            held.add(index)
        elif not add and index in held:
            held.discard(index)
            assert by_set.remove_holder(LOCK, client(index)) == by_count.remove_holder(
                LOCK, client(index)
            )
        assert by_set.holder_count(LOCK) == by_count.holder_count(LOCK) == len(held)


def test_footprints():
    assert holder_footprint(1000, "counter", 64) == 8000
    assert holder_footprint(1000, "set", 64) == 1000 * 64 * 16
