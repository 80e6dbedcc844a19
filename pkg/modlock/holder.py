from dataclasses import dataclass
from typing import Iterable, Literal

from .constants import DEFAULT_HOLDER_COUNTER_BYTES, DEFAULT_HOLDER_ENTRY_BYTES
from .core import ClientId, GrantCount, LockId
from .errors import DuplicateHolder, NoReleaseInProgress, NotHolder, UnknownLock
from .util import Stripes

Tracking = Literal["set", "counter"]


@dataclass(frozen=True)
class ReleaseOutcome:
    last_holder: bool
    remaining: int = 0
    snapshot: GrantCount | None = None

    @classmethod
    def still_held(cls, remaining: int) -> "ReleaseOutcome":
        return cls(False, remaining=remaining)

    @classmethod
    def last(cls, snapshot: int) -> "ReleaseOutcome":
        return cls(True, snapshot=GrantCount(snapshot))


@dataclass(frozen=True)
class HolderRecord:
    lock: LockId
    holders: frozenset[ClientId]
    holder_count: int
    last_grant_snapshot: GrantCount
    release_in_progress: bool


class HolderManager:
    """Holder set per lock with the grant-count snapshot used on release.

    ``tracking="counter"`` keeps only the number of holders, ``"set"`` keeps
    each holder's identity. Both return the same release outcomes; only the
    set variant can detect duplicate adds and foreign releases.
    """

    def __init__(self, num_locks: int, tracking: Tracking = "set"):
        if tracking not in ("set", "counter"):
            raise ValueError(f"unknown holder tracking: {tracking}")
        self.num_locks = num_locks
        self.tracking = tracking
        self._counts = [0] * num_locks
        self._snapshots = [0] * num_locks
        self._sets: dict[int, set[ClientId]] = {}
        self._in_progress: set[int] = set()
        self._restore: dict[int, int] = {}
        self._stripes = Stripes()

    def _guard(self, lock: LockId):
        if not 0 <= lock < self.num_locks:
            raise UnknownLock(lock, self.num_locks)
        return self._stripes[lock]

    def _members(self, lock: LockId) -> set[ClientId]:
        return self._sets.setdefault(lock, set())

    def _bump_snapshot(self, lock: LockId, grant_count: int) -> None:
        # adds for different clients can arrive out of grant order
        self._snapshots[lock] = max(self._snapshots[lock], grant_count)
        if lock in self._restore:
            self._restore[lock] = max(self._restore[lock], grant_count)

    def add_holders(
        self, lock: LockId, clients: Iterable[ClientId], grant_count: int
    ) -> None:
        clients = list(clients)
        with self._guard(lock):
            if self.tracking == "set":
                members = self._members(lock)
                for client in clients:
                    if client in members:
                        raise DuplicateHolder(f"{client} already holds lock {lock}")
                members.update(clients)
            self._counts[lock] += len(clients)
            self._bump_snapshot(lock, grant_count)

    def remove_holder(self, lock: LockId, client: ClientId) -> ReleaseOutcome:
        with self._guard(lock):
            if self.tracking == "set":
                members = self._members(lock)
                if client not in members:
                    raise NotHolder(f"{client} does not hold lock {lock}")
                members.discard(client)
            elif self._counts[lock] == 0:
                raise NotHolder(f"lock {lock} has no holders")
            self._counts[lock] -= 1
            if self._counts[lock]:
                return ReleaseOutcome.still_held(self._counts[lock])
            self._in_progress.add(lock)
            return ReleaseOutcome.last(self._snapshots[lock])

    def promote_waiters(
        self, lock: LockId, clients: Iterable[ClientId], grant_count: int
    ) -> None:
        clients = list(clients)
        with self._guard(lock):
            if lock not in self._in_progress:
                raise NoReleaseInProgress(f"lock {lock} has no release in flight")
            if self.tracking == "set":
                # grants that raced the release stay alongside the promoted set
                self._members(lock).update(clients)
            self._counts[lock] += len(clients)
            self._restore[lock] = self._snapshots[lock]
            self._snapshots[lock] = max(self._snapshots[lock], grant_count)

    def rollback_promotion(self, lock: LockId, clients: Iterable[ClientId]) -> None:
        clients = list(clients)
        with self._guard(lock):
            if lock not in self._in_progress:
                raise NoReleaseInProgress(f"lock {lock} has no release in flight")
            if self.tracking == "set":
                members = self._members(lock)
                missing = [c for c in clients if c not in members]
                if missing:
                    raise NotHolder(f"{missing[0]} does not hold lock {lock}")
                members.difference_update(clients)
            elif self._counts[lock] < len(clients):
                raise NotHolder(f"lock {lock} has fewer holders than the rollback")
            self._counts[lock] -= len(clients)
            self._snapshots[lock] = self._restore.pop(lock, self._snapshots[lock])

    def finish_release(self, lock: LockId) -> None:
        with self._guard(lock):
            if lock not in self._in_progress:
                raise NoReleaseInProgress(f"lock {lock} has no release in flight")
            self._in_progress.discard(lock)
            self._restore.pop(lock, None)

    def release_in_progress(self, lock: LockId) -> bool:
        with self._guard(lock):
            return lock in self._in_progress

    def holder_count(self, lock: LockId) -> int:
        with self._guard(lock):
            return self._counts[lock]

    def record(self, lock: LockId) -> HolderRecord:
        with self._guard(lock):
            return HolderRecord(
                lock=lock,
                holders=frozenset(self._sets.get(lock, ())),
                holder_count=self._counts[lock],
                last_grant_snapshot=GrantCount(self._snapshots[lock]),
                release_in_progress=lock in self._in_progress,
            )


def holder_footprint(
    num_locks: int,
    tracking: Tracking,
    max_holders: int,
    counter_bytes: int = DEFAULT_HOLDER_COUNTER_BYTES,
    entry_bytes: int = DEFAULT_HOLDER_ENTRY_BYTES,
) -> int:
    if tracking == "counter":
        return num_locks * counter_bytes
    return num_locks * max_holders * entry_bytes
