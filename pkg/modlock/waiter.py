from collections import Counter, deque
from dataclasses import dataclass
from typing import Protocol, Sequence

from .constants import DEFAULT_WAITER_ENTRY_BYTES
from .core import AcquireMode, ClientId, ComponentId, GrantCount, LockId, LockMode, RequestId
from .errors import DuplicateWaiter, UnknownLock, WaiterCapacityExceeded
from .util import Stripes


@dataclass(frozen=True)
class WaiterEntry:
    client: ClientId
    requested: AcquireMode
    request: RequestId
    enqueue_time: float = 0.0

    @property
    def key(self) -> tuple[ClientId, RequestId]:
        return (self.client, self.request)


@dataclass(frozen=True)
class Selection:
    selected: tuple[WaiterEntry, ...]
    mode: LockMode
    snapshot: GrantCount

    @property
    def clients(self) -> list[ClientId]:
        return [entry.client for entry in self.selected]


class SelectionPolicy(Protocol):
    def choose(self, queue: Sequence[WaiterEntry]) -> int:
        """Number of entries to take from the head of the queue."""


class FifoBatchPolicy:
    def choose(self, queue: Sequence[WaiterEntry]) -> int:
        if not queue:
            return 0
        if queue[0].requested is AcquireMode.EXCLUSIVE:
            return 1
        taken = 0
        for entry in queue:
            if entry.requested is not AcquireMode.SHARED:
                break
            taken += 1
        return taken


class WaiterManager:
    def __init__(
        self,
        num_locks: int,
        max_waiters: int,
        policy: SelectionPolicy | None = None,
    ):
        self.num_locks = num_locks
        self.max_waiters = max_waiters
        self.policy = policy or FifoBatchPolicy()
        # storage is charged for max_waiters per lock up front, allocated on first use
        self._queues: dict[int, deque[WaiterEntry]] = {}
        self._received: Counter[int] = Counter()
        self._stripes = Stripes()

    def _guard(self, lock: LockId):
        if not 0 <= lock < self.num_locks:
            raise UnknownLock(lock, self.num_locks)
        return self._stripes[lock]

    def _queue(self, lock: LockId) -> deque[WaiterEntry]:
        return self._queues.setdefault(lock, deque())

    def enqueue_waiter(self, lock: LockId, entry: WaiterEntry) -> None:
        with self._guard(lock):
            queue = self._queue(lock)
            if any(existing.key == entry.key for existing in queue):
                raise DuplicateWaiter(f"{entry.client} request {entry.request} already waits")
            if len(queue) >= self.max_waiters:
                raise WaiterCapacityExceeded(
                    f"lock {lock} already has {self.max_waiters} waiters"
                )
            queue.append(entry)
            self._received[lock] += 1

    def select_waiters(self, lock: LockId, snapshot: int) -> Selection | None:
        with self._guard(lock):
            queue = self._queue(lock)
            taken = self.policy.choose(queue)
            if not taken:
                return None
            selected = tuple(queue.popleft() for _ in range(taken))
            mode = LockMode.from_acquire(selected[0].requested)
            return Selection(selected, mode, GrantCount(snapshot))

    def requeue_front(self, lock: LockId, selection: Selection) -> None:
        with self._guard(lock):
            queue = self._queue(lock)
            present = {entry.key for entry in queue}
            for entry in selection.selected:
                if entry.key in present:
                    raise DuplicateWaiter(f"{entry.client} request {entry.request} still queued")
            queue.extendleft(reversed(selection.selected))

    def waiter_locations(self, lock: LockId, selection: Selection) -> set[ComponentId]:
        return {entry.client.location for entry in selection.selected}

    def received(self, lock: LockId) -> int:
        with self._guard(lock):
            return self._received[lock]

    def queue(self, lock: LockId) -> tuple[WaiterEntry, ...]:
        with self._guard(lock):
            return tuple(self._queues.get(lock, ()))

    def waiting_locks(self) -> list[int]:
        return sorted(lock for lock, queue in self._queues.items() if queue)


def waiter_footprint(
    num_locks: int, max_waiters: int, entry_bytes: int = DEFAULT_WAITER_ENTRY_BYTES
) -> int:
    return num_locks * max_waiters * entry_bytes
