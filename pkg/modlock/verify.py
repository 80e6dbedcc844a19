"""History recording and the checks run against it.

A client holds a lock from the moment it observes the grant until it
invokes the release. Holder-set membership is never consulted, so
promotions that are later rolled back do not count as holding.
"""

import enum
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .constants import LINEARIZABILITY_MAX_OPS
from .core import AcquireMode, LockId, LockMode
from .errors import MalformedHistory, TooLarge
from .mode import ModeManager
from .protocol import CAUSES, FIRST_STEPS, PipelineTrace, transition_relation


class EventKind(enum.Enum):
    ACQUIRE_INVOKE = "AcquireInvoke"
    GRANT_OBSERVED = "AcquireGrantObserved"
    RELEASE_INVOKE = "ReleaseInvoke"
    RELEASE_RETURN = "ReleaseReturn"
    ABORT = "Abort"


@dataclass(frozen=True)
class HistoryEvent:
    time: float
    client: int
    lock: LockId
    kind: EventKind
    mode: AcquireMode | None = None

    def to_record(self) -> dict:
        record = {
            "time": self.time,
            "client": self.client,
            "lock": int(self.lock),
            "kind": self.kind.value,
        }
        if self.mode is not None:
            record["mode"] = self.mode.value
        return record

    @classmethod
    def from_record(cls, record: Mapping) -> "HistoryEvent":
        mode = record.get("mode")
        return cls(
            float(record["time"]),
            int(record["client"]),
            LockId(int(record["lock"])),
            EventKind(record["kind"]),
            AcquireMode(mode) if mode else None,
        )


@dataclass
class History:
    events: list[HistoryEvent] = field(default_factory=list)

    def record(
        self,
        time: float,
        client: int,
        lock: LockId,
        kind: EventKind,
        mode: AcquireMode | None = None,
    ) -> None:
        self.events.append(HistoryEvent(time, client, lock, kind, mode))

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def count(self, kind: EventKind) -> int:
        return sum(1 for event in self.events if event.kind is kind)

    def dumps(self) -> str:
        return "".join(json.dumps(e.to_record(), sort_keys=True) + "\n" for e in self.events)

    def export(self, path: Path) -> None:
        path.write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "History":
        events = [
            HistoryEvent.from_record(json.loads(line))
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        return cls(events)


# well-formedness

_NEXT = {
    ("idle", EventKind.ACQUIRE_INVOKE): "invoked",
    ("invoked", EventKind.ABORT): "invoked",
    ("invoked", EventKind.GRANT_OBSERVED): "held",
    ("held", EventKind.RELEASE_INVOKE): "releasing",
    ("releasing", EventKind.RELEASE_RETURN): "idle",
}


def check_well_formed(events: Iterable[HistoryEvent]) -> None:
    state: dict[tuple[int, LockId], str] = {}
    last: dict[tuple[int, LockId], float] = {}
    for event in events:
        key = (event.client, event.lock)
        current = state.get(key, "idle")
        nxt = _NEXT.get((current, event.kind))
        if nxt is None:
            raise MalformedHistory(
                f"client {event.client} lock {event.lock}: {event.kind.value} while {current}"
            )
        if event.time < last.get(key, float("-inf")):
            raise MalformedHistory(
                f"client {event.client} lock {event.lock}: time goes backwards at {event.time}"
            )
        if event.kind is EventKind.ACQUIRE_INVOKE and event.mode is None:
            raise MalformedHistory(f"client {event.client}: acquire without a mode")
        state[key] = nxt
        last[key] = event.time


# mutual exclusion


@dataclass(frozen=True)
class HoldInterval:
    client: int
    lock: LockId
    mode: AcquireMode
    start: float
    end: float


@dataclass(frozen=True)
class CounterexampleWindow:
    lock: LockId
    first: HoldInterval
    second: HoldInterval

    def __str__(self) -> str:
        a, b = self.first, self.second
        return (
            f"lock {self.lock}: client {a.client} ({a.mode.value}) [{a.start}, {a.end}] "
            f"overlaps client {b.client} ({b.mode.value}) [{b.start}, {b.end}]"
        )


def hold_intervals(events: Sequence[HistoryEvent]) -> list[HoldInterval]:
    modes: dict[tuple[int, LockId], AcquireMode] = {}
    opened: dict[tuple[int, LockId], float] = {}
    intervals = []
    for event in events:
        key = (event.client, event.lock)
        if event.kind is EventKind.ACQUIRE_INVOKE:
            modes[key] = event.mode
        elif event.kind is EventKind.GRANT_OBSERVED:
            opened[key] = event.time
        elif event.kind is EventKind.RELEASE_INVOKE:
            intervals.append(HoldInterval(event.client, event.lock, modes[key], opened.pop(key), event.time))
    for (client, lock), start in opened.items():
        intervals.append(HoldInterval(client, lock, modes[(client, lock)], start, float("inf")))
    return intervals


def check_mutual_exclusion(history: History | Sequence[HistoryEvent]) -> CounterexampleWindow | None:
    events = list(history)
    check_well_formed(events)
    by_lock: dict[LockId, list[HoldInterval]] = {}
    for interval in hold_intervals(events):
        by_lock.setdefault(interval.lock, []).append(interval)
    for lock in sorted(by_lock):
        intervals = sorted(by_lock[lock], key=lambda i: (i.start, i.end, i.client))
        active: list[HoldInterval] = []
        for interval in intervals:
            active = [other for other in active if other.end > interval.start]
            for other in active:
                if AcquireMode.EXCLUSIVE in (other.mode, interval.mode):
                    return CounterexampleWindow(lock, other, interval)
            active.append(interval)
    return None


# linearizability


@dataclass(frozen=True)
class Operation:
    client: int
    lock: LockId
    kind: str
    mode: AcquireMode | None
    start: float
    end: float


@dataclass(frozen=True)
class LinearizabilityResult:
    ok: bool
    witness: tuple[Operation, ...] = ()


def operations(events: Sequence[HistoryEvent]) -> list[Operation]:
    """Acquire and release operations; acquires never granted are left out."""
    pending: dict[tuple[int, LockId], HistoryEvent] = {}
    ops = []
    for event in events:
        key = (event.client, event.lock)
        if event.kind in (EventKind.ACQUIRE_INVOKE, EventKind.RELEASE_INVOKE):
            pending[key] = event
        elif event.kind is EventKind.GRANT_OBSERVED:
            start = pending.pop(key)
            ops.append(Operation(event.client, event.lock, "acquire", start.mode, start.time, event.time))
        elif event.kind is EventKind.RELEASE_RETURN:
            start = pending.pop(key)
            ops.append(Operation(event.client, event.lock, "release", None, start.time, event.time))
    return ops


def _apply(state: frozenset, op: Operation) -> frozenset | None:
    """Sequential reader-writer lock: returns the next state or None if illegal."""
    holders = {(client, mode) for lock, client, mode in state if lock == op.lock}
    if op.kind == "acquire":
        if any(client == op.client for client, _ in holders):
            return None
        if op.mode is AcquireMode.EXCLUSIVE and holders:
            return None
        if any(mode is AcquireMode.EXCLUSIVE for _, mode in holders):
            return None
        return state | {(op.lock, op.client, op.mode)}
    held = [entry for entry in state if entry[0] == op.lock and entry[1] == op.client]
    if not held:
        return None
    return state - {held[0]}


def check_linearizable(
    history: History | Sequence[HistoryEvent], max_ops: int = LINEARIZABILITY_MAX_OPS
) -> LinearizabilityResult:
    events = list(history)
    check_well_formed(events)
    ops = operations(events)
    if len(ops) > max_ops:
        raise TooLarge(f"{len(ops)} operations exceed the brute-force bound of {max_ops}")
    everything = (1 << len(ops)) - 1

    @lru_cache(maxsize=None)
    def search(done: int, state: frozenset) -> tuple[int, ...] | None:
        if done == everything:
            return ()
        remaining = [i for i in range(len(ops)) if not done & (1 << i)]
        for i in remaining:
            op = ops[i]
            # an op may go next only if no remaining op finished before it started
            if any(ops[j].end < op.start for j in remaining if j != i):
                continue
            nxt = _apply(state, op)
            if nxt is None:
                continue
            rest = search(done | (1 << i), nxt)
            if rest is not None:
                return (i, *rest)
        return None

    order = search(0, frozenset())
    if order is None:
        return LinearizabilityResult(False)
    return LinearizabilityResult(True, tuple(ops[i] for i in order))


# liveness


@dataclass(frozen=True)
class FinalState:
    modes: Mapping[LockId, LockMode]
    holders: Mapping[LockId, int]
    waiting: Mapping[LockId, int]


@dataclass(frozen=True)
class StuckRequests:
    ungranted: tuple[tuple[int, LockId], ...]
    waiting_locks: tuple[LockId, ...]
    inconsistent_locks: tuple[LockId, ...]

    def __str__(self) -> str:
        parts = []
        if self.ungranted:
            parts.append(f"{len(self.ungranted)} acquire(s) never granted")
        if self.waiting_locks:
            parts.append(f"waiters left on lock(s) {list(self.waiting_locks)}")
        if self.inconsistent_locks:
            parts.append(f"mode disagrees with holders on lock(s) {list(self.inconsistent_locks)}")
        return "; ".join(parts)


def check_liveness(
    history: History | Sequence[HistoryEvent], final_state: FinalState
) -> StuckRequests | None:
    outstanding: dict[tuple[int, LockId], int] = {}
    for event in history:
        key = (event.client, event.lock)
        if event.kind is EventKind.ACQUIRE_INVOKE:
            outstanding[key] = outstanding.get(key, 0) + 1
        elif event.kind is EventKind.GRANT_OBSERVED:
            outstanding[key] -= 1
    ungranted = tuple(sorted(key for key, count in outstanding.items() if count))
    waiting = tuple(sorted(lock for lock, count in final_state.waiting.items() if count))
    inconsistent = tuple(
        sorted(
            lock
            for lock, mode in final_state.modes.items()
            if (mode is LockMode.FREE) != (final_state.holders.get(lock, 0) == 0)
        )
    )
    if ungranted or waiting or inconsistent:
        return StuckRequests(ungranted, waiting, inconsistent)
    return None


# traces and counters


def check_trace(trace: PipelineTrace) -> list[str]:
    steps = trace.steps
    if not steps:
        return [f"request {trace.request}: empty trace"]
    problems = []
    if steps[0].step not in FIRST_STEPS:
        problems.append(f"request {trace.request}: starts with {steps[0].step.value}")
    edges = transition_relation()
    for prev, step in zip(steps, steps[1:]):
        if (prev.step, step.step) not in edges:
            problems.append(
                f"request {trace.request}: {prev.step.value} -> {step.step.value} is not allowed"
            )
    for index, entry in enumerate(steps[1:], start=1):
        cause = CAUSES.get(entry.step)
        if cause is not None:
            before = next((s for s in steps if s.step is cause), steps[index - 1])
        else:
            before = steps[index - 1]
        if entry.time < before.time:
            problems.append(
                f"request {trace.request}: {entry.step.value} at {entry.time} precedes "
                f"{before.step.value} at {before.time}"
            )
    return problems


def check_grant_accounting(mode: ModeManager) -> list[LockId]:
    """Locks whose grant counter differs from grants plus promotions."""
    bad = []
    for lock in sorted(set(mode.granted_decisions) | set(mode.promoted)):
        entry = mode.read_entry(LockId(lock))
        if entry.grant_count != mode.granted_decisions[lock] + mode.promoted[lock]:
            bad.append(LockId(lock))
    return bad
