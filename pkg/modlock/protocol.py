"""Acquire and release pipelines across the four lock managers.

Each pipeline step is a handler that runs on the component hosting its
manager. Handlers hand work to the next manager through a ``Transport``:
``LocalTransport`` calls straight through, the simulator's transport delays
each hand-off by the modeled network and processing time.

Release validation uses grant counting. The holder manager snapshots the
grant count when the last holder leaves; the mode manager commits the
post-release mode only if no grant happened since that snapshot, otherwise
the promotion is rolled back and the selected waiters go back to the head
of the queue.
"""

import enum
import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Protocol, Union

from .core import AcquireMode, ClientId, ComponentId, LockId, LockMode, Module, RequestId
from .errors import DuplicateRequest, NotHolder
from .grant import GrantManager, GrantNotice, NoticeOutcome, PollResult
from .holder import HolderManager
from .mode import ModeManager, ValidationResult
from .planner import Assignment, grant_beside_clients
from .waiter import Selection, WaiterEntry, WaiterManager

logger = logging.getLogger(__name__)

Endpoint = Union[Module, ClientId]


class PipelineStep(enum.Enum):
    DECIDE_AT_MODE = "DecideAtMode"
    REPLY_VIA_GRANT = "ReplyViaGrant"
    ADD_HOLDER = "AddHolder"
    ENQUEUE_WAITER = "EnqueueWaiter"
    REMOVE_HOLDER = "RemoveHolder"
    SELECT_WAITERS = "SelectWaiters"
    PROMOTE_HOLDERS = "PromoteHolders"
    VALIDATE_MODE = "ValidateMode"
    NOTIFY_GRANTED = "NotifyGranted"
    ABORT_ROLLBACK = "AbortRollback"
    RESET_TO_FREE = "ResetToFree"


S = PipelineStep

FIRST_STEPS = frozenset({S.DECIDE_AT_MODE, S.REMOVE_HOLDER})

# AddHolder and EnqueueWaiter are issued by the mode manager alongside the reply
CAUSES = {S.ADD_HOLDER: S.DECIDE_AT_MODE, S.ENQUEUE_WAITER: S.DECIDE_AT_MODE}


def transition_relation() -> frozenset[tuple[PipelineStep, PipelineStep]]:
    return frozenset(
        {
            (S.DECIDE_AT_MODE, S.REPLY_VIA_GRANT),
            (S.REPLY_VIA_GRANT, S.ADD_HOLDER),
            (S.REPLY_VIA_GRANT, S.ENQUEUE_WAITER),
            (S.REMOVE_HOLDER, S.SELECT_WAITERS),
            (S.SELECT_WAITERS, S.PROMOTE_HOLDERS),
            (S.SELECT_WAITERS, S.RESET_TO_FREE),
            (S.RESET_TO_FREE, S.SELECT_WAITERS),
            (S.PROMOTE_HOLDERS, S.VALIDATE_MODE),
            (S.VALIDATE_MODE, S.NOTIFY_GRANTED),
            (S.VALIDATE_MODE, S.ABORT_ROLLBACK),
        }
    )


@dataclass(frozen=True)
class TraceStep:
    step: PipelineStep
    component: ComponentId
    time: float


@dataclass
class PipelineTrace:
    request: RequestId
    client: ClientId
    lock: LockId
    kind: str
    steps: list[TraceStep] = field(default_factory=list)

    def record(self, step: PipelineStep, component: ComponentId, time: float) -> None:
        entry = TraceStep(step, component, time)
        if step is S.REPLY_VIA_GRANT:
            # sibling branches may finish first; keep the reply ahead of them
            for index, existing in enumerate(self.steps):
                if existing.step in CAUSES:
                    self.steps.insert(index, entry)
                    return
        self.steps.append(entry)

    def names(self) -> list[str]:
        return [entry.step.value for entry in self.steps]


@dataclass
class Pipeline:
    request: RequestId
    client: ClientId
    lock: LockId
    mode: AcquireMode | None
    trace: PipelineTrace
    started: float
    # time spent queued for processing threads or communication budget
    # along the request -> decision -> reply path
    waited: float = 0.0
    granted_directly: bool = False
    observed: bool = False
    snapshot: int = 0
    selection: Selection | None = None
    notified: bool = False
    polls: int = 0


class Route(enum.Enum):
    INLINE = "inline"
    LOCAL = "local"
    REMOTE = "remote"


@dataclass(frozen=True)
class Hop:
    src: ComponentId
    dst: ComponentId
    route: Route
    to_client: bool
    critical: bool = False
    category: str = "lock"


class Transport(Protocol):
    def now(self) -> float: ...

    def deliver(
        self, pipeline: Pipeline, hop: Hop, handler: Callable[..., None], args: tuple
    ) -> None: ...


class LocalTransport:
    def __init__(self, clock: float = 0.0):
        self.clock = clock
        self.hops: list[Hop] = []

    def now(self) -> float:
        return self.clock

    def deliver(
        self, pipeline: Pipeline, hop: Hop, handler: Callable[..., None], args: tuple
    ) -> None:
        self.hops.append(hop)
        handler(*args)


class Listener(Protocol):
    def granted(self, pipeline: Pipeline) -> None: ...

    def queued(self, pipeline: Pipeline) -> None: ...

    def pending(self, pipeline: Pipeline) -> None: ...

    def released(self, pipeline: Pipeline) -> None: ...

    def aborted(self, pipeline: Pipeline) -> None: ...


class NullListener:
    def granted(self, pipeline: Pipeline) -> None:
        pass

    def queued(self, pipeline: Pipeline) -> None:
        pass

    def pending(self, pipeline: Pipeline) -> None:
        pass

    def released(self, pipeline: Pipeline) -> None:
        pass

    def aborted(self, pipeline: Pipeline) -> None:
        pass


@dataclass
class Managers:
    mode: ModeManager
    holder: HolderManager
    waiter: WaiterManager
    grant: GrantManager


class ProtocolEngine:
    """Drives pipelines over one set of managers.

    ``hot`` optionally routes locks below a threshold id to a second
    assignment, used to cache the hottest locks on a constrained component.
    """

    def __init__(
        self,
        managers: Managers,
        assignment: Assignment,
        transport: Transport | None = None,
        *,
        client_components: Iterable[ComponentId] = (),
        hot: tuple[Assignment, int] | None = None,
        listener: Listener | None = None,
    ):
        self.managers = managers
        self.assignment = assignment
        self.transport = transport or LocalTransport()
        self.hot = hot
        self.listener = listener or NullListener()
        clients = set(client_components)
        self._beside = grant_beside_clients(assignment, clients)
        self._beside_hot = hot is not None and grant_beside_clients(hot[0], clients)
        self._ids = itertools.count(1)
        self._sessions: dict[tuple[ClientId, LockId], str] = {}
        self._held: set[tuple[LockId, ClientId]] = set()
        self._parked: dict[LockId, deque[Pipeline]] = {}
        self.acquires: dict[RequestId, Pipeline] = {}
        self.traces: dict[RequestId, PipelineTrace] = {}
        self.parked_total = 0
        self.reselects = 0

    # routing

    def assignment_for(self, lock: LockId) -> Assignment:
        if self.hot is not None and lock < self.hot[1]:
            return self.hot[0]
        return self.assignment

    def is_hot(self, lock: LockId) -> bool:
        return self.hot is not None and lock < self.hot[1]

    def grant_beside(self, lock: LockId) -> bool:
        return self._beside_hot if self.is_hot(lock) else self._beside

    def _where(self, lock: LockId, endpoint: Endpoint, agent: ClientId) -> ComponentId:
        if isinstance(endpoint, ClientId):
            return endpoint.location
        assignment = self.assignment_for(lock)
        if endpoint is Module.GRANT and self.grant_beside(lock):
            return agent.location
        return assignment.component(endpoint)

    def _send(
        self,
        pipeline: Pipeline,
        src: Endpoint,
        dst: Endpoint,
        handler: Callable[..., None],
        *args: Any,
        agent: ClientId | None = None,
        critical: bool = False,
        category: str = "lock",
    ) -> None:
        agent = agent or pipeline.client
        src_at = self._where(pipeline.lock, src, agent)
        dst_at = self._where(pipeline.lock, dst, agent)
        assignment = self.assignment_for(pipeline.lock)
        if (
            isinstance(src, Module)
            and isinstance(dst, Module)
            and src_at == dst_at
            and assignment.fused(src, dst)
        ):
            route = Route.INLINE
        elif src_at == dst_at:
            route = Route.LOCAL
        else:
            route = Route.REMOTE
        hop = Hop(src_at, dst_at, route, isinstance(dst, ClientId), critical, category)
        self.transport.deliver(pipeline, hop, handler, args)

    def _new_pipeline(
        self, client: ClientId, lock: LockId, mode: AcquireMode | None, kind: str
    ) -> Pipeline:
        request = RequestId(next(self._ids))
        trace = PipelineTrace(request, client, lock, kind)
        self.traces[request] = trace
        return Pipeline(request, client, lock, mode, trace, self.transport.now())

    def _record(self, pipeline: Pipeline, step: PipelineStep, module: Module, agent=None) -> None:
        component = self._where(pipeline.lock, module, agent or pipeline.client)
        pipeline.trace.record(step, component, self.transport.now())

    def busy(self, client: ClientId, lock: LockId) -> bool:
        return (client, lock) in self._sessions

    def holding(self, client: ClientId, lock: LockId) -> bool:
        return self._sessions.get((client, lock)) == "holding"

    # acquisition

    def run_acquire(self, client: ClientId, lock: LockId, mode: AcquireMode) -> PipelineTrace:
        if (client, lock) in self._sessions:
            raise DuplicateRequest(f"{client} already has a request on lock {lock}")
        self._sessions[(client, lock)] = "acquiring"
        pipeline = self._new_pipeline(client, lock, mode, "acquire")
        self.acquires[pipeline.request] = pipeline
        self._send(pipeline, client, Module.MODE, self._decide, pipeline, critical=True)
        return pipeline.trace

    def _decide(self, pipeline: Pipeline) -> None:
        decision = self.managers.mode.decide_acquire(pipeline.lock, pipeline.mode)
        self._record(pipeline, S.DECIDE_AT_MODE, Module.MODE)
        pipeline.granted_directly = decision.granted
        outcome = NoticeOutcome.GRANTED if decision.granted else NoticeOutcome.QUEUED
        self._send(
            pipeline, Module.MODE, Module.GRANT, self._reply, pipeline, outcome, critical=True
        )
        if decision.granted:
            self._send(
                pipeline, Module.MODE, Module.HOLDER, self._add_holder, pipeline, decision.new_count
            )
        else:
            self._send(pipeline, Module.MODE, Module.WAITER, self._enqueue, pipeline)

    def _reply(self, pipeline: Pipeline, outcome: NoticeOutcome) -> None:
        self._record(pipeline, S.REPLY_VIA_GRANT, Module.GRANT)
        notice = GrantNotice(pipeline.request, pipeline.client, pipeline.lock, outcome)
        grant = self.managers.grant
        if grant.mode.is_push:
            host = self._where(pipeline.lock, Module.GRANT, pipeline.client)
            grant.notify(notice, [pipeline.client.location], host=host)
        else:
            grant.record_grant(notice)
        self._send(
            pipeline,
            Module.GRANT,
            pipeline.client,
            self._client_outcome,
            pipeline,
            outcome,
            critical=True,
        )

    def _add_holder(self, pipeline: Pipeline, grant_count: int) -> None:
        self.managers.holder.add_holders(pipeline.lock, [pipeline.client], grant_count)
        self._held.add((pipeline.lock, pipeline.client))
        self._record(pipeline, S.ADD_HOLDER, Module.HOLDER)
        self._drain_parked(pipeline.lock)

    def _enqueue(self, pipeline: Pipeline) -> None:
        entry = WaiterEntry(
            pipeline.client, pipeline.mode, pipeline.request, self.transport.now()
        )
        self.managers.waiter.enqueue_waiter(pipeline.lock, entry)
        self._record(pipeline, S.ENQUEUE_WAITER, Module.WAITER)

    def _client_outcome(self, pipeline: Pipeline, outcome: NoticeOutcome) -> None:
        if pipeline.observed:
            return
        if outcome is NoticeOutcome.GRANTED:
            pipeline.observed = True
            self._sessions[(pipeline.client, pipeline.lock)] = "holding"
            self.listener.granted(pipeline)
        else:
            self.listener.queued(pipeline)

    def run_poll(self, request: RequestId) -> None:
        pipeline = self.acquires[request]
        pipeline.polls += 1
        self._send(
            pipeline, pipeline.client, Module.GRANT, self._poll, pipeline, category="poll"
        )

    def _poll(self, pipeline: Pipeline) -> None:
        result = self.managers.grant.poll(pipeline.client, pipeline.request)
        self._send(
            pipeline,
            Module.GRANT,
            pipeline.client,
            self._poll_result,
            pipeline,
            result,
            category="poll",
        )

    def _poll_result(self, pipeline: Pipeline, result: PollResult) -> None:
        if result is PollResult.GRANTED:
            self._client_outcome(pipeline, NoticeOutcome.GRANTED)
        elif not pipeline.observed:
            self.listener.pending(pipeline)

    # release

    def run_release(self, client: ClientId, lock: LockId) -> PipelineTrace:
        if self._sessions.get((client, lock)) != "holding":
            raise NotHolder(f"{client} does not hold lock {lock}")
        self._sessions[(client, lock)] = "releasing"
        pipeline = self._new_pipeline(client, lock, None, "release")
        self._send(pipeline, client, Module.HOLDER, self._remove, pipeline)
        return pipeline.trace

    def _ready(self, pipeline: Pipeline) -> bool:
        return (pipeline.lock, pipeline.client) in self._held and not (
            self.managers.holder.release_in_progress(pipeline.lock)
        )

    def _remove(self, pipeline: Pipeline) -> None:
        if not self._ready(pipeline):
            # the grant's AddHolder, or an earlier release pipeline, is still in flight
            self._parked.setdefault(pipeline.lock, deque()).append(pipeline)
            self.parked_total += 1
            logger.debug("parked release of lock %s by %s", pipeline.lock, pipeline.client)
            return
        self._remove_now(pipeline)

    def _remove_now(self, pipeline: Pipeline) -> None:
        outcome = self.managers.holder.remove_holder(pipeline.lock, pipeline.client)
        self._held.discard((pipeline.lock, pipeline.client))
        self._record(pipeline, S.REMOVE_HOLDER, Module.HOLDER)
        del self._sessions[(pipeline.client, pipeline.lock)]
        self.listener.released(pipeline)
        if not outcome.last_holder:
            return
        pipeline.snapshot = outcome.snapshot
        self._send(pipeline, Module.HOLDER, Module.WAITER, self._select, pipeline)

    def _drain_parked(self, lock: LockId) -> None:
        queue = self._parked.get(lock)
        while queue:
            ready = next((p for p in queue if self._ready(p)), None)
            if ready is None:
                return
            queue.remove(ready)
            self._remove_now(ready)

    def _select(self, pipeline: Pipeline) -> None:
        waiter = self.managers.waiter
        selection = waiter.select_waiters(pipeline.lock, pipeline.snapshot)
        self._record(pipeline, S.SELECT_WAITERS, Module.WAITER)
        if selection is None:
            self._send(
                pipeline,
                Module.WAITER,
                Module.MODE,
                self._reset,
                pipeline,
                waiter.received(pipeline.lock),
            )
            return
        pipeline.selection = selection
        self._send(pipeline, Module.WAITER, Module.HOLDER, self._promote, pipeline)

    def _reset(self, pipeline: Pipeline, received: int) -> None:
        mode = self.managers.mode
        self._record(pipeline, S.RESET_TO_FREE, Module.MODE)
        if mode.pending_deferrals(pipeline.lock, received) > 0:
            # an enqueue decided before the empty selection has not reached the waiter manager
            self.reselects += 1
            self._send(pipeline, Module.MODE, Module.WAITER, self._select, pipeline)
            return
        result = mode.validate_and_update(pipeline.lock, LockMode.FREE, pipeline.snapshot, 0)
        if result is ValidationResult.ABORTED:
            logger.debug("reset of lock %s aborted by a racing grant", pipeline.lock)
        self._send(pipeline, Module.MODE, Module.HOLDER, self._finish, pipeline)

    def _promote(self, pipeline: Pipeline) -> None:
        selection = pipeline.selection
        count = pipeline.snapshot + len(selection.selected)
        self.managers.holder.promote_waiters(pipeline.lock, selection.clients, count)
        self._held.update((pipeline.lock, client) for client in selection.clients)
        self._record(pipeline, S.PROMOTE_HOLDERS, Module.HOLDER)
        self._send(pipeline, Module.HOLDER, Module.MODE, self._validate, pipeline)

    def _validate(self, pipeline: Pipeline) -> None:
        selection = pipeline.selection
        result = self.managers.mode.validate_and_update(
            pipeline.lock, selection.mode, pipeline.snapshot, len(selection.selected)
        )
        self._record(pipeline, S.VALIDATE_MODE, Module.MODE)
        if result is ValidationResult.ABORTED:
            logger.debug(
                "validation of lock %s aborted: snapshot %s is stale",
                pipeline.lock,
                pipeline.snapshot,
            )
            self._send(pipeline, Module.MODE, Module.WAITER, self._abort, pipeline)
            return
        if self.grant_beside(pipeline.lock):
            for entry in selection.selected:
                self._send(
                    pipeline,
                    Module.MODE,
                    Module.GRANT,
                    self._notify_granted,
                    pipeline,
                    (entry,),
                    agent=entry.client,
                )
        else:
            targets = self.managers.waiter.waiter_locations(pipeline.lock, selection)
            self._send(
                pipeline,
                Module.MODE,
                Module.GRANT,
                self._notify_granted,
                pipeline,
                selection.selected,
                targets,
            )
        self._send(pipeline, Module.MODE, Module.HOLDER, self._finish, pipeline)

    def _notify_granted(
        self,
        pipeline: Pipeline,
        entries: tuple[WaiterEntry, ...],
        targets: set[ComponentId] | None = None,
    ) -> None:
        if not pipeline.notified:
            pipeline.notified = True
            self._record(pipeline, S.NOTIFY_GRANTED, Module.GRANT, agent=entries[0].client)
        grant = self.managers.grant
        notices = [
            GrantNotice(entry.request, entry.client, pipeline.lock, NoticeOutcome.GRANTED)
            for entry in entries
        ]
        if not grant.mode.is_push:
            for notice in notices:
                grant.record_grant(notice)
            return
        if targets is not None:
            # waiters sharing a component get one push
            host = self._where(pipeline.lock, Module.GRANT, entries[0].client)
            grant.notify(notices[0], targets, host=host)
        for entry, notice in zip(entries, notices):
            if targets is None:
                host = self._where(pipeline.lock, Module.GRANT, entry.client)
                grant.notify(notice, [entry.client.location], host=host)
            waiting = self.acquires[entry.request]
            self._send(
                pipeline,
                Module.GRANT,
                entry.client,
                self._client_outcome,
                waiting,
                NoticeOutcome.GRANTED,
                agent=entry.client,
            )

    def _abort(self, pipeline: Pipeline) -> None:
        self.managers.waiter.requeue_front(pipeline.lock, pipeline.selection)
        self._record(pipeline, S.ABORT_ROLLBACK, Module.WAITER)
        self.listener.aborted(pipeline)
        self._send(pipeline, Module.WAITER, Module.HOLDER, self._rollback, pipeline)

    def _rollback(self, pipeline: Pipeline) -> None:
        clients = pipeline.selection.clients
        self.managers.holder.rollback_promotion(pipeline.lock, clients)
        self._held.difference_update((pipeline.lock, client) for client in clients)
        self._finish(pipeline)

    def _finish(self, pipeline: Pipeline) -> None:
        self.managers.holder.finish_release(pipeline.lock)
        self._drain_parked(pipeline.lock)

    # inspection

    def parked(self) -> int:
        return sum(len(queue) for queue in self._parked.values())

    def outstanding(self) -> dict[tuple[ClientId, LockId], str]:
        return dict(self._sessions)
