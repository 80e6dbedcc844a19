"""Deterministic discrete-event simulation of a scenario.

Events are ordered by (time, sequence) with the sequence taken at
scheduling time, so a scenario and a seed fix every output. Messages
between components are delayed by the hardware model: a remote hop pays the
sending and receiving components' communication budgets plus link latency,
and every message handled by a lock module waits for a processing thread on
its host.
"""

import heapq
import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .config import Scenario
from .constants import EVENTS_PER_OP, MIN_EVENT_BUDGET
from .core import MODULES, AcquireMode, ClientId, ComponentId, LockId, Module
from .errors import CapacityExceeded, ConfigError, InfeasibleAssignment, NonQuiescent
from .grant import GrantManager
from .hardware import HardwareModel, ResourceLedger, ThreadPool, link_key
from .holder import HolderManager
from .metrics import collect_metrics
from .mode import ModeManager
from .planner import (
    Assignment,
    charge_assignment,
    default_requirements,
    enumerate_assignments,
    grant_beside_clients,
    module_footprints,
)
from .protocol import Hop, Managers, Pipeline, ProtocolEngine, Route
from .verify import EventKind, FinalState, History
from .waiter import WaiterManager
from .workload import OpStream, Script, ScriptedOp, generate_ops

logger = logging.getLogger(__name__)


class EventLoop:
    def __init__(self) -> None:
        self.now = 0.0
        self.processed = 0
        self._events: list[tuple[float, int, Callable[..., None], tuple]] = []
        self._seq = itertools.count()

    def __len__(self) -> int:
        return len(self._events)

    def schedule(self, time: float, callback: Callable[..., None], *args: Any) -> None:
        if time < self.now:
            raise ValueError(f"cannot schedule at {time}, clock is at {self.now}")
        heapq.heappush(self._events, (time, next(self._seq), callback, args))

    def run(self, max_events: int) -> None:
        while self._events:
            if self.processed >= max_events:
                raise NonQuiescent(
                    f"{len(self._events)} event(s) still pending after {max_events} events"
                )
            time, _, callback, args = heapq.heappop(self._events)
            self.now = time
            self.processed += 1
            callback(*args)


class SimTransport:
    """Moves pipeline hand-offs through the simulated hardware."""

    def __init__(self, loop: EventLoop, hardware: HardwareModel):
        self.loop = loop
        self.hardware = hardware
        topology = hardware.topology
        self.pools = {name: ThreadPool(p.parallelism) for name, p in topology.components.items()}
        # per-thread working sets are fixed once module state is resident
        self.working_sets = {name: hardware.working_set(name) for name in topology.names()}
        self.routes: Counter[Route] = Counter()
        self._last_arrival: dict[tuple[ComponentId, ComponentId], float] = {}

    def now(self) -> float:
        return self.loop.now

    def deliver(
        self, pipeline: Pipeline, hop: Hop, handler: Callable[..., None], args: tuple
    ) -> None:
        self.routes[hop.route] += 1
        if hop.route is Route.INLINE:
            handler(*args)
            return
        now = self.loop.now
        depart = now
        if hop.route is Route.REMOTE and hop.to_client:
            reply_cost = self.hardware.topology.profile(hop.src).reply_cost
            if reply_cost:
                depart = self.pools[hop.src].run(now, reply_cost)
                self.hardware.ledger.processing_time[hop.src] += reply_cost
                self._waited(pipeline, hop, depart - now - reply_cost)
        arrive = depart
        if hop.route is Route.REMOTE:
            latency = self.hardware.topology.route(hop.src, hop.dst).latency
            delay = self.hardware.charge_message(hop.src, hop.dst, depart, category=hop.category)
            # messages on one channel arrive in the order they were sent
            channel = (hop.src, hop.dst)
            arrive = max(depart + delay, self._last_arrival.get(channel, 0.0))
            self._last_arrival[channel] = arrive
            self._waited(pipeline, hop, arrive - depart - latency)
        self.loop.schedule(arrive, self._arrive, pipeline, hop, handler, args)

    def _waited(self, pipeline: Pipeline, hop: Hop, wait: float) -> None:
        if hop.critical and wait > 0:
            pipeline.waited += wait

    def _arrive(
        self, pipeline: Pipeline, hop: Hop, handler: Callable[..., None], args: tuple
    ) -> None:
        if hop.route is Route.REMOTE:
            self.hardware.ledger.deliver(link_key(hop.src, hop.dst))
        if hop.to_client:
            handler(*args)
            return
        now = self.loop.now
        cost = self.hardware.charge_processing(
            hop.dst, handler.__name__.lstrip("_"), self.working_sets[hop.dst]
        )
        done = self.pools[hop.dst].run(now, cost)
        self._waited(pipeline, hop, done - now - cost)
        self.loop.schedule(done, handler, *args)


class ClientDriver:
    """Issues client operations and records what the clients observe.

    Closed-loop clients take the next operation from a shared stream as soon
    as they finish the previous one. Scripted clients follow their own list.
    A client never reacquires a lock before its previous release of that
    lock has been processed.
    """

    def __init__(self, sim: "Simulation"):
        self.sim = sim
        self.loop = sim.loop
        self.history = History()
        self.latencies: list[float] = []
        self.path_latencies: list[float] = []
        self.served: Counter[ComponentId] = Counter()
        self.deferred = 0
        self._issued = 0
        self._waiting_release: dict[tuple[ClientId, LockId], AcquireMode] = {}
        self._script: dict[ClientId, list[ScriptedOp]] = {}
        self._current: dict[ClientId, ScriptedOp] = {}

    @property
    def engine(self) -> ProtocolEngine:
        return self.sim.engine

    # closed loop

    def start_closed(self, clients: list[ClientId]) -> None:
        for client in clients:
            self.loop.schedule(0.0, self._next_op, client)

    def _next_op(self, client: ClientId) -> None:
        if self._issued >= self.sim.total_ops:
            return
        lock, mode = self.sim.stream.op(self._issued)
        self._issued += 1
        self._begin(client, lock, mode)

    # scripted

    def start_scripted(self, script: Script, clients: list[ClientId]) -> None:
        for index, ops in script.by_client().items():
            client = clients[index]
            self._script[client] = list(ops)
            self.loop.schedule(ops[0].at, self._next_scripted, client)

    def _next_scripted(self, client: ClientId) -> None:
        ops = self._script.get(client)
        if not ops:
            return
        op = ops[0]
        if op.at > self.loop.now:
            self.loop.schedule(op.at, self._next_scripted, client)
            return
        ops.pop(0)
        self._current[client] = op
        self._begin(client, op.lock, op.mode)

    # acquire

    def _begin(self, client: ClientId, lock: LockId, mode: AcquireMode) -> None:
        if self.engine.busy(client, lock):
            self.deferred += 1
            self._waiting_release[(client, lock)] = mode
            return
        now = self.loop.now
        self.history.record(now, client.id, lock, EventKind.ACQUIRE_INVOKE, mode)
        self.served[self.engine.assignment_for(lock).component(Module.MODE)] += 1
        self.engine.run_acquire(client, lock, mode)

    def granted(self, pipeline: Pipeline) -> None:
        now = self.loop.now
        self.history.record(now, pipeline.client.id, pipeline.lock, EventKind.GRANT_OBSERVED)
        latency = now - pipeline.started
        self.latencies.append(latency)
        if pipeline.granted_directly:
            self.path_latencies.append(latency - pipeline.waited)
        self._data_access(pipeline.client, pipeline.lock, self.sim.workload.critical_section_ops)

    def queued(self, pipeline: Pipeline) -> None:
        if not self.sim.notification.is_push:
            delay = self.sim.notification.poll_delay(0)
            self.loop.schedule(self.loop.now + delay, self._poll, pipeline)

    def pending(self, pipeline: Pipeline) -> None:
        delay = self.sim.notification.poll_delay(pipeline.polls)
        self.loop.schedule(self.loop.now + delay, self._poll, pipeline)

    def _poll(self, pipeline: Pipeline) -> None:
        if not pipeline.observed:
            self.engine.run_poll(pipeline.request)

    def aborted(self, pipeline: Pipeline) -> None:
        for entry in pipeline.selection.selected:
            self.history.record(self.loop.now, entry.client.id, pipeline.lock, EventKind.ABORT)

    # critical section

    def _data_access(self, client: ClientId, lock: LockId, remaining: int) -> None:
        if remaining == 0:
            self._hold(client, lock)
            return
        target = self.sim.workload.data_component
        self._data_hop(client.location, target, self._data_reply, client, lock, remaining)

    def _data_reply(self, client: ClientId, lock: LockId, remaining: int) -> None:
        source = self.sim.workload.data_component
        self._data_hop(source, client.location, self._data_access, client, lock, remaining - 1)

    def _data_hop(
        self,
        src: ComponentId,
        dst: ComponentId,
        then: Callable[..., None],
        *args: Any,
    ) -> None:
        now = self.loop.now
        if src == dst:
            self.loop.schedule(now, then, *args)
            return
        delay = self.sim.hardware.charge_message(src, dst, now, category="data")
        self.loop.schedule(now + delay, self._data_arrive, link_key(src, dst), then, args)

    def _data_arrive(self, key: tuple[ComponentId, ComponentId], then, args: tuple) -> None:
        self.sim.hardware.ledger.deliver(key)
        then(*args)

    def _hold(self, client: ClientId, lock: LockId) -> None:
        now = self.loop.now
        release_at = now + self.sim.workload.critical_section_time
        op = self._current.get(client)
        if op is not None and op.release_at is not None:
            release_at = max(op.release_at, now)
        self.loop.schedule(release_at, self._release, client, lock)

    # release

    def _release(self, client: ClientId, lock: LockId) -> None:
        now = self.loop.now
        self.history.record(now, client.id, lock, EventKind.RELEASE_INVOKE)
        self.engine.run_release(client, lock)
        # releases are asynchronous: the client moves on once the request is sent
        self.history.record(now, client.id, lock, EventKind.RELEASE_RETURN)
        if client in self._script:
            self._current.pop(client, None)
            self.loop.schedule(now, self._next_scripted, client)
        else:
            self.loop.schedule(now + self.sim.workload.think_time, self._next_op, client)

    def released(self, pipeline: Pipeline) -> None:
        key = (pipeline.client, pipeline.lock)
        mode = self._waiting_release.pop(key, None)
        if mode is not None:
            self.loop.schedule(self.loop.now, self._begin, pipeline.client, pipeline.lock, mode)


@dataclass
class RunResult:
    scenario: Scenario
    seed: int
    assignment: Assignment
    ledger: ResourceLedger
    history: History
    final_state: FinalState
    engine: ProtocolEngine
    latencies: np.ndarray
    path_latencies: np.ndarray
    served: Counter
    hot_locks: int = 0
    events: int = 0
    metrics: dict[str, float] = field(default_factory=dict)

    @property
    def traces(self) -> dict:
        return self.engine.traces

    @property
    def mode(self) -> ModeManager:
        return self.engine.managers.mode


def hot_lock_count(scenario: Scenario) -> int:
    """Largest number of locks whose full manager state fits the cache component."""
    cache = scenario.hot_cache
    if cache is None:
        return 0
    if cache.num_locks is not None:
        return min(cache.num_locks, scenario.workload.num_locks)
    capacity = scenario.topology.profile(cache.component).memory_capacity
    assignment = Assignment.monolithic(cache.component)
    requirements = default_requirements()

    def fits(n: int) -> bool:
        sizes = module_footprints(assignment, requirements, scenario.workload_params(n))
        return sum(sizes.values()) <= capacity

    low, high = 0, scenario.workload.num_locks
    if not fits(0):
        return 0
    while low < high:
        mid = (low + high + 1) // 2
        if fits(mid):
            low = mid
        else:
            high = mid - 1
    return low


def choose_assignment(scenario: Scenario) -> Assignment:
    spec = scenario.assignment
    if not spec.planned:
        return Assignment.of(spec.placement, fused=spec.fuse)
    plans = enumerate_assignments(
        scenario.topology,
        default_requirements(),
        scenario.workload_params(),
        strict=spec.strict,
    )
    feasible = [(plan, score) for plan, score in plans if score.feasible]
    if not feasible:
        raise InfeasibleAssignment(f"{scenario.name}: no feasible assignment")
    plan, score = feasible[0]
    logger.info("%s: planned %s (latency %.3f)", scenario.name, plan.describe(), score.predicted_grant_latency)
    return Assignment.of(dict(plan.placement), fused=spec.fuse)


def required_links(
    assignment: Assignment,
    locations: set[ComponentId],
    data_component: ComponentId | None,
) -> set[tuple[ComponentId, ComponentId]]:
    where = {module: assignment.component(module) for module in MODULES}
    beside = grant_beside_clients(assignment, locations)
    pairs = {
        (where[Module.MODE], where[Module.HOLDER]),
        (where[Module.MODE], where[Module.WAITER]),
        (where[Module.HOLDER], where[Module.WAITER]),
    }
    for location in locations:
        grant_at = location if beside else where[Module.GRANT]
        pairs.update(
            {
                (location, where[Module.MODE]),
                (location, where[Module.HOLDER]),
                (location, grant_at),
                (where[Module.MODE], grant_at),
            }
        )
        if data_component:
            pairs.add((location, data_component))
    return {link_key(a, b) for a, b in pairs if a != b}


class Simulation:
    def __init__(
        self,
        scenario: Scenario,
        seed: int | None = None,
        *,
        script: Script | None = None,
        validate: bool | None = None,
    ):
        self.scenario = scenario
        self.workload = scenario.workload
        self.notification = scenario.notification
        self.seed = scenario.workload.seed if seed is None else seed
        self.script = script
        self.loop = EventLoop()
        self.hardware = HardwareModel(scenario.topology)
        self.assignment = choose_assignment(scenario)
        self.hot_locks = hot_lock_count(scenario)
        self._charge_memory()

        num_locks = self.workload.num_locks
        if script is not None and script.locks() > num_locks:
            raise ConfigError(
                f"script uses {script.locks()} locks, scenario has {num_locks}",
                field="workload.num_locks",
            )
        self.locations = self.workload.client_locations(scenario.client_component)
        needed = required_links(self.assignment, set(self.locations), self.workload.data_component)
        if self.hot_locks:
            needed |= required_links(self._hot_assignment(), set(self.locations), None)
        missing = sorted(key for key in needed if key not in scenario.topology.links)
        if missing:
            names = ", ".join("-".join(key) for key in missing)
            raise ConfigError(f"missing link(s): {names}", field="links")

        managers = Managers(
            ModeManager(num_locks, validate=scenario.validate if validate is None else validate),
            HolderManager(num_locks, scenario.holder_tracking),
            WaiterManager(num_locks, max(scenario.max_waiters, self._num_clients())),
            GrantManager(
                self.assignment.component(Module.GRANT),
                scenario.notification,
                scenario.topology.names(),
            ),
        )
        self.driver = ClientDriver(self)
        self.transport = SimTransport(self.loop, self.hardware)
        self.engine = ProtocolEngine(
            managers,
            self.assignment,
            self.transport,
            client_components=set(self.locations),
            hot=(self._hot_assignment(), self.hot_locks) if self.hot_locks else None,
            listener=self.driver,
        )
        rng = np.random.default_rng(self.seed)
        self.total_ops = 0 if script is not None else self.workload.total_ops
        self.stream: OpStream = generate_ops(self.workload, rng) if script is None else None

    def _num_clients(self) -> int:
        if self.script is not None:
            return self.script.clients()
        return self.workload.num_clients

    def _hot_assignment(self) -> Assignment:
        return Assignment.monolithic(self.scenario.hot_cache.component)

    def _charge_memory(self) -> None:
        requirements = default_requirements()
        num_locks = self.workload.num_locks
        try:
            if self.hot_locks:
                charge_assignment(
                    self.hardware,
                    self._hot_assignment(),
                    requirements,
                    self.scenario.workload_params(self.hot_locks),
                )
            charge_assignment(
                self.hardware,
                self.assignment,
                requirements,
                self.scenario.workload_params(num_locks - self.hot_locks),
            )
        except CapacityExceeded as exc:
            raise InfeasibleAssignment(f"{self.scenario.name}: {exc}") from None

    def clients(self) -> list[ClientId]:
        count = self._num_clients()
        return [
            ClientId(index, self.locations[index % len(self.locations)]) for index in range(count)
        ]

    def final_state(self) -> FinalState:
        mode = self.engine.managers.mode
        holder = self.engine.managers.holder
        waiter = self.engine.managers.waiter
        locks = sorted(set(mode.touched_locks()) | set(waiter.waiting_locks()))
        return FinalState(
            modes={LockId(lock): mode.read_entry(LockId(lock)).mode for lock in locks},
            holders={LockId(lock): holder.holder_count(LockId(lock)) for lock in locks},
            waiting={LockId(lock): len(waiter.queue(LockId(lock))) for lock in locks},
        )

    def run(self) -> RunResult:
        clients = self.clients()
        if self.script is not None:
            self.driver.start_scripted(self.script, clients)
            scheduled = len(self.script)
        else:
            self.driver.start_closed(clients)
            scheduled = self.total_ops
        budget = max(MIN_EVENT_BUDGET, EVENTS_PER_OP * scheduled)
        self.loop.run(budget)
        in_flight = self.hardware.ledger.total_in_flight()
        if in_flight or self.engine.parked():
            raise NonQuiescent(
                f"{in_flight} message(s) in flight and {self.engine.parked()} parked at drain"
            )
        logger.debug(
            "%s seed %s: %d events, %d acquires, %d aborts",
            self.scenario.name,
            self.seed,
            self.loop.processed,
            len(self.driver.latencies),
            self.engine.managers.mode.aborts,
        )
        result = RunResult(
            scenario=self.scenario,
            seed=self.seed,
            assignment=self.assignment,
            ledger=self.hardware.ledger,
            history=self.driver.history,
            final_state=self.final_state(),
            engine=self.engine,
            latencies=np.asarray(self.driver.latencies, dtype=np.float64),
            path_latencies=np.asarray(self.driver.path_latencies, dtype=np.float64),
            served=self.driver.served,
            hot_locks=self.hot_locks,
            events=self.loop.processed,
        )
        result.metrics = collect_metrics(result)
        return result


def run(
    scenario: Scenario,
    seed: int | None = None,
    *,
    script: Script | None = None,
    validate: bool | None = None,
) -> RunResult:
    return Simulation(scenario, seed, script=script, validate=validate).run()

