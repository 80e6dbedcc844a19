"""Simulated heterogeneous hardware: components, links and resource charging.

Every component has three resource axes. Processing is a per-message cost
scaled by a cache-miss multiplier once the per-thread working set no longer
fits in fast memory. Memory is a hard capacity on resident module state.
Communication is a rate budget shared by all links touching the component;
messages beyond the rate queue in FIFO order.
"""

import enum
import heapq
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .constants import DEFAULT_MISS_PENALTY, US_PER_SECOND
from .core import MODULES, ComponentId, Module
from .errors import CapacityExceeded, ConfigError, UnknownComponent, UnknownLink

logger = logging.getLogger(__name__)

RESOURCES = ("processing", "memory", "communication")
CATEGORIES = ("lock", "poll", "data")


class ComponentKind(enum.Enum):
    SERVER_CPU = "ServerCPU"
    SMART_NIC = "SmartNIC"
    SWITCH = "Switch"
    COMPUTE_NODE = "ComputeNode"
    MEMORY_NODE = "MemoryNode"


@dataclass(frozen=True)
class HardwareProfile:
    component: ComponentId
    kind: ComponentKind
    proc_cost_per_op: float
    parallelism: int
    memory_capacity: float
    fast_memory_capacity: float
    comm_ops_budget: float
    miss_penalty_multiplier: float = DEFAULT_MISS_PENALTY
    reply_cost: float = 0.0
    scarce: frozenset[str] = frozenset()
    eligible: frozenset[str] = frozenset(m.value for m in MODULES)

    def __post_init__(self) -> None:
        where = f"components.{self.component}"
        for name in (
            "proc_cost_per_op",
            "parallelism",
            "memory_capacity",
            "fast_memory_capacity",
            "comm_ops_budget",
            "miss_penalty_multiplier",
        ):
            if not getattr(self, name) > 0:
                raise ConfigError("must be > 0", field=f"{where}.{name}")
        if self.reply_cost < 0:
            raise ConfigError("must be >= 0", field=f"{where}.reply_cost")
        if self.fast_memory_capacity > self.memory_capacity:
            raise ConfigError(
                "must not exceed memory_capacity", field=f"{where}.fast_memory_capacity"
            )
        unknown = set(self.scarce) - set(RESOURCES)
        if unknown:
            raise ConfigError(
                f"unknown resource(s): {', '.join(sorted(unknown))}", field=f"{where}.scarce"
            )
        unknown = set(self.eligible) - {m.value for m in MODULES}
        if unknown:
            raise ConfigError(
                f"unknown module(s): {', '.join(sorted(unknown))}", field=f"{where}.eligible"
            )

    @property
    def message_interval(self) -> float:
        """Simulated microseconds one communication op occupies the component."""
        return US_PER_SECOND / self.comm_ops_budget

    def hosts(self, module: Module) -> bool:
        return module.value in self.eligible


def link_key(a: ComponentId, b: ComponentId) -> tuple[ComponentId, ComponentId]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class LinkProfile:
    endpoints: tuple[ComponentId, ComponentId]
    latency: float
    per_message_cost: float = 1.0

    def __post_init__(self) -> None:
        name = "-".join(self.endpoints)
        if self.latency < 0:
            raise ConfigError("must be >= 0", field=f"links.{name}.latency")
        if self.per_message_cost < 0:
            raise ConfigError("must be >= 0", field=f"links.{name}.per_message_cost")

    @property
    def key(self) -> tuple[ComponentId, ComponentId]:
        return link_key(*self.endpoints)


class Topology:
    """Components plus symmetric links. ``a``-``a`` links are allowed and stand
    for traffic between distinct machines of the same tier."""

    def __init__(self, components: Iterable[HardwareProfile], links: Iterable[LinkProfile]):
        self.components: dict[ComponentId, HardwareProfile] = {}
        for profile in components:
            if profile.component in self.components:
                raise ConfigError("defined twice", field=f"components.{profile.component}")
            self.components[profile.component] = profile
        if not self.components:
            raise ConfigError("at least one component is required", field="components")
        self.links: dict[tuple[ComponentId, ComponentId], LinkProfile] = {}
        for link in links:
            for end in link.endpoints:
                if end not in self.components:
                    raise ConfigError(
                        f"unknown component '{end}'", field=f"links.{'-'.join(link.endpoints)}"
                    )
            self.links[link.key] = link

    def __contains__(self, component: object) -> bool:
        return component in self.components

    def names(self) -> list[ComponentId]:
        return list(self.components)

    def profile(self, component: ComponentId) -> HardwareProfile:
        try:
            return self.components[component]
        except KeyError:
            raise UnknownComponent(f"unknown component '{component}'") from None

    def route(self, src: ComponentId, dst: ComponentId) -> LinkProfile:
        self.profile(src)
        self.profile(dst)
        link = self.links.get(link_key(src, dst))
        if link is None:
            raise UnknownLink(f"no link between '{src}' and '{dst}'")
        return link


class CommBudget:
    """FIFO pacing of communication ops on one component.

    A token bucket with a single token: each op takes ``interval`` of the
    component's communication capacity, and an op that finds the bucket
    empty waits until the previous ones have drained.
    """

    def __init__(self, interval: float):
        self.interval = interval
        self.next_free = 0.0

    def earliest(self, now: float) -> float:
        return max(now, self.next_free)

    def consume(self, start: float, ops: float) -> None:
        self.next_free = max(self.next_free, start) + ops * self.interval


class ThreadPool:
    def __init__(self, parallelism: int):
        self._free = [0.0] * parallelism

    def run(self, now: float, cost: float) -> float:
        """Return completion time of a job of ``cost`` arriving at ``now``."""
        start = max(now, heapq.heappop(self._free))
        done = start + cost
        heapq.heappush(self._free, done)
        return done


@dataclass
class ResourceLedger:
    processing_ops: Counter = field(default_factory=Counter)
    processing_time: Counter = field(default_factory=Counter)
    processing_kinds: Counter = field(default_factory=Counter)
    comm_ops: Counter = field(default_factory=Counter)
    comm_by_category: dict[str, Counter] = field(
        default_factory=lambda: {category: Counter() for category in CATEGORIES}
    )
    resident: dict[ComponentId, Counter] = field(default_factory=lambda: defaultdict(Counter))
    peak_memory: Counter = field(default_factory=Counter)
    link_sent: Counter = field(default_factory=Counter)
    link_received: Counter = field(default_factory=Counter)

    def in_flight(self, key: tuple[ComponentId, ComponentId]) -> int:
        return self.link_sent[key] - self.link_received[key]

    def total_in_flight(self) -> int:
        return sum(self.in_flight(key) for key in self.link_sent)

    def resident_bytes(self, component: ComponentId) -> float:
        return sum(self.resident[component].values())

    def deliver(self, key: tuple[ComponentId, ComponentId]) -> None:
        self.link_received[key] += 1


class HardwareModel:
    def __init__(self, topology: Topology, ledger: ResourceLedger | None = None):
        self.topology = topology
        self.ledger = ledger or ResourceLedger()
        self._budgets = {
            name: CommBudget(profile.message_interval)
            for name, profile in topology.components.items()
        }

    def working_set(self, component: ComponentId) -> float:
        """Resident module bytes one thread of ``component`` touches."""
        profile = self.topology.profile(component)
        return self.ledger.resident_bytes(component) / profile.parallelism

    def processing_cost(self, component: ComponentId, working_set: float) -> float:
        profile = self.topology.profile(component)
        if working_set > profile.fast_memory_capacity:
            return profile.proc_cost_per_op * profile.miss_penalty_multiplier
        return profile.proc_cost_per_op

    def charge_processing(
        self, component: ComponentId, op_kind: str = "op", working_set: float = 0.0
    ) -> float:
        cost = self.processing_cost(component, working_set)
        self.ledger.processing_ops[component] += 1
        self.ledger.processing_time[component] += cost
        self.ledger.processing_kinds[(component, op_kind)] += 1
        return cost

    def charge_memory(self, component: ComponentId, module: str, nbytes: float) -> None:
        if nbytes < 0:
            raise ValueError("memory charge must be non-negative")
        profile = self.topology.profile(component)
        needed = self.ledger.resident_bytes(component) + nbytes
        if needed > profile.memory_capacity:
            raise CapacityExceeded(component, needed, profile.memory_capacity)
        self.ledger.resident[component][module] += nbytes
        self.ledger.peak_memory[component] = max(self.ledger.peak_memory[component], needed)
        logger.debug("%s: %s resident %.0f B", component, module, nbytes)

    def charge_message(
        self,
        src: ComponentId,
        dst: ComponentId,
        now: float = 0.0,
        *,
        category: str = "lock",
    ) -> float:
        """Charge one message and return its delay from ``now`` to delivery."""
        link = self.topology.route(src, dst)
        ops = link.per_message_cost
        sent = self._budgets[src].earliest(now)
        self._budgets[src].consume(sent, ops)
        received = self._budgets[dst].earliest(sent)
        self._budgets[dst].consume(received, ops)
        for end in (src, dst):
            self.ledger.comm_ops[end] += ops
            self.ledger.comm_by_category[category][end] += ops
        self.ledger.link_sent[link.key] += 1
        return (received - now) + link.latency
