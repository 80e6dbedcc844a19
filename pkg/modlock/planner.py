"""Module-to-component assignment: enumeration, scoring and fusion.

Plans are ranked lexicographically. Feasible plans come first, then plans
with fewer modules sitting on a component's scarce resource, then plans with
a shorter uncontended acquire path, and finally placement names.
"""

import enum
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .constants import (
    DEFAULT_COUNTER_BYTES,
    DEFAULT_GRANT_BUFFER_BYTES,
    DEFAULT_HOLDER_COUNTER_BYTES,
    DEFAULT_HOLDER_ENTRY_BYTES,
    DEFAULT_MAX_HOLDERS,
    DEFAULT_MAX_WAITERS,
    DEFAULT_MODE_BITS,
    DEFAULT_WAITER_ENTRY_BYTES,
)
from .core import MODULES, ComponentId, Module
from .errors import ConfigError, UnknownLink
from .hardware import HardwareModel, Topology
from .holder import Tracking, holder_footprint
from .mode import mode_footprint
from .waiter import waiter_footprint

logger = logging.getLogger(__name__)


class Resource(enum.Enum):
    PROCESSING = "processing"
    MEMORY = "memory"
    COMMUNICATION = "communication"


@dataclass(frozen=True)
class Footprints:
    mode_bits: int = DEFAULT_MODE_BITS
    counter_bytes: int = DEFAULT_COUNTER_BYTES
    holder_counter_bytes: int = DEFAULT_HOLDER_COUNTER_BYTES
    holder_entry_bytes: int = DEFAULT_HOLDER_ENTRY_BYTES
    waiter_entry_bytes: int = DEFAULT_WAITER_ENTRY_BYTES
    grant_buffer_bytes: int = DEFAULT_GRANT_BUFFER_BYTES
    packed_modes: bool = False


@dataclass(frozen=True)
class WorkloadParams:
    num_locks: int
    max_holders: int = DEFAULT_MAX_HOLDERS
    max_waiters: int = DEFAULT_MAX_WAITERS
    holder_tracking: Tracking = "set"
    footprints: Footprints = Footprints()
    # client-hosting component -> number of clients there
    clients: Mapping[ComponentId, int] = field(default_factory=dict)


@dataclass(frozen=True)
class ModuleRequirement:
    module: Module
    on_critical_path: bool
    dominant_resource: Resource
    footprint: Callable[[WorkloadParams], float]


def _mode_bytes(p: WorkloadParams) -> float:
    f = p.footprints
    return mode_footprint(p.num_locks, f.mode_bits, f.counter_bytes, packed=f.packed_modes)


def _holder_bytes(p: WorkloadParams) -> float:
    f = p.footprints
    return holder_footprint(
        p.num_locks, p.holder_tracking, p.max_holders, f.holder_counter_bytes, f.holder_entry_bytes
    )


def _waiter_bytes(p: WorkloadParams) -> float:
    return waiter_footprint(p.num_locks, p.max_waiters, p.footprints.waiter_entry_bytes)


def _grant_bytes(p: WorkloadParams) -> float:
    return p.footprints.grant_buffer_bytes


def default_requirements() -> dict[Module, ModuleRequirement]:
    return {
        Module.MODE: ModuleRequirement(Module.MODE, True, Resource.PROCESSING, _mode_bytes),
        Module.HOLDER: ModuleRequirement(Module.HOLDER, False, Resource.MEMORY, _holder_bytes),
        Module.WAITER: ModuleRequirement(Module.WAITER, False, Resource.MEMORY, _waiter_bytes),
        Module.GRANT: ModuleRequirement(Module.GRANT, True, Resource.COMMUNICATION, _grant_bytes),
    }


@dataclass(frozen=True)
class Assignment:
    """Where each module runs and which co-located modules are fused.

    ``fusion_groups`` always partitions the four modules; an unfused module
    is a singleton group.
    """

    placement: tuple[tuple[Module, ComponentId], ...]
    fusion_groups: tuple[tuple[Module, ...], ...]

    def __post_init__(self) -> None:
        placed = [module for module, _ in self.placement]
        if sorted(placed, key=MODULES.index) != list(MODULES):
            raise ConfigError("every module must be placed exactly once", field="assignment")
        grouped = [module for group in self.fusion_groups for module in group]
        if sorted(grouped, key=MODULES.index) != list(MODULES):
            raise ConfigError("fusion groups must partition the modules", field="assignment")
        where = dict(self.placement)
        for group in self.fusion_groups:
            if len({where[module] for module in group}) != 1:
                raise ConfigError(
                    f"fused modules {[m.value for m in group]} span components",
                    field="assignment",
                )

    @classmethod
    def of(cls, placement: Mapping[Module, ComponentId], fused: bool = True) -> "Assignment":
        ordered = tuple((module, placement[module]) for module in MODULES)
        singletons = tuple((module,) for module in MODULES)
        plan = cls(ordered, singletons)
        return fuse(plan) if fused else plan

    @classmethod
    def monolithic(cls, component: ComponentId) -> "Assignment":
        return cls.of({module: component for module in MODULES})

    def component(self, module: Module) -> ComponentId:
        return dict(self.placement)[module]

    def group(self, module: Module) -> tuple[Module, ...]:
        for group in self.fusion_groups:
            if module in group:
                return group
        raise KeyError(module)

    def fused(self, a: Module, b: Module) -> bool:
        return b in self.group(a)

    def names(self) -> tuple[ComponentId, ...]:
        return tuple(component for _, component in self.placement)

    def describe(self) -> str:
        parts = []
        for group in self.fusion_groups:
            label = "+".join(module.value for module in group)
            parts.append(f"{label}@{self.component(group[0])}")
        return " ".join(parts)


def fuse(assignment: Assignment) -> Assignment:
    by_component: dict[ComponentId, list[Module]] = {}
    for module, component in assignment.placement:
        by_component.setdefault(component, []).append(module)
    groups = sorted(
        (tuple(modules) for modules in by_component.values()),
        key=lambda group: MODULES.index(group[0]),
    )
    return Assignment(assignment.placement, tuple(groups))


@dataclass(frozen=True)
class PlanScore:
    predicted_grant_latency: float
    bottleneck_violations: int
    feasible: bool
    problems: tuple[str, ...] = ()

    def rank_key(self) -> tuple:
        return (not self.feasible, self.bottleneck_violations, self.predicted_grant_latency)


def module_footprints(
    assignment: Assignment,
    requirements: Mapping[Module, ModuleRequirement],
    params: WorkloadParams,
) -> dict[Module, float]:
    sizes = {module: float(req.footprint(params)) for module, req in requirements.items()}
    if assignment.fused(Module.HOLDER, Module.WAITER):
        # one shared queue of holders and waiters
        sizes[Module.HOLDER] = math.ceil(sizes[Module.HOLDER] / 2)
        sizes[Module.WAITER] = math.ceil(sizes[Module.WAITER] / 2)
    return sizes


def charge_assignment(
    hardware: HardwareModel,
    assignment: Assignment,
    requirements: Mapping[Module, ModuleRequirement],
    params: WorkloadParams,
) -> None:
    """Charge every module's footprint to its host; raises CapacityExceeded."""
    for module, nbytes in module_footprints(assignment, requirements, params).items():
        hardware.charge_memory(assignment.component(module), module.value, nbytes)


def grant_beside_clients(assignment: Assignment, client_components: Iterable[ComponentId]) -> bool:
    """A grant manager alone on a client-hosting component runs next to each client."""
    return (
        assignment.group(Module.GRANT) == (Module.GRANT,)
        and assignment.component(Module.GRANT) in set(client_components)
    )


def _hop(topology: Topology, src: ComponentId, dst: ComponentId) -> float:
    if src == dst:
        return 0.0
    return topology.route(src, dst).latency


def predicted_latency(
    assignment: Assignment,
    topology: Topology,
    params: WorkloadParams,
    resident: Mapping[ComponentId, float],
) -> float:
    """Uncontended acquire round trip, averaged over client locations."""

    def proc(component: ComponentId) -> float:
        profile = topology.profile(component)
        per_thread = resident.get(component, 0.0) / profile.parallelism
        if per_thread > profile.fast_memory_capacity:
            return profile.proc_cost_per_op * profile.miss_penalty_multiplier
        return profile.proc_cost_per_op

    clients = dict(params.clients) or {assignment.component(Module.MODE): 1}
    mode_at = assignment.component(Module.MODE)
    beside = grant_beside_clients(assignment, clients)
    total = 0.0
    weight = 0
    for location, count in sorted(clients.items()):
        grant_at = location if beside else assignment.component(Module.GRANT)
        path = _hop(topology, location, mode_at) + proc(mode_at)
        if not assignment.fused(Module.MODE, Module.GRANT):
            path += _hop(topology, mode_at, grant_at) + proc(grant_at)
        if grant_at != location:
            path += topology.profile(grant_at).reply_cost + _hop(topology, grant_at, location)
        total += path * count
        weight += count
    return total / weight


def score(
    assignment: Assignment,
    topology: Topology,
    requirements: Mapping[Module, ModuleRequirement],
    params: WorkloadParams,
    *,
    strict: bool = False,
) -> PlanScore:
    problems: list[str] = []
    feasible = True
    violations = 0
    sizes = module_footprints(assignment, requirements, params)
    resident: dict[ComponentId, float] = {}
    for module in MODULES:
        component = assignment.component(module)
        resident[component] = resident.get(component, 0.0) + sizes[module]
        profile = topology.profile(component)
        if not profile.hosts(module):
            feasible = False
            problems.append(f"{module.value} may not run on {component}")
        if requirements[module].dominant_resource.value in profile.scarce:
            violations += 1
            problems.append(
                f"{module.value} needs {requirements[module].dominant_resource.value},"
                f" scarce on {component}"
            )
    for component, nbytes in sorted(resident.items()):
        capacity = topology.profile(component).memory_capacity
        if nbytes > capacity:
            feasible = False
            violations += 1
            problems.append(f"{component} holds {nbytes:.0f} B of {capacity:.0f} B")
    try:
        latency = predicted_latency(assignment, topology, params, resident)
    except UnknownLink as exc:
        latency = math.inf
        feasible = False
        problems.append(str(exc))
    if strict and violations:
        feasible = False
    return PlanScore(latency, violations, feasible, tuple(problems))


def enumerate_assignments(
    topology: Topology,
    requirements: Mapping[Module, ModuleRequirement],
    params: WorkloadParams,
    *,
    strict: bool = False,
) -> list[tuple[Assignment, PlanScore]]:
    names = sorted(topology.names())
    plans = []
    for combo in itertools.product(names, repeat=len(MODULES)):
        assignment = Assignment.of(dict(zip(MODULES, combo)))
        plans.append((assignment, score(assignment, topology, requirements, params, strict=strict)))
    plans.sort(key=lambda item: (item[1].rank_key(), item[0].names()))
    if plans:
        logger.debug("best plan %s: %s", plans[0][0].describe(), plans[0][1])
    return plans


def to_toml(assignment: Assignment) -> str:
    lines = ["[assignment]"]
    for module, component in assignment.placement:
        lines.append(f'{module.value} = "{component}"')
    lines.append(f"fuse = {'true' if assignment == fuse(assignment) else 'false'}")
    return "\n".join(lines) + "\n"


def format_plans(plans: Sequence[tuple[Assignment, PlanScore]], limit: int = 10) -> str:
    rows = []
    for rank, (assignment, plan_score) in enumerate(plans[:limit], start=1):
        status = "ok" if plan_score.feasible else "infeasible"
        rows.append(
            f"{rank:>3}  {plan_score.predicted_grant_latency:8.3f}  "
            f"{plan_score.bottleneck_violations:>2}  {status:<10}  {assignment.describe()}"
        )
    header = f"{'#':>3}  {'latency':>8}  {'v':>2}  {'status':<10}  placement"
    return "\n".join([header, *rows])
