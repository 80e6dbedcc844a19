"""Scenario files: lookup, layering and normalization.

A scenario is a TOML table. ``extends`` names a parent scenario whose
tables are deep-merged underneath; ``variants.<name>`` tables are optional
overrides picked on the command line. After layering, ``--set`` overrides
are applied and the result is normalized into an immutable ``Scenario``.
"""

import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    try:
        import tomli as tomllib  # type: ignore
    except ModuleNotFoundError:
        tomllib = None

from .constants import (
    DEFAULT_MAX_HOLDERS,
    DEFAULT_MAX_WAITERS,
    SCENARIO_DIR_ENV,
    SCENARIO_PACKAGE_DIR,
    SCENARIO_SUFFIX,
)
from .core import MODULES, ComponentId, Module
from .errors import ConfigError
from .grant import NotificationMode
from .hardware import ComponentKind, HardwareProfile, LinkProfile, Topology
from .holder import Tracking
from .planner import Footprints, WorkloadParams
from .util import merge_tables, parse_key_value, set_path
from .workload import Workload

PLAN = "plan"

_TOP_KEYS = {
    "name",
    "description",
    "baseline",
    "extends",
    "client_component",
    "components",
    "links",
    "assignment",
    "workload",
    "notification",
    "locks",
    "footprints",
    "hot_cache",
    "variants",
}


@dataclass(frozen=True)
class AssignmentSpec:
    """Explicit placement, or ``None`` to let the planner choose."""

    placement: Mapping[Module, ComponentId] | None = None
    fuse: bool = True
    strict: bool = False

    @property
    def planned(self) -> bool:
        return self.placement is None


@dataclass(frozen=True)
class HotCache:
    component: ComponentId
    # derived from the component's memory capacity when unset
    num_locks: int | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    topology: Topology
    assignment: AssignmentSpec
    workload: Workload
    notification: NotificationMode = NotificationMode()
    footprints: Footprints = Footprints()
    max_holders: int = DEFAULT_MAX_HOLDERS
    max_waiters: int = DEFAULT_MAX_WAITERS
    holder_tracking: Tracking = "set"
    validate: bool = True
    client_component: ComponentId = "clients"
    hot_cache: HotCache | None = None
    baseline: str = ""
    description: str = ""
    source: Path | None = field(default=None, compare=False)

    def client_placement(self) -> dict[ComponentId, int]:
        return dict(self.workload.clients) or {self.client_component: self.workload.num_clients}

    def workload_params(self, num_locks: int | None = None) -> WorkloadParams:
        return WorkloadParams(
            num_locks=self.workload.num_locks if num_locks is None else num_locks,
            max_holders=self.max_holders,
            max_waiters=self.max_waiters,
            holder_tracking=self.holder_tracking,
            footprints=self.footprints,
            clients=self.client_placement(),
        )


# lookup


def scenario_dirs() -> list[Path]:
    dirs = []
    env_dir = os.getenv(SCENARIO_DIR_ENV)
    if env_dir:
        dirs.append(Path(env_dir))
    dirs.append(Path(__file__).resolve().parent / SCENARIO_PACKAGE_DIR)
    return dirs


def builtin_scenarios() -> list[str]:
    names = set()
    for directory in scenario_dirs():
        if directory.is_dir():
            names.update(path.stem for path in directory.glob(f"*{SCENARIO_SUFFIX}"))
    return sorted(names)


def resolve_scenario(name: str, relative_to: Path | None = None) -> Path:
    """Find a scenario by path, then in the lookup directories by name."""
    candidates = [Path(name)]
    if relative_to is not None:
        candidates.insert(0, relative_to / name)
    stem = name if name.endswith(SCENARIO_SUFFIX) else name + SCENARIO_SUFFIX
    candidates.extend(directory / stem for directory in scenario_dirs())
    for candidate in candidates:
        if candidate.is_file():
            return candidate.resolve()
    raise ConfigError(f"scenario not found: {name}")


def load_toml(path: Path) -> dict:
    if tomllib is None:
        raise ConfigError("TOML support requires Python 3.11+ or the 'tomli' module")
    try:
        return tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        # the decoder message carries the line and column
        raise ConfigError(f"{path.name}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def load_layers(path: Path, _seen: tuple[Path, ...] = ()) -> dict:
    if path in _seen:
        chain = " -> ".join(p.name for p in (*_seen, path))
        raise ConfigError(f"extends cycle: {chain}", field="extends")
    data = load_toml(path)
    parent = data.pop("extends", None)
    if parent is None:
        return data
    if not isinstance(parent, str) or not parent:
        raise ConfigError("must be a scenario name or path", field="extends")
    base = load_layers(resolve_scenario(parent, path.parent), (*_seen, path))
    # variants are inherited, the name is not
    base.pop("name", None)
    return merge_tables(base, data)


def select_variant(data: dict, variant: str | None) -> dict:
    base = dict(data)
    variants = base.pop("variants", {}) or {}
    if not isinstance(variants, dict):
        raise ConfigError("must be a table of tables", field="variants")
    if not variant:
        return base
    override = variants.get(variant)
    if not isinstance(override, dict):
        known = ", ".join(sorted(variants)) or "none"
        raise ConfigError(f"unknown variant '{variant}' (known: {known})", field="variants")
    return merge_tables(base, override)


def apply_overrides(data: dict, overrides: Iterable[str | tuple[str, Any]]) -> dict:
    result = merge_tables(data, {})
    for item in overrides:
        key, value = parse_key_value(item) if isinstance(item, str) else item
        set_path(result, key, value)
    return result


def load_scenario(
    name: str | Path,
    *,
    variant: str | None = None,
    overrides: Iterable[str | tuple[str, Any]] = (),
) -> Scenario:
    path = resolve_scenario(str(name))
    data = select_variant(load_layers(path), variant)
    data = apply_overrides(data, overrides)
    return replace(build_scenario(data, default_name=path.stem), source=path)


# normalization


def _table(data: Mapping, key: str, where: str = "") -> dict:
    value = data.get(key, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError("must be a table", field=f"{where}{key}")
    return value


def _reject_unknown(table: Mapping, allowed: Iterable[str], where: str) -> None:
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}", field=where)


def _number(table: Mapping, key: str, where: str, default: Any = None) -> Any:
    value = table.get(key, default)
    if value is None:
        raise ConfigError("is required", field=f"{where}.{key}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("must be a number", field=f"{where}.{key}")
    return value


def _integer(table: Mapping, key: str, where: str, default: Any = None) -> int:
    value = _number(table, key, where, default)
    if isinstance(value, float):
        if not value.is_integer():
            raise ConfigError("must be an integer", field=f"{where}.{key}")
        value = int(value)
    return value


def _flag(table: Mapping, key: str, where: str, default: bool) -> bool:
    value = table.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError("must be true/false", field=f"{where}.{key}")
    return value


def _string(table: Mapping, key: str, where: str, default: str | None = None) -> str:
    value = table.get(key, default)
    if not isinstance(value, str) or not value:
        raise ConfigError("must be a non-empty string", field=f"{where}.{key}")
    return value


def _strings(table: Mapping, key: str, where: str, default: Iterable[str]) -> frozenset[str]:
    value = table.get(key, list(default))
    if not isinstance(value, list) or not all(isinstance(v, str) and v for v in value):
        raise ConfigError("must be a list of non-empty strings", field=f"{where}.{key}")
    return frozenset(value)


_COMPONENT_KEYS = (
    "kind",
    "proc_cost_per_op",
    "parallelism",
    "memory_capacity",
    "fast_memory_capacity",
    "comm_ops_budget",
    "miss_penalty_multiplier",
    "reply_cost",
    "scarce",
    "eligible",
)


def build_component(name: str, table: Mapping) -> HardwareProfile:
    where = f"components.{name}"
    if "-" in name:
        raise ConfigError("component names must not contain '-'", field=where)
    _reject_unknown(table, _COMPONENT_KEYS, where)
    kind_name = _string(table, "kind", where)
    try:
        kind = ComponentKind(kind_name)
    except ValueError:
        known = ", ".join(k.value for k in ComponentKind)
        raise ConfigError(f"unknown kind '{kind_name}' (known: {known})", field=f"{where}.kind") from None
    memory = _number(table, "memory_capacity", where)
    return HardwareProfile(
        component=name,
        kind=kind,
        proc_cost_per_op=_number(table, "proc_cost_per_op", where),
        parallelism=_integer(table, "parallelism", where),
        memory_capacity=memory,
        fast_memory_capacity=_number(table, "fast_memory_capacity", where, memory),
        comm_ops_budget=_number(table, "comm_ops_budget", where),
        miss_penalty_multiplier=_number(table, "miss_penalty_multiplier", where, 2.0),
        reply_cost=_number(table, "reply_cost", where, 0.0),
        scarce=_strings(table, "scarce", where, ()),
        eligible=_strings(table, "eligible", where, (m.value for m in MODULES)),
    )


def build_link(name: str, table: Mapping) -> LinkProfile:
    where = f"links.{name}"
    ends = name.split("-")
    if len(ends) != 2 or not all(ends):
        raise ConfigError("link names are '<component>-<component>'", field=where)
    _reject_unknown(table, ("latency", "per_message_cost"), where)
    return LinkProfile(
        (ends[0], ends[1]),
        latency=_number(table, "latency", where),
        per_message_cost=_number(table, "per_message_cost", where, 1.0),
    )


def build_topology(data: Mapping) -> Topology:
    components = _table(data, "components")
    for name, table in components.items():
        if not isinstance(table, dict):
            raise ConfigError("must be a table", field=f"components.{name}")
    links = _table(data, "links")
    for name, table in links.items():
        if not isinstance(table, dict):
            raise ConfigError("must be a table", field=f"links.{name}")
    return Topology(
        [build_component(name, table) for name, table in components.items()],
        [build_link(name, table) for name, table in links.items()],
    )


def build_assignment(data: Mapping, topology: Topology) -> AssignmentSpec:
    raw = data.get("assignment", PLAN)
    if raw == PLAN:
        return AssignmentSpec()
    if isinstance(raw, str):
        raise ConfigError(f"must be a table or \"{PLAN}\"", field="assignment")
    if not isinstance(raw, dict):
        raise ConfigError("must be a table", field="assignment")
    _reject_unknown(raw, [*(m.value for m in MODULES), "fuse", "strict", "source"], "assignment")
    fuse = _flag(raw, "fuse", "assignment", True)
    strict = _flag(raw, "strict", "assignment", False)
    if raw.get("source", "explicit") == PLAN:
        present = [m.value for m in MODULES if m.value in raw]
        if present:
            raise ConfigError(
                f"source = \"{PLAN}\" conflicts with placement of {', '.join(present)}",
                field="assignment",
            )
        return AssignmentSpec(None, fuse, strict)
    placement = {}
    for module in MODULES:
        component = _string(raw, module.value, "assignment")
        if component not in topology:
            raise ConfigError(f"unknown component '{component}'", field=f"assignment.{module.value}")
        placement[module] = component
    return AssignmentSpec(placement, fuse, strict)


_WORKLOAD_KEYS = (
    "num_clients",
    "num_locks",
    "distribution",
    "theta",
    "shared_fraction",
    "critical_section_time",
    "think_time",
    "total_ops",
    "seed",
    "critical_section_ops",
    "data_component",
    "clients",
)


def build_workload(data: Mapping) -> Workload:
    table = _table(data, "workload")
    where = "workload"
    _reject_unknown(table, _WORKLOAD_KEYS, where)
    clients = _table(table, "clients", "workload.")
    for component, count in clients.items():
        if isinstance(count, bool) or not isinstance(count, int) or count < 0:
            raise ConfigError("must be a non-negative integer", field=f"workload.clients.{component}")
    defaults = Workload(1, 1)
    return Workload(
        num_clients=_integer(table, "num_clients", where),
        num_locks=_integer(table, "num_locks", where),
        distribution=_string(table, "distribution", where, defaults.distribution),
        theta=_number(table, "theta", where, defaults.theta),
        shared_fraction=_number(table, "shared_fraction", where, defaults.shared_fraction),
        critical_section_time=_number(
            table, "critical_section_time", where, defaults.critical_section_time
        ),
        think_time=_number(table, "think_time", where, defaults.think_time),
        total_ops=_integer(table, "total_ops", where, defaults.total_ops),
        seed=_integer(table, "seed", where, defaults.seed),
        critical_section_ops=_integer(
            table, "critical_section_ops", where, defaults.critical_section_ops
        ),
        data_component=table.get("data_component"),
        clients=dict(clients),
    )


def build_notification(data: Mapping) -> NotificationMode:
    table = _table(data, "notification")
    where = "notification"
    _reject_unknown(table, ("kind", "poll_interval", "backoff_multiplier", "backoff_cap"), where)
    defaults = NotificationMode()
    return NotificationMode(
        kind=_string(table, "kind", where, defaults.kind),
        poll_interval=_number(table, "poll_interval", where, defaults.poll_interval),
        backoff_multiplier=_number(
            table, "backoff_multiplier", where, defaults.backoff_multiplier
        ),
        backoff_cap=_number(table, "backoff_cap", where, defaults.backoff_cap),
    )


def build_footprints(data: Mapping) -> Footprints:
    table = _table(data, "footprints")
    where = "footprints"
    defaults = Footprints()
    _reject_unknown(table, asdict(defaults), where)
    values = {}
    for key, default in asdict(defaults).items():
        if isinstance(default, bool):
            values[key] = _flag(table, key, where, default)
        else:
            values[key] = _integer(table, key, where, default)
            if values[key] < 0:
                raise ConfigError("must be >= 0", field=f"{where}.{key}")
    return Footprints(**values)


def build_hot_cache(data: Mapping, topology: Topology) -> HotCache | None:
    table = data.get("hot_cache")
    if table is None:
        return None
    if not isinstance(table, dict):
        raise ConfigError("must be a table", field="hot_cache")
    _reject_unknown(table, ("component", "num_locks"), "hot_cache")
    component = _string(table, "component", "hot_cache")
    if component not in topology:
        raise ConfigError(f"unknown component '{component}'", field="hot_cache.component")
    num_locks = None
    if "num_locks" in table:
        num_locks = _integer(table, "num_locks", "hot_cache")
        if num_locks < 0:
            raise ConfigError("must be >= 0", field="hot_cache.num_locks")
    return HotCache(component, num_locks)


def build_scenario(data: Mapping, default_name: str = "scenario") -> Scenario:
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    topology = build_topology(data)
    workload = build_workload(data)
    client_component = data.get("client_component", "clients")
    if not isinstance(client_component, str) or client_component not in topology:
        raise ConfigError(f"unknown component '{client_component}'", field="client_component")
    for component in workload.clients:
        if component not in topology:
            raise ConfigError(f"unknown component '{component}'", field=f"workload.clients.{component}")
    if workload.data_component and workload.data_component not in topology:
        raise ConfigError(
            f"unknown component '{workload.data_component}'", field="workload.data_component"
        )

    locks = _table(data, "locks")
    _reject_unknown(locks, ("max_holders", "max_waiters", "holder_tracking", "validate"), "locks")
    max_holders = _integer(locks, "max_holders", "locks", DEFAULT_MAX_HOLDERS)
    max_waiters = _integer(locks, "max_waiters", "locks", DEFAULT_MAX_WAITERS)
    tracking = _string(locks, "holder_tracking", "locks", "set")
    if tracking not in ("set", "counter"):
        raise ConfigError(f"unknown holder tracking '{tracking}'", field="locks.holder_tracking")
    if max_holders < 1:
        raise ConfigError("must be >= 1", field="locks.max_holders")
    # every client may queue on the same lock
    if max_waiters < workload.num_clients:
        raise ConfigError(
            f"must be >= workload.num_clients ({workload.num_clients})", field="locks.max_waiters"
        )

    return Scenario(
        name=_string(data, "name", "scenario", default_name),
        topology=topology,
        assignment=build_assignment(data, topology),
        workload=workload,
        notification=build_notification(data),
        footprints=build_footprints(data),
        max_holders=max_holders,
        max_waiters=max_waiters,
        holder_tracking=tracking,
        validate=_flag(locks, "validate", "locks", True),
        client_component=client_component,
        hot_cache=build_hot_cache(data, topology),
        baseline=str(data.get("baseline", "")),
        description=str(data.get("description", "")).strip(),
    )


def describe(scenario: Scenario) -> str:
    placement = (
        PLAN
        if scenario.assignment.planned
        else " ".join(f"{m.value}@{c}" for m, c in scenario.assignment.placement.items())
    )
    workload = scenario.workload
    dist = workload.distribution
    if dist == "zipf" and not math.isclose(workload.theta, 0.0):
        dist = f"zipf({workload.theta:g})"
    return (
        f"{scenario.name}: {placement}, {workload.num_clients} clients, "
        f"{workload.num_locks} locks, {dist}, {scenario.notification.kind}"
    )
