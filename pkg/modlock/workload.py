"""Operation streams for the simulator.

Closed-loop workloads pre-generate every client's lock choices from one
seeded ``numpy.random.Generator`` so that a (config, seed) pair fixes the
whole run. Scripts are explicit per-client operation lists used for small
verification runs and for forcing the release/grant race.
"""

from dataclasses import dataclass, field
from typing import Literal, Mapping

import numpy as np

from .constants import DEFAULT_THETA
from .core import AcquireMode, ComponentId, LockId
from .errors import ConfigError

Distribution = Literal["uniform", "zipf"]


@dataclass(frozen=True)
class Workload:
    num_clients: int
    num_locks: int
    distribution: Distribution = "uniform"
    theta: float = DEFAULT_THETA
    shared_fraction: float = 0.0
    critical_section_time: float = 1.0
    think_time: float = 0.0
    total_ops: int = 10_000
    seed: int = 1
    critical_section_ops: int = 0
    data_component: ComponentId | None = None
    # client-hosting component -> number of clients there
    clients: Mapping[ComponentId, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.num_clients < 1:
            raise ConfigError("must be >= 1", field="workload.num_clients")
        if self.num_locks < 1:
            raise ConfigError("must be >= 1", field="workload.num_locks")
        if self.distribution not in ("uniform", "zipf"):
            raise ConfigError(
                f"unknown distribution '{self.distribution}'", field="workload.distribution"
            )
        if self.theta < 0:
            raise ConfigError("must be >= 0", field="workload.theta")
        if not 0.0 <= self.shared_fraction <= 1.0:
            raise ConfigError("must be in [0, 1]", field="workload.shared_fraction")
        for name in ("critical_section_time", "think_time"):
            if getattr(self, name) < 0:
                raise ConfigError("must be >= 0", field=f"workload.{name}")
        if self.total_ops < 0:
            raise ConfigError("must be >= 0", field="workload.total_ops")
        if self.critical_section_ops < 0:
            raise ConfigError("must be >= 0", field="workload.critical_section_ops")
        if self.critical_section_ops and not self.data_component:
            raise ConfigError(
                "required when critical_section_ops > 0", field="workload.data_component"
            )
        if self.clients and sum(self.clients.values()) != self.num_clients:
            raise ConfigError(
                f"places {sum(self.clients.values())} clients, expected {self.num_clients}",
                field="workload.clients",
            )

    def client_locations(self, default: ComponentId) -> list[ComponentId]:
        """Location of each client id, filled component by component in name order."""
        placement = dict(self.clients) or {default: self.num_clients}
        locations: list[ComponentId] = []
        for component in sorted(placement):
            locations.extend([component] * placement[component])
        return locations


def zipf_cdf(num_locks: int, theta: float) -> np.ndarray:
    weights = np.arange(1, num_locks + 1, dtype=np.float64) ** -theta
    cdf = np.cumsum(weights)
    return cdf / cdf[-1]


def zipf_mass(top: int, num_locks: int, theta: float) -> float:
    """Probability that a draw lands on one of the ``top`` most popular locks."""
    weights = np.arange(1, num_locks + 1, dtype=np.float64) ** -theta
    return float(weights[:top].sum() / weights.sum())


def sample_locks(workload: Workload, rng: np.random.Generator, size: int) -> np.ndarray:
    if workload.distribution == "uniform":
        return rng.integers(0, workload.num_locks, size=size)
    cdf = zipf_cdf(workload.num_locks, workload.theta)
    draws = np.searchsorted(cdf, rng.random(size), side="right")
    return np.minimum(draws, workload.num_locks - 1)


@dataclass(frozen=True)
class OpStream:
    """Every client's lock choices, consumed round-robin as clients finish."""

    locks: np.ndarray
    shared: np.ndarray

    def __len__(self) -> int:
        return len(self.locks)

    def op(self, index: int) -> tuple[LockId, AcquireMode]:
        mode = AcquireMode.SHARED if self.shared[index] else AcquireMode.EXCLUSIVE
        return LockId(int(self.locks[index])), mode


def generate_ops(workload: Workload, rng: np.random.Generator) -> OpStream:
    size = workload.total_ops
    locks = sample_locks(workload, rng, size)
    shared = rng.random(size) < workload.shared_fraction
    return OpStream(locks, shared)


@dataclass(frozen=True)
class ScriptedOp:
    client: int
    lock: LockId
    mode: AcquireMode
    at: float
    # absolute release time; None releases one critical section after the grant
    release_at: float | None = None


@dataclass(frozen=True)
class Script:
    ops: tuple[ScriptedOp, ...]

    def __len__(self) -> int:
        return len(self.ops)

    def by_client(self) -> dict[int, list[ScriptedOp]]:
        per_client: dict[int, list[ScriptedOp]] = {}
        for op in sorted(self.ops, key=lambda o: (o.client, o.at)):
            per_client.setdefault(op.client, []).append(op)
        return per_client

    def clients(self) -> int:
        return max((op.client for op in self.ops), default=-1) + 1

    def locks(self) -> int:
        return max((op.lock for op in self.ops), default=-1) + 1


def random_micro_script(
    rng: np.random.Generator,
    *,
    max_ops: int = 12,
    clients: tuple[int, int] = (2, 4),
    locks: tuple[int, int] = (1, 2),
    horizon: float = 20.0,
) -> Script:
    """Small random script; each acquire/release pair counts as two operations."""
    num_clients = int(rng.integers(clients[0], clients[1] + 1))
    num_locks = int(rng.integers(locks[0], locks[1] + 1))
    pairs = int(rng.integers(num_clients, max_ops // 2 + 1))
    ops = []
    for index in range(pairs):
        client = index % num_clients
        mode = AcquireMode.SHARED if rng.random() < 0.5 else AcquireMode.EXCLUSIVE
        at = float(np.round(rng.uniform(0.0, horizon), 3))
        hold = float(np.round(rng.uniform(0.5, 6.0), 3))
        ops.append(ScriptedOp(client, LockId(int(rng.integers(0, num_locks))), mode, at, at + hold))
    return Script(tuple(ops))


def grant_race_script(rng: np.random.Generator | None = None) -> Script:
    """Three clients racing a shared grant against a release-time promotion.

    Timed for a topology where the mode manager sits one hop from the clients
    and five hops from the holder and waiter managers: client 1's shared
    acquire lands while the release of client 0 is promoting client 2, so
    the promotion's validation finds a stale grant count.
    """

    def jitter(high: float) -> float:
        return float(np.round(rng.uniform(0.0, high), 3)) if rng is not None else 0.0

    return Script(
        (
            ScriptedOp(0, LockId(0), AcquireMode.SHARED, 0.0, 10.0 + jitter(0.5)),
            ScriptedOp(2, LockId(0), AcquireMode.EXCLUSIVE, 2.0 + jitter(2.0)),
            ScriptedOp(1, LockId(0), AcquireMode.SHARED, 12.0 + jitter(2.0), 30.0),
        )
    )
