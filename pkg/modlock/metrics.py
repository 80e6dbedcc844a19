"""Run metrics, CSV rows and side-by-side comparison."""

import csv
import io
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .constants import CSV_HEADER, US_PER_SECOND
from .util import format_number
from .verify import EventKind

if TYPE_CHECKING:
    from .sim import RunResult

LOCK_CATEGORIES = ("lock", "poll")


def percentile(values: np.ndarray, q: float) -> float:
    if values.size == 0:
        return 0.0
    return float(np.percentile(values, q))


def collect_metrics(result: "RunResult") -> dict[str, float]:
    history = result.history
    ledger = result.ledger
    acquires = history.count(EventKind.GRANT_OBSERVED)
    makespan = max((event.time for event in history), default=0.0)
    throughput = acquires / makespan * US_PER_SECOND if makespan > 0 else 0.0
    engine = result.engine
    metrics: dict[str, float] = {
        "acquires": acquires,
        "throughput_ops_per_s": throughput,
        "acquire_p50_us": percentile(result.latencies, 50),
        "acquire_p99_us": percentile(result.latencies, 99),
        "acquire_path_p50_us": percentile(result.path_latencies, 50),
        "makespan_us": makespan,
        "aborts": engine.managers.mode.aborts,
        "polls": engine.managers.grant.poll_calls,
        "reselects": engine.reselects,
        "parked_releases": engine.parked_total,
        "hot_locks": result.hot_locks,
    }
    total_served = sum(result.served.values())
    for component in sorted(result.scenario.topology.names()):
        lock_ops = sum(ledger.comm_by_category[c][component] for c in LOCK_CATEGORIES)
        metrics[f"comm_ops.{component}"] = ledger.comm_ops[component]
        metrics[f"comm_ops_lock.{component}"] = lock_ops
        metrics[f"comm_ops_data.{component}"] = ledger.comm_by_category["data"][component]
        metrics[f"peak_memory_bytes.{component}"] = ledger.peak_memory[component]
        metrics[f"processing_ops.{component}"] = ledger.processing_ops[component]
        if total_served:
            metrics[f"served_fraction.{component}"] = result.served[component] / total_served
    return metrics


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple[tuple[str, int, str, float], ...]

    @classmethod
    def from_metrics(cls, scenario: str, seed: int, metrics: Mapping[str, float]) -> "MetricsReport":
        return cls(tuple((scenario, seed, name, value) for name, value in metrics.items()))

    def __add__(self, other: "MetricsReport") -> "MetricsReport":
        return MetricsReport(self.rows + other.rows)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for scenario, seed, name, value in self.rows:
            writer.writerow((scenario, seed, name, format_number(value)))
        return buffer.getvalue()


@dataclass(frozen=True)
class Comparison:
    metric: str
    first: float
    second: float

    @property
    def ratio(self) -> float:
        if self.first == 0:
            return math.inf if self.second else 1.0
        return self.second / self.first

    @property
    def reduction(self) -> float:
        """Percentage by which the second run lowers the metric."""
        return (1.0 - self.ratio) * 100.0


def compare_metrics(
    first: Mapping[str, float], second: Mapping[str, float]
) -> list[Comparison]:
    names = [name for name in first if name in second]
    return [Comparison(name, first[name], second[name]) for name in names]


def format_comparison(
    comparisons: Sequence[Comparison], first_name: str, second_name: str
) -> str:
    width = max([len("metric"), *(len(c.metric) for c in comparisons)])
    lines = [f"{'metric':<{width}}  {first_name:>16}  {second_name:>16}  {'ratio':>10}"]
    for c in comparisons:
        lines.append(
            f"{c.metric:<{width}}  {format_number(c.first):>16}  "
            f"{format_number(c.second):>16}  {format_number(c.ratio):>10}"
        )
    reductions = [
        c for c in comparisons if c.metric.startswith("comm_ops_lock.") and c.first > 0
    ]
    for c in reductions:
        component = c.metric.split(".", 1)[1]
        lines.append(f"{component} lock communication reduced by {c.reduction:.1f}%")
    return "\n".join(lines)
