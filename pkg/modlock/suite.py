"""Verification runs over seeds, micro-histories and forced grant races."""

import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .config import Scenario, load_scenario
from .errors import MalformedHistory, ModlockError, TooLarge
from .sim import RunResult, run
from .verify import (
    check_grant_accounting,
    check_linearizable,
    check_liveness,
    check_mutual_exclusion,
    check_trace,
)
from .workload import grant_race_script, random_micro_script

logger = logging.getLogger(__name__)

RACE_SCENARIO = "grant_race"
# trace problems beyond this many per run are summarized
MAX_TRACE_PROBLEMS = 5


@dataclass
class SeedReport:
    kind: str
    seed: int
    problems: list[str] = field(default_factory=list)
    aborts: int = 0
    acquires: int = 0

    @property
    def ok(self) -> bool:
        return not self.problems


def check_result(result: RunResult, *, linearizability: bool = False) -> list[str]:
    problems: list[str] = []
    try:
        window = check_mutual_exclusion(result.history)
    except MalformedHistory as exc:
        return [f"malformed history: {exc}"]
    if window is not None:
        problems.append(f"mutual exclusion: {window}")
    stuck = check_liveness(result.history, result.final_state)
    if stuck is not None:
        problems.append(f"liveness: {stuck}")
    trace_problems = [p for trace in result.traces.values() for p in check_trace(trace)]
    problems.extend(f"trace: {p}" for p in trace_problems[:MAX_TRACE_PROBLEMS])
    if len(trace_problems) > MAX_TRACE_PROBLEMS:
        problems.append(f"trace: {len(trace_problems) - MAX_TRACE_PROBLEMS} more problem(s)")
    bad = check_grant_accounting(result.mode)
    if bad:
        problems.append(f"grant counter disagrees with grants on lock(s) {bad}")
    if linearizability:
        try:
            if not check_linearizable(result.history).ok:
                problems.append("linearizability: no sequential witness")
        except TooLarge as exc:
            problems.append(f"linearizability: {exc}")
    return problems


def _report(kind: str, seed: int, result: RunResult, linearizability: bool) -> SeedReport:
    return SeedReport(
        kind,
        seed,
        check_result(result, linearizability=linearizability),
        aborts=result.mode.aborts,
        acquires=len(result.latencies),
    )


def verify_workload(scenario: Scenario, seed: int, validate: bool | None = None) -> SeedReport:
    try:
        return _report("workload", seed, run(scenario, seed, validate=validate), False)
    except ModlockError as exc:
        return SeedReport("workload", seed, [f"{type(exc).__name__}: {exc}"])


def verify_micro(scenario: Scenario, seed: int, validate: bool | None = None) -> SeedReport:
    script = random_micro_script(np.random.default_rng(seed))
    try:
        return _report("micro", seed, run(scenario, seed, script=script, validate=validate), True)
    except ModlockError as exc:
        return SeedReport("micro", seed, [f"{type(exc).__name__}: {exc}"])


def verify_race(scenario: Scenario, seed: int, validate: bool | None = None) -> SeedReport:
    script = grant_race_script(np.random.default_rng(seed))
    try:
        return _report("race", seed, run(scenario, seed, script=script, validate=validate), True)
    except ModlockError as exc:
        return SeedReport("race", seed, [f"{type(exc).__name__}: {exc}"])


_RUNNERS = {"workload": verify_workload, "micro": verify_micro, "race": verify_race}


def _run_task(task: tuple[str, Scenario, int, bool | None]) -> SeedReport:
    kind, scenario, seed, validate = task
    return _RUNNERS[kind](scenario, seed, validate)


@dataclass
class SuiteResult:
    reports: list[SeedReport]
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors and all(report.ok for report in self.reports)

    def count(self, kind: str) -> int:
        return sum(1 for report in self.reports if report.kind == kind)

    def aborts(self, kind: str) -> int:
        return sum(report.aborts for report in self.reports if report.kind == kind)


def run_suite(
    scenario: Scenario,
    seeds: Iterable[int],
    *,
    micro: int = 0,
    race: int = 0,
    validate: bool | None = None,
    jobs: int = 1,
    race_scenario: Scenario | None = None,
) -> SuiteResult:
    tasks: list[tuple[str, Scenario, int, bool | None]] = [
        ("workload", scenario, seed, validate) for seed in seeds
    ]
    tasks.extend(("micro", scenario, seed, validate) for seed in range(1, micro + 1))
    if race:
        racing = race_scenario or load_scenario(RACE_SCENARIO)
        tasks.extend(("race", racing, seed, validate) for seed in range(1, race + 1))
    logger.debug("%d verification run(s) on %d job(s)", len(tasks), jobs)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (jobs * 4))))
    else:
        reports = [_run_task(task) for task in tasks]

    suite = SuiteResult(reports)
    if race and (racing.validate if validate is None else validate) and suite.aborts("race") == 0:
        suite.errors.append("forced grant race never aborted a validation")
    return suite


def print_suite(suite: SuiteResult, name: str) -> None:
    """Print failures to stderr and raise SystemExit(1) if any."""
    failures = [report for report in suite.reports if not report.ok]
    for report in failures:
        for problem in report.problems:
            print(f"verify: {report.kind} seed {report.seed}: {problem}", file=sys.stderr)
    for error in suite.errors:
        print(f"verify: {error}", file=sys.stderr)
    summary = ", ".join(
        f"{suite.count(kind)} {kind}" for kind in ("workload", "micro", "race") if suite.count(kind)
    )
    aborts = sum(report.aborts for report in suite.reports)
    if not suite.ok:
        print(f"{name}: {len(failures)} failing run(s) of {len(suite.reports)}", file=sys.stderr)
        raise SystemExit(1)
    print(f"Verify {name}: OK ({summary or 'no runs'}; {aborts} aborted validation(s))")
