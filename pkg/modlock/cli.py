import argparse
import logging
import os
import sys
from pathlib import Path

from .config import Scenario, builtin_scenarios, describe, load_scenario
from .constants import DEFAULT_SEED, SEED_ENV
from .errors import ConfigError, InfeasibleAssignment, ModlockError
from .metrics import MetricsReport, compare_metrics, format_comparison
from .planner import default_requirements, enumerate_assignments, format_plans, to_toml
from .sim import run
from .suite import print_suite, run_suite
from .util import die

logger = logging.getLogger(__name__)


def _seed(args: argparse.Namespace, scenario: Scenario | None = None) -> int:
    if args.seed is not None:
        return args.seed
    env_seed = os.getenv(SEED_ENV)
    if env_seed:
        try:
            return int(env_seed)
        except ValueError:
            raise ConfigError(f"expected an integer, got '{env_seed}'", field=SEED_ENV) from None
    return scenario.workload.seed if scenario is not None else DEFAULT_SEED


def _load(args: argparse.Namespace, name: str) -> Scenario:
    return load_scenario(name, variant=args.variant, overrides=args.set or [])


def handle_run(args: argparse.Namespace) -> None:
    scenario = _load(args, args.config)
    seed = _seed(args, scenario)
    logger.info("running %s", describe(scenario))
    result = run(scenario, seed, validate=False if args.no_validate else None)
    report = MetricsReport.from_metrics(scenario.name, seed, result.metrics)
    if args.history:
        result.history.export(Path(args.history))
    if args.out:
        Path(args.out).write_text(report.to_csv(), encoding="utf-8")
    else:
        sys.stdout.write(report.to_csv())


def handle_plan(args: argparse.Namespace) -> None:
    scenario = _load(args, args.config)
    plans = enumerate_assignments(
        scenario.topology,
        default_requirements(),
        scenario.workload_params(),
        strict=args.strict or scenario.assignment.strict,
    )
    if args.emit:
        feasible = [plan for plan, score in plans if score.feasible]
        if not feasible:
            raise InfeasibleAssignment(f"{scenario.name}: no feasible assignment")
        sys.stdout.write(to_toml(feasible[0]))
        return
    print(format_plans(plans, args.limit))
    if args.verbose:
        for rank, (plan, score) in enumerate(plans[: args.limit], start=1):
            for problem in score.problems:
                print(f"  {rank}: {problem}")


def handle_verify(args: argparse.Namespace) -> None:
    scenario = _load(args, args.config)
    first = _seed(args, scenario)
    suite = run_suite(
        scenario,
        range(first, first + args.seeds),
        micro=args.micro,
        race=args.race,
        validate=False if args.no_validate else None,
        jobs=args.jobs,
    )
    print_suite(suite, scenario.name)


def handle_compare(args: argparse.Namespace) -> None:
    first = _load(args, args.first)
    second = _load(args, args.second)
    seed = _seed(args)
    a = run(first, seed)
    b = run(second, seed)
    print(format_comparison(compare_metrics(a.metrics, b.metrics), first.name, second.name))


def handle_scenarios(args: argparse.Namespace) -> None:
    for name in builtin_scenarios():
        print(name)


def _add_scenario_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--seed", type=int, default=argparse.SUPPRESS, help="Simulation seed"
    )
    parser.add_argument("--variant", help="Variant table from the scenario file")
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="Override a scenario field, e.g. workload.total_ops=1000",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Modular lock managers on simulated heterogeneous hardware"
    )
    parser.add_argument("--verbose", action="store_true", help="Log debug details")
    parser.add_argument(
        "--seed", type=int, help=f"Simulation seed (default: ${SEED_ENV} or the scenario's)"
    )

    sub = parser.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="Run a scenario and write metrics as CSV")
    p_run.add_argument("config", help="Scenario file or built-in scenario name")
    p_run.add_argument("--out", help="CSV output path (default: stdout)")
    p_run.add_argument("--history", help="Write the history as JSON Lines")
    p_run.add_argument(
        "--no-validate", action="store_true", help="Disable grant-count validation"
    )
    _add_scenario_args(p_run)
    p_run.set_defaults(func=handle_run)

    p_plan = sub.add_parser("plan", help="Rank module assignments for a topology")
    p_plan.add_argument("config", help="Scenario file or built-in scenario name")
    p_plan.add_argument("--limit", type=int, default=10, help="Plans to print")
    p_plan.add_argument(
        "--strict", action="store_true", help="Treat bottleneck violations as infeasible"
    )
    p_plan.add_argument(
        "--emit", action="store_true", help="Print the best plan as an [assignment] table"
    )
    _add_scenario_args(p_plan)
    p_plan.set_defaults(func=handle_plan)

    p_verify = sub.add_parser("verify", help="Check safety and liveness over many runs")
    p_verify.add_argument("config", help="Scenario file or built-in scenario name")
    p_verify.add_argument("--seeds", type=int, default=10, help="Workload runs")
    p_verify.add_argument(
        "--micro", type=int, default=0, help="Randomized micro-histories to linearize"
    )
    p_verify.add_argument(
        "--race", type=int, default=0, help="Scripted schedules forcing the grant race"
    )
    p_verify.add_argument(
        "--no-validate", action="store_true", help="Disable grant-count validation"
    )
    p_verify.add_argument("--jobs", type=int, default=1, help="Parallel worker processes")
    _add_scenario_args(p_verify)
    p_verify.set_defaults(func=handle_verify)

    p_compare = sub.add_parser("compare", help="Run two scenarios and print metric ratios")
    p_compare.add_argument("first", help="Baseline scenario")
    p_compare.add_argument("second", help="Scenario compared against the baseline")
    _add_scenario_args(p_compare)
    p_compare.set_defaults(func=handle_compare)

    p_list = sub.add_parser("scenarios", help="List built-in scenarios")
    p_list.set_defaults(func=handle_scenarios)
    return parser


def main(argv: list[str] | None = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except (ConfigError, InfeasibleAssignment) as exc:
        die(str(exc), 2)
    except ModlockError as exc:
        die(f"{type(exc).__name__}: {exc}", 1)


if __name__ == "__main__":
    main()
