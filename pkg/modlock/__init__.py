"""Lock managers split into mode, holder, waiter and grant modules."""

from .config import Scenario, load_scenario
from .sim import RunResult, run

__all__ = ["RunResult", "Scenario", "load_scenario", "run"]
