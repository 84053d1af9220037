"""Deterministic simulation harness: scenarios, adversaries, runner and checks."""

from .scenario import FORMAT_VERSION, Scenario, ScenarioInvalid, derive_input
from .strategies import Strategy, StrategyError
from .runner import dumps, run_scenario

__all__ = [
    "FORMAT_VERSION", "Scenario", "ScenarioInvalid", "Strategy", "StrategyError",
    "derive_input", "dumps", "run_scenario",
]

from .checker import Check, Report, check_invariants  # noqa: E402
from .grid import strategy_grid  # noqa: E402
from .oracle import UnmappableStrategy, compare_with_oracle, ideal_oracle  # noqa: E402

__all__ += [
    "Check", "Report", "UnmappableStrategy", "check_invariants", "compare_with_oracle",
    "ideal_oracle", "strategy_grid",
]
