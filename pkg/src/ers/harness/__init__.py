"""Scenario runner, metrics, sweeps and the command line front end."""

from .runner import RunResult, run, strip_timing
from .scenario import Scenario, ScenarioError, load, parse

__all__ = ["RunResult", "Scenario", "ScenarioError", "load", "parse", "run", "strip_timing"]
