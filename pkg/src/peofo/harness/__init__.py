"""Scenario configuration, closed-loop runs, metrics, persistence and plots."""

from .config import ScenarioConfig, config_from_dict, load_config
from .metrics import CompareReport, TraceMismatchError, compare_report
from .plots import render_plots
from .simulate import MonteCarloSummary, ScenarioTrace, monte_carlo, run_scenario
from .traceio import export_csv, export_summary_csv, read_csv

__all__ = [
    "CompareReport", "MonteCarloSummary", "ScenarioConfig", "ScenarioTrace", "TraceMismatchError",
    "compare_report", "config_from_dict", "export_csv", "export_summary_csv", "load_config", "monte_carlo",
    "read_csv", "render_plots", "run_scenario",
]
