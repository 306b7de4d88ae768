"""Seeded Monte Carlo experiments, result tables and the command line."""

from .config import ExperimentConfig, load_config, parse_config
from .results import ResultTable, measure_slope
from .runner import run_experiment
