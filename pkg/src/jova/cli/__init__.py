"""Command-line interface and run orchestration."""
from jova.cli.config import ConfigError, RunConfig, load_run_config
from jova.cli.main import main
from jova.cli.report import run_report, scatter_svg
from jova.cli.runner import RunOutcome, run_train

__all__ = ["ConfigError", "RunConfig", "RunOutcome", "load_run_config", "main",
           "run_report", "run_train", "scatter_svg"]
