"""Experiment harness: runs, comparisons, checkpoints, report files and the CLI."""

from .checkpoint import checkpoint_load, checkpoint_save
from .experiment import ExperimentResult, collect, compare_paradigms, make_stream, prepare, run_experiment
from .report import MetricSeries, emit_report

__all__ = [
    "ExperimentResult",
    "MetricSeries",
    "checkpoint_load",
    "checkpoint_save",
    "collect",
    "compare_paradigms",
    "emit_report",
    "make_stream",
    "prepare",
    "run_experiment",
]
