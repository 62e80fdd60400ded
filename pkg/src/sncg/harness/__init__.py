"""Experiment harness: configs, run matrices, traces and summaries."""

from .experiment import ConfigError, Experiment, load_experiment
from .runner import run_experiment, summarize, verify_paths, verify_trace
