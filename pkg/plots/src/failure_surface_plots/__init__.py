"""Failure-surface figure rendering for fairrank sweep CSVs."""

from .frame import SweepFrame, SweepFrameError, load_sweep_csv
from .render import render_failure_surface

__version__ = "0.1.0"
