"""Frame-granular simulator of TCP-aware uplink slot scheduling with adaptive
modulation in a multipoint-to-point wireless cell."""

from .amc import ModulationTable, build_table, select_rate
from .analysis import AnalysisParams, adjusted_rtt, compare_with_simulation, \
    expected_wait_epochs, send_rate
from .config import ExperimentConfig, FrameTiming, ValidationError, \
    default_config, load_config, save_config, validate
from .engine import run_experiment, run_single, sweep
from .metrics import MetricsRecord, aggregate, clamp_ratio, jfi, \
    slot_utilization, tfi, wctfi

__version__ = "0.1.0"

__all__ = [
    "AnalysisParams", "ExperimentConfig", "FrameTiming", "MetricsRecord",
    "ModulationTable", "ValidationError", "adjusted_rtt", "aggregate",
    "build_table", "clamp_ratio", "compare_with_simulation", "default_config",
    "expected_wait_epochs", "jfi", "load_config", "run_experiment",
    "run_single", "save_config", "select_rate", "send_rate",
    "slot_utilization", "sweep", "tfi", "validate", "wctfi",
]
