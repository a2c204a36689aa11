"""Monte Carlo experiment driver and CLI."""

from .config import ConfigError, CsirSetting, ExperimentConfig, parse_snr_grid
from .io import emit_csv, load_csv
from .runner import (
    Curve,
    CurvePoint,
    TrialBatch,
    TrialRecord,
    plan_point,
    run_classical,
    run_experiment,
    run_hybrid,
    run_imperfect_csir,
    simulate_point,
)

__all__ = [
    "ConfigError", "CsirSetting", "ExperimentConfig", "parse_snr_grid", "emit_csv", "load_csv",
    "Curve", "CurvePoint", "TrialBatch", "TrialRecord", "plan_point", "run_classical",
    "run_experiment", "run_hybrid", "run_imperfect_csir", "simulate_point",
]
