"""Experiment harness: scenario configs, orchestration, CLI."""

from .runner import (CurveSet, ExperimentResult, SavingsReport, SavingsRow,
                     SeedResult, ber_sentinel, compute_savings,
                     epochs_to_threshold, linear_reference,
                     run_direction_study, run_experiment,
                     run_reference_curves, run_scenario_matrix,
                     scenario_frame, train_source)
from .scenarios import (DESK_PROFILE, FULL_PROFILE, ConfigError,
                        RunProfile, Scenario, TLExperiment,
                        default_strategy, parse_kv_file, parse_kv_text,
                        profile_from_kv, scenario_from_kv)

__all__ = [
    "CurveSet", "ExperimentResult", "SavingsReport", "SavingsRow",
    "SeedResult", "ber_sentinel", "compute_savings", "epochs_to_threshold",
    "linear_reference", "run_direction_study", "run_experiment",
    "run_reference_curves", "run_scenario_matrix", "scenario_frame",
    "train_source",
    "DESK_PROFILE", "FULL_PROFILE", "ConfigError", "RunProfile",
    "Scenario", "TLExperiment", "default_strategy", "parse_kv_file",
    "parse_kv_text", "profile_from_kv", "scenario_from_kv",
]
