"""Random-effects network structural equation models for mediation and spillover."""

from .estimands import EstimandReport, effects_report, estimand_variances, estimands_point
from .experiments import ExperimentConfig, MetricsTable, reproduce_table, run_experiment
from .fit import FitResult, fit_mle
from .graph import Network, NetworkDeltas, gen_erdos_renyi, gen_ring, network_deltas
from .io import ingest
from .model import Dataset, ExposureShift, RenSemParams, design_truth, simulate_dataset

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "EstimandReport",
    "ExperimentConfig",
    "ExposureShift",
    "FitResult",
    "MetricsTable",
    "Network",
    "NetworkDeltas",
    "RenSemParams",
    "effects_report",
    "estimand_variances",
    "estimands_point",
    "fit_mle",
    "gen_erdos_renyi",
    "gen_ring",
    "ingest",
    "network_deltas",
    "design_truth",
    "reproduce_table",
    "run_experiment",
    "simulate_dataset",
]
