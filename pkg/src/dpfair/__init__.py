"""Privacy, fairness and utility trade-offs of small neural networks on Adult census data."""

from .data import GroupStats, ProcessedDataset, SplitSpec, group_statistics, load_adult
from .experiment import ExperimentConfig, RunRecord, run_pipeline, sweep
from .fairness import FairnessThresholds, ROCPolicy, accuracy, apply_roc, fit_roc, risk_difference
from .nn import MLPParams, TrainConfig, predict_proba, train
from .privacy import PrivacySpec, calibrate_noise_multiplier, compute_epsilon
from .report import build_report, emit

__version__ = "0.1.0"
