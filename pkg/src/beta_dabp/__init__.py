"""Black-box domain adaptation by easy/hard domain division.

A target model is adapted from hard labels returned by a frozen source
predictor. The target set is split into an easy subdomain (labels that a
two-component mixture on per-sample losses deems clean) and a hard one,
and two networks teach each other across that split.
"""
from .autodiff import GraphError, NonFiniteError, Tensor
from .blackbox import (
    BlackBoxHandle,
    ConfigurationError,
    InProcessBlackBox,
    PipeBlackBox,
    ProtocolError,
    QueryError,
    SocketBlackBox,
    connect,
    serve,
    train_source_model,
)
from .data import LabeledVectorSet, ParseError, gaussian_shift_task, load_csv, save_csv, two_moons_task
from .diagnostics import AdaptationReport, BoundEstimate, check_bound, export_metrics, noise_ratio
from .division import GaussianMixture2, SubdomainSplit, ThresholdError, divide, fit_gmm2
from .nn import CheckpointError, MlpClassifier, Sgd, checkpoint_load, checkpoint_save
from .trainer import AdaptationError, BetaConfig, BetaResult, run_beta, run_kd_only

__version__ = "0.1.0"

__all__ = [
    "AdaptationError",
    "AdaptationReport",
    "BetaConfig",
    "BetaResult",
    "BlackBoxHandle",
    "BoundEstimate",
    "CheckpointError",
    "ConfigurationError",
    "GaussianMixture2",
    "GraphError",
    "InProcessBlackBox",
    "LabeledVectorSet",
    "MlpClassifier",
    "NonFiniteError",
    "ParseError",
    "PipeBlackBox",
    "ProtocolError",
    "QueryError",
    "Sgd",
    "SocketBlackBox",
    "SubdomainSplit",
    "Tensor",
    "ThresholdError",
    "check_bound",
    "checkpoint_load",
    "checkpoint_save",
    "connect",
    "divide",
    "export_metrics",
    "fit_gmm2",
    "gaussian_shift_task",
    "load_csv",
    "noise_ratio",
    "run_beta",
    "run_kd_only",
    "save_csv",
    "serve",
    "train_source_model",
    "two_moons_task",
]
