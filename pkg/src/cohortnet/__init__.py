"""Cohort classification toolkit: sensor feature pipeline, masked networks,
grow-and-prune synthesis, synthetic-data pre-training, and evaluation."""

__version__ = "0.1.0"

from .backends import backend_name
from .datapipe import DatasetBundle, FeatureDataset, MinMaxScaler
from .features import COHORTS, FeatureSpec
from .network import MaskedNetwork, TrainConfig, init_network

__all__ = [
    "COHORTS",
    "DatasetBundle",
    "FeatureDataset",
    "FeatureSpec",
    "MaskedNetwork",
    "MinMaxScaler",
    "TrainConfig",
    "backend_name",
    "init_network",
]
