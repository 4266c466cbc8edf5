"""Radio modulation recognition toolkit.

Synthetic signal generation through a parametric channel, normalized A/P
preprocessing, a hybrid conv/transformer/LSTM classifier running on a
from-scratch reverse-mode autodiff engine, segment-substitution augmentation,
and an AdamW training plus evaluation harness.
"""

from .augment import AugmentConfig, SubstitutionPool, augment_batch, build_pool
from .autodiff import Tensor, backward, grad_check
from .evaluate import EvalReport, compare_runs, complexity_report, evaluate
from .model import Model, ModelConfig, count_macs, count_params
from .preprocess import ApMatrix, to_ap_dataset, to_input_matrix
from .sigfile import read_sigf, write_sigf
from .siggen import (ChannelParams, Dataset, GenSpec, IqFrame, ModScheme,
                     apply_channel, generate_dataset, modulate)
from .train import TrainConfig, TrainResult, cross_entropy, train_loop

__version__ = "0.1.0"

__all__ = [
    "ApMatrix", "AugmentConfig", "ChannelParams", "Dataset", "EvalReport", "GenSpec",
    "IqFrame", "ModScheme", "Model", "ModelConfig", "SubstitutionPool", "Tensor",
    "TrainConfig", "TrainResult", "apply_channel", "augment_batch", "backward",
    "build_pool", "compare_runs", "complexity_report", "count_macs", "count_params",
    "cross_entropy", "evaluate", "generate_dataset", "grad_check", "modulate",
    "read_sigf", "to_ap_dataset", "to_input_matrix", "train_loop", "write_sigf",
]
