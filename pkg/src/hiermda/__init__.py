"""Hierarchical Bayesian multisource domain adaptation at desk scale."""

from . import _backend
from .data import Corpus, Dataset, SynthConfig, gen_synth, load_csv, save_csv, split
from .hier import (
    INFINITY,
    HierEnsemble,
    NotApplicableError,
    log_posterior,
    prior_grads,
    prior_penalty,
    quadratic_map_oracle,
    total_loss,
)
from .infer import CENTER, CONFIDENCE, InferenceMethod, entropy, evaluate, predict_center, predict_confidence
from .netcore import NetSpec, Sample, data_grad, data_loss, fd_grad, forward, init_params
from .train import OptimState, TrainConfig, adaptive_step, sgd_step, train

BACKEND = _backend.name

__all__ = [
    "BACKEND", "CENTER", "CONFIDENCE", "Corpus", "Dataset", "HierEnsemble", "INFINITY",
    "InferenceMethod", "NetSpec", "NotApplicableError", "OptimState", "Sample",
    "SynthConfig", "TrainConfig", "adaptive_step", "data_grad", "data_loss", "entropy",
    "evaluate", "fd_grad", "forward", "gen_synth", "init_params", "load_csv", "log_posterior",
    "predict_center", "predict_confidence", "prior_grads", "prior_penalty",
    "quadratic_map_oracle", "save_csv", "sgd_step", "split", "total_loss", "train",
]
