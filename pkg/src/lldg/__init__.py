"""Latent label distribution grids for label distribution learning."""
from .data import Dataset, inject_label_noise, load_dataset, make_synthetic_dataset, normalize_features, split
from .metrics import MetricReport, evaluate, evaluate_batch
from .model import LldgModel, LldgModelConfig, load_model, loss_d, loss_g, save_model, total_loss
from .prior import difference_matrix, sample_prior_grid
from .tensor import fold, mode_n_product, svd, unfold
from .training import evaluate_model, fit, predict, train_epoch
from .tucker import TuckerFactors, TuckerRanks, tucker_decompose, tucker_project, tucker_reconstruct

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "inject_label_noise",
    "load_dataset",
    "make_synthetic_dataset",
    "normalize_features",
    "split",
    "MetricReport",
    "evaluate",
    "evaluate_batch",
    "LldgModel",
    "LldgModelConfig",
    "load_model",
    "save_model",
    "loss_d",
    "loss_g",
    "total_loss",
    "difference_matrix",
    "sample_prior_grid",
    "fold",
    "unfold",
    "mode_n_product",
    "svd",
    "evaluate_model",
    "fit",
    "predict",
    "train_epoch",
    "TuckerFactors",
    "TuckerRanks",
    "tucker_decompose",
    "tucker_project",
    "tucker_reconstruct",
]
