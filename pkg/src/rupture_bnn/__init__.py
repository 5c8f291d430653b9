"""Variational Bayesian neural network for earthquake rupture classification."""

from .analysis import (
    ClassificationReport,
    ConfusionCounts,
    PredictionDistribution,
    classification_report,
    classify,
    confusion_matrix,
    optimal_threshold,
    predict_distribution,
    uncertainty_histogram,
)
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .core_math import DiagonalGaussian, RandomSource, kl_diag_gaussian
from .data import (
    FEATURE_NAMES,
    GeneratorConfig,
    LabeledTable,
    fit_standardizer,
    generate_synthetic,
    load_csv,
    split,
    upsample_minority,
)
from .importance import ImportanceRow, feature_uncertainty, permutation_importance
from .model import BnnClassifier, TrainConfig, elbo_estimate, elbo_gradient, init_model, train

__version__ = "0.1.0"
