"""End-to-end preparation shared by the CLI and the acceptance checks."""

from __future__ import annotations

from dataclasses import dataclass

from . import data
from .core_math import RandomSource
from .model import BnnClassifier, TrainConfig, TrainHistory, init_model, train

# child streams of the root seed; the model itself uses (0, ...) and (1, ...)
SPLIT, UPSAMPLE, EVALUATE, SHUFFLE, TRAIN_F1 = 2, 3, 4, 5, 6


@dataclass
class PreparedRun:
    model: BnnClassifier
    history: TrainHistory
    standardizer: data.Standardizer
    train: data.LabeledTable  # standardized and upsampled
    test: data.LabeledTable  # standardized with training statistics
    config: TrainConfig


def split_fold(table: data.LabeledTable, seed: int, train_count: int = 1600):
    return data.split(table, train_count, RandomSource(seed).child(SPLIT))


def prepare_and_train(table: data.LabeledTable, seed: int, train_count: int = 1600,
                      config: TrainConfig | None = None, hidden: int = 12,
                      upsample: bool = True) -> PreparedRun:
    """Split, fit the standardizer on the training fold, upsample, train."""
    config = config or TrainConfig(seed=seed)
    tr, te = split_fold(table, seed, train_count)
    std = data.fit_standardizer(tr)
    tr, te = std.apply(tr), std.apply(te)
    if upsample:
        tr = data.upsample_minority(tr, RandomSource(seed).child(UPSAMPLE))
    model = init_model([tr.features.shape[1], hidden, 1], seed=seed)
    model, history = train(model, tr.features, tr.labels, config)
    return PreparedRun(model, history, std, tr, te, config)
