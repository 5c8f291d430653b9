"""Permutation feature importance with per-class posterior uncertainty.

Each (feature, repeat) cell permutes one column with its own child stream,
while every prediction (baseline included) reuses the same posterior noise,
so differences between rows come from the shuffle alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import PredictionDistribution, classify, predict_distribution, weighted_f1
from .core_math import RandomSource
from .data import LabeledTable
from .model import BnnClassifier, draw_noise

CSV_HEADER = ("feature", "baseline_f1", "shuffled_f1_mean", "shuffled_f1_std",
              "f1_drop", "unc_propagated", "unc_arrested")


@dataclass(frozen=True)
class ImportanceRow:
    feature_name: str
    baseline_f1: float
    shuffled_f1_mean: float
    shuffled_f1_std: float
    f1_drop: float
    uncertainty_propagated: float | None
    uncertainty_arrested: float | None


@dataclass(frozen=True)
class ClassUncertainty:
    propagated: float | None
    arrested: float | None


def _random_permutation(rng: RandomSource, n: int) -> np.ndarray:
    return rng.permutation(n)


def _class_uncertainty(dist: PredictionDistribution, threshold: float) -> ClassUncertainty:
    pred = classify(dist, threshold).astype(bool)
    sd = dist.std_score
    return ClassUncertainty(
        propagated=float(sd[pred].mean()) if pred.any() else None,
        arrested=float(sd[~pred].mean()) if (~pred).any() else None,
    )


def _shuffled(test: LabeledTable, j: int, perm) -> np.ndarray:
    X = test.features.copy()
    X[:, j] = X[perm, j]
    return X


def _feature_index(test: LabeledTable, feature: str) -> int:
    if feature not in test.feature_names:
        raise KeyError(f"unknown feature {feature!r}")
    return test.feature_names.index(feature)


def feature_uncertainty(model: BnnClassifier, test: LabeledTable, feature: str,
                        threshold: float, S: int, rng: RandomSource,
                        permuter=_random_permutation) -> ClassUncertainty:
    """Shuffle one feature and average the per-example std within each
    predicted class. A class nobody is predicted into reports None."""
    j = _feature_index(test, feature)
    eps = draw_noise(model, S, rng.child(0))
    X = _shuffled(test, j, permuter(rng.child(1), len(test)))
    return _class_uncertainty(predict_distribution(model, X, eps=eps), threshold)


def permutation_importance(model: BnnClassifier, test: LabeledTable, threshold: float,
                           S: int = 1000, rng: RandomSource | None = None,
                           repeats: int = 10, features=None,
                           permuter=_random_permutation) -> list:
    """Weighted-F1 loss from shuffling each feature, sorted by loss descending.

    `threshold` stays fixed at the value chosen on unshuffled data.
    `permuter(rng, n)` returns the row permutation for one cell; tests
    substitute the identity here. Negative drops are reported as is.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rng = rng or RandomSource(0)
    features = test.feature_names if features is None else tuple(features)
    cols = [_feature_index(test, f) for f in features]

    eps = draw_noise(model, S, rng.child(0))
    base_dist = predict_distribution(model, test.features, eps=eps)
    baseline = weighted_f1(classify(base_dist, threshold), test.labels)

    rows = []
    for fi, (name, j) in enumerate(zip(features, cols)):
        f1s, unc_p, unc_a = [], [], []
        for r in range(repeats):
            perm = permuter(rng.child(1).child(fi).child(r), len(test))
            dist = predict_distribution(model, _shuffled(test, j, perm), eps=eps)
            f1s.append(weighted_f1(classify(dist, threshold), test.labels))
            cu = _class_uncertainty(dist, threshold)
            if cu.propagated is not None:
                unc_p.append(cu.propagated)
            if cu.arrested is not None:
                unc_a.append(cu.arrested)
        f1s = np.array(f1s)
        rows.append(ImportanceRow(
            feature_name=name,
            baseline_f1=baseline,
            shuffled_f1_mean=float(f1s.mean()),
            shuffled_f1_std=float(f1s.std()),
            f1_drop=float(baseline - f1s.mean()),
            uncertainty_propagated=float(np.mean(unc_p)) if unc_p else None,
            uncertainty_arrested=float(np.mean(unc_a)) if unc_a else None,
        ))
    # stable sort keeps feature order among equal drops
    return sorted(rows, key=lambda row: -row.f1_drop)


def importance_csv_text(rows) -> str:
    def fmt(v):
        return "" if v is None else format(v, ".17g")

    lines = [",".join(CSV_HEADER)]
    for r in rows:
        lines.append(",".join([r.feature_name] + [fmt(v) for v in (
            r.baseline_f1, r.shuffled_f1_mean, r.shuffled_f1_std, r.f1_drop,
            r.uncertainty_propagated, r.uncertainty_arrested)]))
    return "\n".join(lines) + "\n"
