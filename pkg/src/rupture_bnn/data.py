"""Tabular data: CSV I/O, standardization, rebalancing, splitting, and the
synthetic rupture generator used in place of full dynamic simulations."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .core_math import RandomSource

FEATURE_NAMES = ("sxx", "syy", "sxy", "mu_d", "friction_drop", "d_c", "width", "height")
LABEL_NAME = "rupture"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class SchemaError(DataError):
    """Columns do not match what the pipeline expects."""


@dataclass
class LabeledTable:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple = FEATURE_NAMES

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels).astype(np.int64)
        self.feature_names = tuple(self.feature_names)
        if self.features.ndim != 2 or self.features.shape[1] != len(self.feature_names):
            raise SchemaError(
                f"features shape {self.features.shape} does not match "
                f"{len(self.feature_names)} names")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError("one label per row required")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain NaN or Inf")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise DataError("labels must be 0 or 1")

    def __len__(self):
        return self.features.shape[0]

    def subset(self, idx) -> "LabeledTable":
        return LabeledTable(self.features[idx], self.labels[idx], self.feature_names)

    def with_features(self, features) -> "LabeledTable":
        return LabeledTable(features, self.labels.copy(), self.feature_names)

    def column(self, name: str) -> np.ndarray:
        return self.features[:, self.feature_names.index(name)]


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def to_csv_text(table: LabeledTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(table.feature_names) + [LABEL_NAME])
    for row, label in zip(table.features, table.labels):
        w.writerow([_fmt(v) for v in row] + [int(label)])
    return buf.getvalue()


def write_csv(table: LabeledTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv_text(table))


def load_csv(path, expected_names=FEATURE_NAMES) -> LabeledTable:
    """Read a labelled table, matching columns by header name.

    Columns may appear in any order; the result uses `expected_names` order.
    Row numbers in error messages count data rows from 1 (header excluded).
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    wanted = list(expected_names) + [LABEL_NAME]
    for name in wanted:
        if name not in header:
            raise SchemaError(f"{path}: missing column {name!r}")
    cols = [header.index(name) for name in wanted]
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")

    X = np.empty((len(body), len(expected_names)))
    y = np.empty(len(body), dtype=np.int64)
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        for j, c in enumerate(cols[:-1]):
            try:
                X[r - 1, j] = float(row[c])
            except ValueError:
                raise DataError(
                    f"{path}: row {r}, column {wanted[j]!r}: cannot parse {row[c]!r}") from None
            if not np.isfinite(X[r - 1, j]):
                raise DataError(f"{path}: row {r}, column {wanted[j]!r}: non-finite value")
        raw = row[cols[-1]].strip()
        try:
            label = float(raw)
        except ValueError:
            raise DataError(f"{path}: row {r}: non-binary label {raw!r}") from None
        if label not in (0.0, 1.0):
            raise DataError(f"{path}: row {r}: non-binary label {raw!r}")
        y[r - 1] = int(label)
    return LabeledTable(X, y, tuple(expected_names))


@dataclass(frozen=True)
class Standardizer:
    """Per-column z-scoring with statistics from the training fold.

    Standard deviations use the population (1/N) form.
    """

    means: np.ndarray
    stds: np.ndarray

    def apply(self, table: LabeledTable) -> LabeledTable:
        return table.with_features((table.features - self.means) / self.stds)

    def invert(self, table: LabeledTable) -> LabeledTable:
        return table.with_features(table.features * self.stds + self.means)


def fit_standardizer(train: LabeledTable) -> Standardizer:
    if len(train) == 0:
        raise DataError("cannot fit a standardizer on an empty table")
    means = train.features.mean(axis=0)
    stds = train.features.std(axis=0)
    spans = np.ptp(train.features, axis=0)
    for name, s, span in zip(train.feature_names, stds, spans):
        if span == 0 or not s > 0:
            raise DataError(f"column {name!r} is constant")
    return Standardizer(means, stds)


def apply_standardizer(s: Standardizer, table: LabeledTable) -> LabeledTable:
    return s.apply(table)


def upsample_minority(train: LabeledTable, rng: RandomSource) -> LabeledTable:
    """Append minority rows drawn with replacement until both classes are equal."""
    pos = np.flatnonzero(train.labels == 1)
    neg = np.flatnonzero(train.labels == 0)
    if pos.size == 0 or neg.size == 0:
        raise DataError("upsampling needs both classes")
    minority, majority = (pos, neg) if pos.size < neg.size else (neg, pos)
    extra = majority.size - minority.size
    if extra == 0:
        return train.subset(np.arange(len(train)))
    picks = minority[rng.integers(0, minority.size, size=extra)]
    return train.subset(np.concatenate([np.arange(len(train)), picks]))


def split(table: LabeledTable, train_count: int, rng: RandomSource):
    """Shuffle rows uniformly and cut into (train, test)."""
    n = len(table)
    if not 0 < train_count < n:
        raise ValueError(f"train_count must be in (0, {n}), got {train_count}")
    order = rng.permutation(n)
    return table.subset(order[:train_count]), table.subset(order[train_count:])


# Uniform sampling box per feature. Stresses in MPa with compression negative.
FEATURE_RANGES = {
    "sxx": (-120.0, -60.0),
    "syy": (-120.0, -60.0),
    "sxy": (20.0, 70.0),
    "mu_d": (0.2, 0.6),
    "friction_drop": (0.1, 0.5),
    "d_c": (0.1, 0.8),
    "width": (2.0, 6.0),
    "height": (0.1, 1.0),
}


@dataclass(frozen=True)
class GeneratorConfig:
    s_crit: float = 1.5
    geom_coupling: float = 0.3
    energy_coeff: float = 4.0


def relative_strength(features, config: GeneratorConfig = GeneratorConfig()) -> np.ndarray:
    """Strength excess over dynamic stress drop, per row.

    With barrier slope s = 2*height/width and effective normal stress
    sn = -(syy + geom_coupling*s*sxx), this is
    (mu_s*sn - sxy) / max(sxy - mu_d*sn, 0.01) where mu_s = mu_d + friction_drop.
    """
    f = np.atleast_2d(np.asarray(features, dtype=float))
    sxx, syy, sxy, mu_d, drop, _, width, height = f.T
    slope = 2.0 * height / width
    sn = -(syy + config.geom_coupling * slope * sxx)
    excess = (mu_d + drop) * sn - sxy
    stress_drop = sxy - mu_d * sn
    return excess / np.maximum(stress_drop, 0.01)


def rupture_label(features, config: GeneratorConfig = GeneratorConfig()) -> np.ndarray:
    """Deterministic propagation label (1) or arrest (0) for each feature row.

    A row propagates when relative strength plus a fracture-energy barrier
    penalty, energy_coeff * d_c * slope, stays below s_crit.
    """
    f = np.atleast_2d(np.asarray(features, dtype=float))
    slope = 2.0 * f[:, 7] / f[:, 6]
    penalty = config.energy_coeff * f[:, 5] * slope
    return (relative_strength(f, config) + penalty < config.s_crit).astype(np.int64)


def generate_synthetic(n: int, rng: RandomSource,
                       config: GeneratorConfig = GeneratorConfig()) -> LabeledTable:
    if n < 1:
        raise ValueError("n must be >= 1")
    lo = np.array([FEATURE_RANGES[k][0] for k in FEATURE_NAMES])
    hi = np.array([FEATURE_RANGES[k][1] for k in FEATURE_NAMES])
    X = lo + (hi - lo) * rng.uniform(size=(n, len(FEATURE_NAMES)))
    return LabeledTable(X, rupture_label(X, config), FEATURE_NAMES)
