"""Posterior predictive evaluation: score distributions, thresholding,
confusion counts, per-class report and the score/uncertainty histogram."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .core_math import RandomSource
from .model import BnnClassifier, draw_noise, forward_sampled

DEFAULT_SAMPLES = 1000
CLASS_NAMES = ("arrested", "propagated")


class UndefinedMetricWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PredictionDistribution:
    """Posterior prediction scores, one row per posterior sample."""

    scores: np.ndarray  # (S, N)

    @property
    def mean_score(self) -> np.ndarray:
        return self.scores.mean(axis=0)

    @property
    def std_score(self) -> np.ndarray:
        return self.scores.std(axis=0, ddof=1)

    @property
    def n_samples(self) -> int:
        return self.scores.shape[0]


def predict_distribution(model: BnnClassifier, X, S: int = DEFAULT_SAMPLES,
                         rng: RandomSource | None = None, eps=None) -> PredictionDistribution:
    if eps is None:
        if S < 2:
            raise ValueError("need at least two posterior samples for a spread")
        eps = draw_noise(model, S, rng)
    scores = forward_sampled(model, np.atleast_2d(X), np.atleast_2d(eps))
    return PredictionDistribution(scores)


def f1_positive(pred, truth) -> float:
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = np.sum(pred & truth)
    denom = pred.sum() + truth.sum()
    return 2.0 * tp / denom if denom else 0.0


@dataclass(frozen=True)
class ThresholdResult:
    threshold: float
    f1: float


def optimal_threshold(mean_scores, labels) -> ThresholdResult:
    """Threshold maximizing positive-class F1 under the rule score >= threshold.

    Candidates are 0, 1 and the midpoints between consecutive distinct
    scores, which together realize every achievable prediction set. Ties go
    to the smallest threshold.
    """
    s = np.asarray(mean_scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if y.all() or not y.any():
        raise ValueError("labels must contain both classes")
    u = np.unique(s)
    cands = np.unique(np.concatenate([[0.0], 0.5 * (u[1:] + u[:-1]), [1.0]]))

    # predicted positives at threshold t: scores >= t, counted via a sorted sweep
    order = np.argsort(s, kind="stable")
    s_sorted = s[order]
    pos_suffix = np.concatenate([np.cumsum(y[order][::-1])[::-1], [0]])
    first = np.searchsorted(s_sorted, cands, side="left")
    tp = pos_suffix[first]
    n_pred = s.size - first
    f1 = 2.0 * tp / (n_pred + y.sum())
    best = int(np.argmax(f1))  # first max is the smallest threshold
    return ThresholdResult(float(cands[best]), float(f1[best]))


def classify(dist_or_scores, threshold: float) -> np.ndarray:
    """1 (propagated) where the mean score is >= threshold, else 0."""
    if isinstance(dist_or_scores, PredictionDistribution):
        scores = dist_or_scores.mean_score
    else:
        scores = np.asarray(dist_or_scores, dtype=float)
    return (scores >= threshold).astype(np.int64)


@dataclass(frozen=True)
class ConfusionCounts:
    correct_arrested: int
    arrested_as_propagated: int
    propagated_as_arrested: int
    correct_propagated: int

    @property
    def total(self) -> int:
        return (self.correct_arrested + self.arrested_as_propagated
                + self.propagated_as_arrested + self.correct_propagated)

    def as_dict(self) -> dict:
        return asdict(self)


def confusion_matrix(pred, truth) -> ConfusionCounts:
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    return ConfusionCounts(
        correct_arrested=int(np.sum(~truth & ~pred)),
        arrested_as_propagated=int(np.sum(~truth & pred)),
        propagated_as_arrested=int(np.sum(truth & ~pred)),
        correct_propagated=int(np.sum(truth & pred)),
    )


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassificationReport:
    per_class: dict  # class name -> ClassMetrics
    weighted: ClassMetrics

    def as_dict(self) -> dict:
        return {
            "per_class": {k: asdict(v) for k, v in self.per_class.items()},
            "weighted_average": asdict(self.weighted),
        }


def _ratio(num, den, what):
    if den == 0:
        warnings.warn(f"{what} is undefined (zero denominator); reported as 0",
                      UndefinedMetricWarning, stacklevel=3)
        return 0.0
    return num / den


def classification_report(cm: ConfusionCounts) -> ClassificationReport:
    if cm.total <= 0:
        raise ValueError("empty confusion matrix")
    rows = {
        # (correct, predicted as this class, actually this class)
        "arrested": (cm.correct_arrested,
                     cm.correct_arrested + cm.propagated_as_arrested,
                     cm.correct_arrested + cm.arrested_as_propagated),
        "propagated": (cm.correct_propagated,
                       cm.correct_propagated + cm.arrested_as_propagated,
                       cm.correct_propagated + cm.propagated_as_arrested),
    }
    per_class = {}
    for name, (correct, predicted, actual) in rows.items():
        p = _ratio(correct, predicted, f"{name} precision")
        r = _ratio(correct, actual, f"{name} recall")
        f = _ratio(2 * p * r, p + r, f"{name} F1")
        per_class[name] = ClassMetrics(p, r, f, actual)
    total = cm.total
    weighted = ClassMetrics(
        *(sum(getattr(m, k) * m.support for m in per_class.values()) / total
          for k in ("precision", "recall", "f1")),
        support=total,
    )
    return ClassificationReport(per_class, weighted)


def weighted_f1(pred, truth) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UndefinedMetricWarning)
        return classification_report(confusion_matrix(pred, truth)).weighted.f1


@dataclass(frozen=True)
class HistogramRow:
    bin_center: float
    count: int
    mean_std: float | None  # None for empty bins


def uncertainty_histogram(dist: PredictionDistribution, bins: int = 10) -> list:
    """Equal-width bins of the mean score over [0, 1] with the average std per bin."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    edges = np.linspace(0.0, 1.0, bins + 1)
    ms, sd = dist.mean_score, dist.std_score
    idx = np.clip(np.searchsorted(edges, ms, side="right") - 1, 0, bins - 1)
    rows = []
    for b in range(bins):
        sel = idx == b
        n = int(sel.sum())
        rows.append(HistogramRow(float(0.5 * (edges[b] + edges[b + 1])), n,
                                 float(sd[sel].mean()) if n else None))
    return rows


def band_uncertainty(dist: PredictionDistribution, bands) -> float | None:
    """Mean per-example std over examples whose mean score falls in any
    closed interval of `bands`, or None if no example does."""
    ms = dist.mean_score
    sel = np.zeros(ms.shape, dtype=bool)
    for lo, hi in bands:
        sel |= (ms >= lo) & (ms <= hi)
    return float(dist.std_score[sel].mean()) if sel.any() else None


def histogram_csv_text(rows) -> str:
    lines = ["bin_center,count,mean_std"]
    for r in rows:
        std = "" if r.mean_std is None else format(r.mean_std, ".17g")
        lines.append(f"{r.bin_center:.17g},{r.count},{std}")
    return "\n".join(lines) + "\n"


def evaluation_report(dist: PredictionDistribution, labels, threshold: ThresholdResult,
                      bins: int = 10, importance=None) -> dict:
    """JSON-ready evaluation summary."""
    pred = classify(dist, threshold.threshold)
    cm = confusion_matrix(pred, labels)
    report = classification_report(cm)
    out = {
        "threshold": threshold.threshold,
        "f1_at_threshold": threshold.f1,
        "n_examples": int(len(pred)),
        "posterior_samples": dist.n_samples,
        "confusion": cm.as_dict(),
        **report.as_dict(),
        "histogram": [asdict(r) for r in uncertainty_histogram(dist, bins)],
    }
    if importance is not None:
        out["importance"] = [asdict(r) for r in importance]
    return out
