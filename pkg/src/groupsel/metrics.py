"""Prediction and selection metrics plus minority oversampling.

Selection sensitivity/specificity default to the standard definitions
(|U n Uhat| / |U| and |V n Vhat| / |V|); an opt-in "as printed" mode divides
both counts by the total variable count instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from .errors import OneClassOnly, OutOfRange, SizeMismatch, TooFewMinority


@dataclass(frozen=True)
class SelectionTruth:
    """True active/inactive variable index sets (0-based) over p variables."""

    active: frozenset[int]
    p: int

    def __post_init__(self):
        if any(not 0 <= i < self.p for i in self.active):
            raise OutOfRange("active indices must lie in 0..p-1")
        object.__setattr__(self, "active", frozenset(int(i) for i in self.active))

    @property
    def inactive(self) -> frozenset[int]:
        return frozenset(range(self.p)) - self.active


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    target_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise OutOfRange("k_neighbors must be >= 1")
        if self.target_ratio <= 0:
            raise OutOfRange("target_ratio must be positive")


def rmse(y_true, y_pred) -> float:
    """Root mean squared prediction error."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise SizeMismatch(f"shapes {y_true.shape} and {y_pred.shape} differ")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def selection_metrics(truth: SelectionTruth, selected, as_printed: bool = False):
    """(sensitivity, specificity) of a selected variable set.

    With ``as_printed`` both counts are divided by the total variable count.
    An empty true active (or inactive) set makes the corresponding rate NaN.
    """
    selected = {int(i) for i in selected}
    if any(not 0 <= i < truth.p for i in selected):
        raise OutOfRange("selected indices must lie in 0..p-1")
    active, inactive = truth.active, truth.inactive
    hit = len(active & selected)
    rejected = len(inactive - selected)
    if as_printed:
        return hit / truth.p, rejected / truth.p
    sens = hit / len(active) if active else math.nan
    spec = rejected / len(inactive) if inactive else math.nan
    return sens, spec


def classification_metrics(y_true, scores, cutoff: float = 0.5):
    """(accuracy, sensitivity, specificity, auc) for binary labels and scores.

    Threshold metrics classify positive at score >= cutoff; AUC uses the
    rank (Mann-Whitney) formula with midranks, so ties are handled exactly.
    """
    y = np.asarray(y_true, dtype=float)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise SizeMismatch(f"shapes {y.shape} and {s.shape} differ")
    pos = y == 1.0
    n1 = int(pos.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise OneClassOnly("AUC needs both classes present")
    pred = s >= cutoff
    accuracy = float(np.mean(pred == pos))
    sensitivity = float(np.mean(pred[pos]))
    specificity = float(np.mean(~pred[~pos]))
    ranks = rankdata(s)
    auc = float((ranks[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))
    return accuracy, sensitivity, specificity, auc


def smote_count(minority: int, majority: int, target_ratio: float) -> int:
    """Number of synthetic rows needed to reach the target minority ratio."""
    return max(0, math.ceil(target_ratio * majority - minority))


def smote(x_minority, x_majority_count: int, cfg: SmoteConfig) -> np.ndarray:
    """Synthetic minority rows interpolated toward nearest minority neighbors.

    Each synthetic point is x + r * (xhat - x) for a random minority sample x,
    one of its k nearest minority neighbors xhat, and r uniform on (0, 1).
    """
    x = np.atleast_2d(np.asarray(x_minority, dtype=float))
    n_min = x.shape[0]
    if n_min <= cfg.k_neighbors:
        raise TooFewMinority(
            f"need more than k_neighbors={cfg.k_neighbors} minority rows, got {n_min}"
        )
    n_new = smote_count(n_min, x_majority_count, cfg.target_ratio)
    if n_new == 0:
        return np.empty((0, x.shape[1]))

    dist = cdist(x, x)
    np.fill_diagonal(dist, np.inf)
    neighbors = np.argsort(dist, axis=1, kind="stable")[:, : cfg.k_neighbors]

    rng = np.random.default_rng(cfg.seed)
    out = np.empty((n_new, x.shape[1]))
    for i in range(n_new):
        a = int(rng.integers(n_min))
        b = int(neighbors[a, rng.integers(cfg.k_neighbors)])
        r = float(rng.uniform())
        out[i] = x[a] + r * (x[b] - x[a])
    return out
