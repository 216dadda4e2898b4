"""Payoff normalization and the summary metrics reported per method."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats


def normalize_payoffs(raw) -> np.ndarray:
    """Clip negatives to zero and rescale to sum 1; all-non-positive input maps to uniform."""
    raw = np.asarray(raw, dtype=float)
    if raw.size == 0:
        raise ValueError("empty payoff vector")
    clipped = np.clip(raw, 0.0, None)
    total = clipped.sum()
    if total <= 0.0:
        return np.full(raw.size, 1.0 / raw.size)
    return clipped / total


def degenerate(raw) -> bool:
    """True when :func:`normalize_payoffs` had to fall back to the uniform split."""
    return bool(np.all(np.asarray(raw) <= 0.0))


def max_dif(normalized) -> float:
    x = np.asarray(normalized, dtype=float)
    return float(x.max() - x.min())


def dist_to_uniform(normalized) -> float:
    x = np.asarray(normalized, dtype=float)
    return float(np.linalg.norm(x - 1.0 / x.size))


def spearman(a, b) -> float:
    """Spearman rank correlation; ``nan`` when either side is constant."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.size < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return float("nan")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return float(stats.spearmanr(a, b)[0])


@dataclass
class MetricsRow:
    method: str
    acc: float
    max_dif: float
    dist: float
    t: float
    B: float

    @classmethod
    def from_raw(cls, method: str, raw, acc: float, t: float) -> "MetricsRow":
        x = normalize_payoffs(raw)
        return cls(method, acc, max_dif(x), dist_to_uniform(x), t, float(np.sum(raw)))
