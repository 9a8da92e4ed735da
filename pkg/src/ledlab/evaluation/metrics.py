"""Localization error, accuracy-at-k and their standard errors."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class PredictionRecord:
    episode_id: str
    floor: int
    pred_x: float
    pred_y: float
    true_x: float
    true_y: float
    le: float

    def to_dict(self) -> dict:
        return asdict(self)


def localization_error(pred: tuple, true: tuple) -> float:
    """Euclidean distance in meters between ``(floor, x, y)`` positions on the same floor."""
    if pred[0] != true[0]:
        raise ValueError(f"prediction on floor {pred[0]} but truth on floor {true[0]}")
    return math.hypot(pred[1] - true[1], pred[2] - true[2])


def make_record(episode_id: str, pred: tuple, true: tuple) -> PredictionRecord:
    return PredictionRecord(episode_id, int(true[0]), float(pred[1]), float(pred[2]),
                            float(true[1]), float(true[2]), localization_error(pred, true))


def _errors(records) -> np.ndarray:
    errs = np.array([r.le if isinstance(r, PredictionRecord) else r for r in records], dtype=np.float64)
    if errs.size == 0:
        raise ValueError("no records to score")
    return errs


def accuracy_at(records, k: float) -> tuple[float, float]:
    """Fraction of records with LE <= k, and its binomial standard error."""
    errs = _errors(records)
    p = float(np.mean(errs <= k))
    return p, math.sqrt(p * (1.0 - p) / errs.size)


def mean_error(records) -> tuple[float, float]:
    """Mean LE and the standard error of the mean (sample stddev / sqrt N)."""
    errs = _errors(records)
    se = float(np.std(errs, ddof=1) / math.sqrt(errs.size)) if errs.size > 1 else 0.0
    return float(np.mean(errs)), se


@dataclass(frozen=True)
class MetricsReport:
    split: str
    n: int
    le: float
    le_se: float
    acc3: float
    acc3_se: float
    acc5: float
    acc5_se: float

    @classmethod
    def from_records(cls, split: str, records) -> "MetricsReport":
        le, le_se = mean_error(records)
        a3, s3 = accuracy_at(records, 3.0)
        a5, s5 = accuracy_at(records, 5.0)
        return cls(split, len(records), le, le_se, a3, s3, a5, s5)

    def to_dict(self) -> dict:
        return asdict(self)


def error_cdf(records) -> list[tuple[float, float]]:
    """Sorted errors paired with the cumulative fraction of records at or below them."""
    errs = np.sort(_errors(records))
    n = errs.size
    return [(float(e), (i + 1) / n) for i, e in enumerate(errs)]
