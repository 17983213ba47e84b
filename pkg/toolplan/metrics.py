"""Competition metrics used to score submissions against the held-out labels."""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from typing import Any

import numpy as np
from sklearn.metrics import accuracy_score, f1_score, mean_absolute_error, mean_squared_error, roc_auc_score


class UnknownMetric(ValueError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Unknown metric {name!r}; expected one of {[m.value for m in Metric]}")


class Metric(enum.Enum):
    RMSE = "rmse"
    RMSLE = "rmsle"
    MAE = "mae"
    ACCURACY = "accuracy"
    F1 = "f1"
    AUC = "auc"

    @property
    def higher_is_better(self) -> bool:
        return self in (Metric.ACCURACY, Metric.F1, Metric.AUC)

    @property
    def classification(self) -> bool:
        return self.higher_is_better

    @classmethod
    def parse(cls, name: str) -> Metric:
        try:
            return cls(name.lower())
        except ValueError:
            raise UnknownMetric(name) from None


def _labels(values: Sequence[Any] | np.ndarray) -> np.ndarray:
    return np.array([str(v) for v in np.asarray(values, dtype=object).tolist()], dtype=object)


def rmse(truth: Sequence[float] | np.ndarray, predicted: Sequence[float] | np.ndarray) -> float:
    return math.sqrt(mean_squared_error(np.asarray(truth, dtype="float64"), np.asarray(predicted, dtype="float64")))


def rmsle(truth: Sequence[float] | np.ndarray, predicted: Sequence[float] | np.ndarray) -> float:
    """RMSE of log1p values; negative inputs are clipped to zero."""
    t = np.log1p(np.clip(np.asarray(truth, dtype="float64"), 0.0, None))
    p = np.log1p(np.clip(np.asarray(predicted, dtype="float64"), 0.0, None))
    return math.sqrt(mean_squared_error(t, p))


def mae(truth: Sequence[float] | np.ndarray, predicted: Sequence[float] | np.ndarray) -> float:
    return float(mean_absolute_error(np.asarray(truth, dtype="float64"), np.asarray(predicted, dtype="float64")))


def accuracy(truth: Sequence[Any] | np.ndarray, predicted: Sequence[Any] | np.ndarray) -> float:
    """Fraction of exact label matches, comparing labels by their string form."""
    return float(accuracy_score(_labels(truth), _labels(predicted)))


def f1(truth: Sequence[Any] | np.ndarray, predicted: Sequence[Any] | np.ndarray) -> float:
    """Binary F1 with the lexicographically larger label as positive; macro F1 for more classes."""
    t, p = _labels(truth), _labels(predicted)
    observed = sorted(set(t.tolist()) | set(p.tolist()))
    if len(observed) <= 2:
        return float(f1_score(t, p, pos_label=observed[-1], average="binary", zero_division=0.0))
    return float(f1_score(t, p, average="macro", zero_division=0.0))


def auc(truth: Sequence[Any] | np.ndarray, predicted: Sequence[Any] | np.ndarray) -> float:
    """ROC AUC of numeric scores (or hard labels mapped to 0/1) against a two-class truth."""
    t = _labels(truth)
    classes = sorted(set(t.tolist()))
    if len(classes) != 2:
        raise ValueError(f"AUC needs exactly two classes in the truth, got {classes}")
    positive = t == classes[1]
    raw = np.asarray(predicted, dtype=object)
    try:
        scores = raw.astype("float64")
    except (TypeError, ValueError):
        scores = (_labels(raw) == classes[1]).astype("float64")
    return float(roc_auc_score(positive, scores))


_FUNCTIONS = {
    Metric.RMSE: rmse,
    Metric.RMSLE: rmsle,
    Metric.MAE: mae,
    Metric.ACCURACY: accuracy,
    Metric.F1: f1,
    Metric.AUC: auc,
}


def score(metric: Metric, truth: Sequence[Any] | np.ndarray, predicted: Sequence[Any] | np.ndarray) -> float:
    if len(truth) != len(predicted):
        raise ValueError(f"Got {len(predicted)} predictions for {len(truth)} labels")
    return _FUNCTIONS[metric](truth, predicted)
