"""Fit-quality metrics: coefficient of determination and symmetric MAPE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class MetricReport:
    r_squared: float
    smape: float          # percent, in [0, 100]
    n_points: int
    n_filtered_zero: int  # exact-zero targets excluded from sMAPE


def r_squared(pred, target) -> float:
    """R^2 = 1 - sum (yhat - y)^2 / sum (y - ybar)^2.

    At most 1; negative when the prediction is worse than the mean of the
    data.  Undefined (raises) for a constant target.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise DomainError("prediction and target shapes differ")
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    if ss_tot == 0.0:
        raise DomainError("target variance is zero; r_squared undefined")
    ss_res = float(np.sum((pred - target) ** 2))
    return 1.0 - ss_res / ss_tot


def smape(pred, target) -> float:
    """(100/N) sum |yhat - y| / (|yhat| + |y|), bounded in [0, 100] percent.

    Points with target exactly zero are filtered out first (the filter is
    exact, not a tolerance, so the metric stays deterministic).  A predicted
    zero against a nonzero target contributes the full 100% for that point.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise DomainError("prediction and target shapes differ")
    keep = target != 0.0
    if not np.any(keep):
        raise DomainError("all targets are zero; sMAPE undefined after filtering")
    p = pred[keep]
    t = target[keep]
    denom = np.abs(p) + np.abs(t)
    ratio = np.where(denom > 0.0, np.abs(p - t) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(100.0 * ratio.mean())


def report(pred, target) -> MetricReport:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    return MetricReport(
        r_squared=r_squared(pred, target),
        smape=smape(pred, target),
        n_points=int(target.size),
        n_filtered_zero=int(np.count_nonzero(target == 0.0)),
    )
