"""Pooled forecast accuracy metrics.

All metrics pool over every (series, step) point handed to them; callers
decide what goes into the pool.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionError, MetricError


def _pair(actuals, preds) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(actuals, dtype=np.float64)
    yhat = np.asarray(preds, dtype=np.float64)
    if y.shape != yhat.shape:
        raise DimensionError(f"actuals {y.shape} and predictions {yhat.shape} differ in shape")
    if y.size == 0:
        raise MetricError("no points to score")
    return y, yhat


def pinball(actuals, preds, q: float) -> np.ndarray:
    """Elementwise quantile loss q(y - yhat)+ + (1 - q)(yhat - y)+."""
    if not 0 < q < 1:
        raise MetricError(f"quantile level {q} outside (0, 1)")
    diff = np.asarray(actuals, dtype=np.float64) - np.asarray(preds, dtype=np.float64)
    return q * np.maximum(diff, 0) + (1 - q) * np.maximum(-diff, 0)


def ql(q: float, actuals, preds) -> float:
    """Sum of quantile losses divided by the sum of absolute actuals."""
    y, yhat = _pair(actuals, preds)
    denom = np.sum(np.abs(y))
    if denom == 0:
        raise MetricError("QL undefined: all actuals are zero")
    return float(np.sum(pinball(y, yhat, q)) / denom)


def smape(actuals, preds) -> float:
    y, yhat = _pair(actuals, preds)
    num = 2 * (y - yhat)
    den = y + yhat
    zero = den == 0
    if np.any(zero & (num != 0)):
        k = np.flatnonzero((zero & (num != 0)).reshape(-1))[0]
        raise MetricError(f"SMAPE undefined at point {k}: y + yhat = 0 with y != yhat")
    terms = np.zeros_like(y)
    np.divide(num, den, out=terms, where=~zero)
    return float(np.mean(np.abs(terms)))


def nrmse(actuals, preds) -> float:
    y, yhat = _pair(actuals, preds)
    scale = np.mean(np.abs(y))
    if scale == 0:
        raise MetricError("NRMSE undefined: all actuals are zero")
    return float(np.sqrt(np.mean((y - yhat) ** 2)) / scale)


def seasonal_abs_diff(insample, m: int) -> float:
    """In-sample mean of |y_t - y_{t-m}|."""
    x = np.asarray(insample, dtype=np.float64)
    if x.size <= m:
        raise MetricError(f"in-sample length {x.size} must exceed the season length {m}")
    return float(np.mean(np.abs(x[m:] - x[:-m])))


def mase(actuals, preds, insample: Sequence, m: int, series_ids: Sequence[str] | None = None,
         exclude_undefined: bool = False) -> float | tuple[float, list[str]]:
    """Mean over series of horizon MAE scaled by the in-sample seasonal-naive MAE.

    ``actuals``/``preds`` are (series, steps); ``insample`` holds one history
    array per series. With ``exclude_undefined`` series whose denominator is
    zero are left out and returned alongside the value.
    """
    y, yhat = _pair(actuals, preds)
    if y.ndim == 1:
        y, yhat = y[None], yhat[None]
    y, yhat = y.reshape(y.shape[0], -1), yhat.reshape(yhat.shape[0], -1)
    if len(insample) != y.shape[0]:
        raise DimensionError(f"{len(insample)} in-sample histories for {y.shape[0]} series")
    ids = list(series_ids) if series_ids is not None else [str(i) for i in range(y.shape[0])]
    ratios, excluded = [], []
    for i, hist in enumerate(insample):
        denom = seasonal_abs_diff(hist, m)
        if denom == 0:
            if not exclude_undefined:
                raise MetricError(f"MASE undefined for series {ids[i]!r}: in-sample seasonal differences are all zero")
            excluded.append(ids[i])
            continue
        ratios.append(np.mean(np.abs(y[i] - yhat[i])) / denom)
    if not ratios:
        raise MetricError("MASE undefined for every series")
    value = float(np.mean(ratios))
    return (value, excluded) if exclude_undefined else value


def crossing_rate(quantile_preds, levels: Sequence[float]) -> float:
    """Share of points where some higher level's forecast falls below a lower level's.

    ``quantile_preds`` has the level axis last.
    """
    p = np.asarray(quantile_preds, dtype=np.float64)
    if p.shape[-1] != len(levels):
        raise DimensionError(f"{p.shape[-1]} forecast columns for {len(levels)} levels")
    if len(levels) < 2:
        return 0.0
    order = np.argsort(levels)
    p = p[..., order]
    crossed = np.any(np.diff(p, axis=-1) < 0, axis=-1)
    return float(np.mean(crossed))
