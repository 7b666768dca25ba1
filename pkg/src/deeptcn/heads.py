"""Output heads and training losses for quantile and Gaussian forecasts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from . import tensor as T
from .errors import ConfigError, DimensionError, NumericError
from .layers import Dense, Module
from .tensor import Tensor

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def check_levels(levels: Sequence[float]) -> tuple[float, ...]:
    levels = tuple(float(q) for q in levels)
    if not levels:
        raise ConfigError("at least one quantile level is required")
    for q in levels:
        if not 0 < q < 1:
            raise ConfigError(f"quantile level {q} outside (0, 1)")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError(f"quantile levels must be strictly increasing, got {levels}")
    return levels


# --------------------------------------------------------------------------
# scalar losses


def quantile_loss(y: float, yhat: float, q: float) -> float:
    if not 0 < q < 1:
        raise ConfigError(f"quantile level {q} outside (0, 1)")
    return q * max(y - yhat, 0.0) + (1 - q) * max(yhat - y, 0.0)


def total_quantile_loss(y: float, yhats: Sequence[float], levels: Sequence[float]) -> float:
    return sum(quantile_loss(y, yh, q) for yh, q in zip(yhats, levels, strict=True))


def gaussian_nll(y: float, mu: float, sigma: float) -> float:
    if not sigma > 0:
        raise AssertionError(f"sigma must be positive, got {sigma}")
    return HALF_LOG_2PI + math.log(sigma) + (y - mu) ** 2 / (2 * sigma ** 2)


# --------------------------------------------------------------------------
# batch losses on tensors


def quantile_batch_loss(y: np.ndarray, preds: Tensor, levels: Sequence[float]) -> Tensor:
    """Pinball loss averaged over batch, horizon and levels.

    ``y`` is (batch, horizon); ``preds`` is (batch, horizon, m).
    """
    if preds.shape[:-1] != y.shape or preds.shape[-1] != len(levels):
        raise DimensionError(f"targets {y.shape} and predictions {preds.shape} disagree")
    dtype = preds.dtype
    target = Tensor(np.repeat(y[..., None], len(levels), axis=-1), dtype=dtype)
    q = Tensor(np.broadcast_to(np.asarray(levels), preds.shape), dtype=dtype)
    diff = T.sub(target, preds)
    loss = T.add(T.mul(q, T.relu(diff)), T.mul(T.sub(1.0, q), T.relu(T.mul(diff, -1.0))))
    return T.mean(loss)


def gaussian_batch_loss(y: np.ndarray, mu: Tensor, sigma: Tensor) -> Tensor:
    """Gaussian negative log-likelihood averaged over batch and horizon."""
    if mu.shape != y.shape or sigma.shape != y.shape:
        raise DimensionError(f"targets {y.shape} vs mu {mu.shape} / sigma {sigma.shape}")
    if np.any(sigma.data <= 0):
        raise AssertionError("sigma must be positive; the head should prevent this")
    resid = T.sub(Tensor(y, dtype=mu.dtype), mu)
    quad = T.div(T.square(resid), T.mul(T.square(sigma), 2.0))
    return T.add(T.mean(T.add(T.log(sigma), quad)), HALF_LOG_2PI)


# --------------------------------------------------------------------------
# inverse normal CDF

# rational approximation of the normal quantile (P. J. Acklam)
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _ppf_lower(p: float) -> float:
    """Quantile for p <= 0.5, refined by one Halley step."""
    if p < _P_LOW:
        r = math.sqrt(-2 * math.log(p))
        x = (((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]) / \
            ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1)
    else:
        s = p - 0.5
        r = s * s
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * s / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
    e = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


def norm_ppf(p: float) -> float:
    """Standard normal percent point function."""
    if not 0 < p < 1:
        raise ConfigError(f"level {p} outside (0, 1)")
    if p == 0.5:
        return 0.0
    return _ppf_lower(p) if p < 0.5 else -_ppf_lower(1 - p)


def gaussian_quantiles(mu, sigma, levels: Sequence[float]) -> np.ndarray:
    """``mu + sigma * ppf(q)`` for every level; broadcasts over array ``mu``/``sigma``.

    The level axis is appended last.
    """
    mu, sigma = np.asarray(mu, dtype=np.float64), np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ConfigError("sigma must be positive")
    z = np.array([norm_ppf(q) for q in levels])
    return mu[..., None] + sigma[..., None] * z


# --------------------------------------------------------------------------
# heads


class QuantileHead(Module):
    kind = "quantile"

    def __init__(self, latent: int, levels: Sequence[float], rng: np.random.Generator):
        super().__init__()
        self.levels = check_levels(levels)
        self.dense = self.add_child("dense", Dense(latent, len(self.levels), rng))

    def __call__(self, delta: Tensor) -> Tensor:
        out = self.dense(delta)
        if not np.all(np.isfinite(out.data)):
            raise NumericError("quantile head produced non-finite output")
        return out

    def loss(self, y: np.ndarray, out: Tensor) -> Tensor:
        return quantile_batch_loss(y, out, self.levels)

    def point(self, out: np.ndarray) -> np.ndarray:
        return out[..., int(np.argmin([abs(q - 0.5) for q in self.levels]))]


class GaussianHead(Module):
    """Emits (mu, sigma) per step; sigma goes through softplus."""

    kind = "gaussian"

    def __init__(self, latent: int, rng: np.random.Generator):
        super().__init__()
        self.dense = self.add_child("dense", Dense(latent, 2, rng))

    def __call__(self, delta: Tensor) -> tuple[Tensor, Tensor]:
        raw = self.dense(delta)
        mu = T.getitem(raw, (Ellipsis, 0))
        sigma = T.softplus(T.getitem(raw, (Ellipsis, 1)))
        if not np.all(sigma.data > 0):
            raise NumericError("gaussian head produced a non-positive sigma")
        return mu, sigma

    def loss(self, y: np.ndarray, out: tuple[Tensor, Tensor]) -> Tensor:
        return gaussian_batch_loss(y, *out)

    def point(self, out: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        return out[0]


# --------------------------------------------------------------------------
# forecast container


@dataclass
class ForecastResult:
    """Probabilistic forecast of one series from one origin, on the original scale."""

    series_id: str
    origin: pd.Timestamp
    timestamps: pd.DatetimeIndex
    kind: str
    scale: float
    levels: tuple[float, ...] = ()
    values: np.ndarray | None = None      # (horizon, m) quantile forecasts
    mu: np.ndarray | None = None
    sigma: np.ndarray | None = None
    padded: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        arrays = [a for a in (self.values, self.mu, self.sigma) if a is not None]
        if any(not np.all(np.isfinite(a)) for a in arrays):
            raise NumericError(f"forecast for {self.series_id} contains non-finite values")
        if self.kind == "gaussian" and np.any(self.sigma <= 0):
            raise NumericError(f"forecast for {self.series_id} has non-positive sigma")

    @property
    def horizon(self) -> int:
        return len(self.timestamps)

    def quantiles(self, levels: Sequence[float]) -> np.ndarray:
        """(horizon, len(levels)) matrix of quantile forecasts."""
        if self.kind == "gaussian":
            return gaussian_quantiles(self.mu, self.sigma, levels)
        cols = []
        for q in levels:
            matches = [j for j, lv in enumerate(self.levels) if math.isclose(lv, q)]
            if not matches:
                raise ConfigError(f"level {q} not among forecast levels {self.levels}")
            cols.append(matches[0])
        return self.values[:, cols]

    def point(self) -> np.ndarray:
        if self.kind == "gaussian":
            return self.mu
        j = int(np.argmin([abs(q - 0.5) for q in self.levels]))
        return self.values[:, j]

    def rows(self):
        """(step, label, value) triples for CSV dumps."""
        for step in range(self.horizon):
            if self.kind == "gaussian":
                yield step + 1, "mu", float(self.mu[step])
                yield step + 1, "sigma", float(self.sigma[step])
            else:
                for j, q in enumerate(self.levels):
                    yield step + 1, f"q{q:g}", float(self.values[step, j])
