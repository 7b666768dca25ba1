"""Seasonal-naive baseline, rolling-window evaluation and the depth sensitivity runner."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics as M
from .data import SeriesPanel, season_length
from .errors import ConfigError, DataError, MetricError
from .heads import ForecastResult
from .model import ModelSpec

# (number of windows, horizon) of the rolling protocols
PROTOCOLS = {
    "electricity": (7, 24),
    "traffic": (7, 24),
    "parts": (3, 4),
}


def seasonal_naive(panel: SeriesPanel, origin: int, horizon: int, m: int,
                   series_ids: Sequence[str] | None = None,
                   levels: Sequence[float] = (0.5, 0.9)) -> list[ForecastResult]:
    """Repeat the last observed season: yhat[t+w] = y[t + w - m*ceil(w/m)]."""
    if m < 1 or horizon < 1:
        raise ConfigError("season length and horizon must be positive")
    ids = list(panel.ids) if series_ids is None else list(series_ids)
    stamps = panel.timestamps(origin + 1, origin + 1 + horizon)
    out = []
    for sid in ids:
        i = panel.position(sid)
        s, e = panel.starts[i], panel.starts[i] + panel.lengths[i]
        if origin + 1 - s < m or origin >= e:
            raise DataError(f"series {sid!r}: needs {m} observed steps up to position {origin}")
        w = np.arange(1, horizon + 1)
        src = origin + w - m * np.ceil(w / m).astype(int)
        point = panel.values[i, src].astype(np.float64)
        out.append(ForecastResult(sid, panel.timestamp(origin), stamps, "quantile", 1.0, tuple(levels),
                                  np.repeat(point[:, None], len(levels), axis=1)))
    return out


class SeasonalNaive:
    """Baseline with the same ``forecast`` surface as a trained model."""

    def __init__(self, m: int, horizon: int, levels: Sequence[float] = (0.5, 0.9)):
        self.m, self.horizon, self.levels = m, horizon, tuple(levels)

    def forecast(self, panel, series_ids, origin) -> list[ForecastResult]:
        return seasonal_naive(panel, origin, self.horizon, self.m, series_ids, self.levels)


# --------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    model: str
    dataset: str
    protocol: str
    metrics: dict
    per_window: list[dict] = field(default_factory=list)
    excluded_series: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"model": self.model, "dataset": self.dataset, "protocol": self.protocol,
                "metrics": self.metrics, "per_window": self.per_window,
                "excluded_series": self.excluded_series}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self) -> str:
        keys = [k for k in self.metrics if isinstance(self.metrics[k], (int, float))]
        width = max(len(k) for k in keys)
        lines = [f"model={self.model} dataset={self.dataset} protocol={self.protocol}"]
        lines += [f"  {k:<{width}}  {self.metrics[k]:.6g}" for k in keys]
        if self.excluded_series:
            lines.append(f"  MASE excluded {len(self.excluded_series)} series")
        return "\n".join(lines)

    def save(self, path) -> tuple[Path, Path]:
        """Write ``<path>.json`` and ``<path>.txt``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        js, txt = path.with_suffix(".json"), path.with_suffix(".txt")
        js.write_text(self.to_json())
        txt.write_text(self.table() + "\n")
        return js, txt


def write_forecast_csv(results: Sequence[ForecastResult], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "origin", "step", "level_or_param", "value"])
        for r in results:
            origin = r.origin.isoformat()
            for step, label, value in r.rows():
                w.writerow([r.series_id, origin, step, label, repr(value)])
    return path


def level_key(q: float) -> str:
    return f"QL{round(q * 100):d}"


def score(actuals: np.ndarray, quantiles: np.ndarray, levels: Sequence[float], insample: Sequence,
          m: int, series_ids: Sequence[str]) -> tuple[dict, list[str]]:
    """Metrics on a pool; ``actuals`` is (series, points), ``quantiles`` adds a level axis."""
    out = {level_key(q): M.ql(q, actuals, quantiles[..., j]) for j, q in enumerate(levels)}
    point = quantiles[..., _median_column(levels)]
    out["SMAPE"] = M.smape(actuals, point)
    out["NRMSE"] = M.nrmse(actuals, point)
    try:
        out["MASE"], excluded = M.mase(actuals, point, insample, m, series_ids, exclude_undefined=True)
    except MetricError:
        out["MASE"], excluded = float("nan"), list(series_ids)
    out["crossing_rate"] = M.crossing_rate(quantiles, levels)
    return out, excluded


def _median_column(levels: Sequence[float]) -> int:
    return int(np.argmin([abs(q - 0.5) for q in levels]))


def rolling_origins(panel: SeriesPanel, n_windows: int, horizon: int) -> list[int]:
    """Forecast origins (last observed position) of ``n_windows`` back-to-back windows at the end."""
    if n_windows < 1 or horizon < 1:
        raise ConfigError("number of windows and horizon must be positive")
    first = panel.n_steps - n_windows * horizon
    if first < 1:
        raise ConfigError(f"{n_windows} windows of {horizon} steps overrun a panel of {panel.n_steps} steps")
    return [first - 1 + k * horizon for k in range(n_windows)]


def rolling_eval(model, panel: SeriesPanel, n_windows: int, horizon: int, levels: Sequence[float] = (0.5, 0.9),
                 m: int | None = None, pooled: bool = True, model_name: str = "model", dataset: str = "panel",
                 protocol: str = "rolling", series_ids: Sequence[str] | None = None) -> EvalReport:
    """Forecast each trailing window with one fixed model and score the pooled points.

    A model with a longer horizon is scored on its first ``horizon`` steps.
    ``pooled=False`` averages per-window metrics instead of pooling.
    """
    started = time.perf_counter()
    if getattr(model, "horizon", horizon) < horizon:
        raise ConfigError(f"model horizon {model.horizon} is shorter than protocol horizon {horizon}")
    levels = tuple(levels)
    m = m or season_length(panel.granularity)
    ids = list(panel.ids) if series_ids is None else list(series_ids)
    origins = rolling_origins(panel, n_windows, horizon)
    rows = [panel.position(s) for s in ids]
    first = origins[0] + 1
    for i in rows:
        if panel.starts[i] > first or panel.ends()[i] < panel.n_steps:
            raise DataError(f"series {panel.ids[i]!r} is not observed over the whole evaluation range")
    actual = np.stack([panel.values[i, first:] for i in rows]).astype(np.float64)
    actual = actual.reshape(len(rows), n_windows, horizon)
    preds = np.zeros(actual.shape + (len(levels),))
    for k, origin in enumerate(origins):
        for b, res in enumerate(model.forecast(panel, ids, origin)):
            preds[b, k] = res.quantiles(levels)[:horizon]
    insample = [panel.values[i, panel.starts[i]:first] for i in rows]

    per_window = []
    for k, origin in enumerate(origins):
        mets, _ = score(actual[:, k], preds[:, k], levels, insample, m, ids)
        per_window.append({"origin": panel.timestamp(origin).isoformat(), **mets})
    if pooled:
        metrics, excluded = score(actual.reshape(len(rows), -1), preds.reshape(len(rows), -1, len(levels)),
                                  levels, insample, m, ids)
    else:
        _, excluded = score(actual.reshape(len(rows), -1), preds.reshape(len(rows), -1, len(levels)),
                            levels, insample, m, ids)
        metrics = {k: float(np.mean([w[k] for w in per_window])) for k in per_window[0] if k != "origin"}
    metrics.update({"aggregation": "pooled" if pooled else "per-window mean", "n_series": len(rows),
                    "n_windows": n_windows, "horizon": horizon, "n_points": int(actual.size),
                    "season": m, "mase_excluded": len(excluded),
                    "runtime_seconds": time.perf_counter() - started})
    return EvalReport(model_name, dataset, protocol, metrics, per_window, excluded)


def protocol_eval(model, panel: SeriesPanel, protocol: str, **kw) -> EvalReport:
    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r}; choose from {sorted(PROTOCOLS)}")
    n, h = PROTOCOLS[protocol]
    return rolling_eval(model, panel, n, h, protocol=protocol, **kw)


# --------------------------------------------------------------------------
# sensitivity


@dataclass
class SensitivityCurve:
    dilations: tuple[int, ...]
    l1: list[float]
    receptive_field: int
    runtime: float

    @property
    def label(self) -> str:
        return "-".join(str(d) for d in self.dilations)

    @property
    def final(self) -> float:
        return self.l1[-1]


def sensitivity_run(panel: SeriesPanel, specs: Sequence[ModelSpec], cfg, train_end: int | None = None,
                    progress=None) -> list[SensitivityCurve]:
    """Train each spec with the same seed and config; collect per-epoch training L1."""
    from .layers import receptive_field
    from .train import train

    if not specs:
        raise ConfigError("no specs to compare")
    ref = specs[0].to_dict()
    ref.pop("dilations")
    for s in specs[1:]:
        d = s.to_dict()
        d.pop("dilations")
        if d != ref:
            raise ConfigError("sensitivity specs may differ only in their dilation lists")
    curves = []
    for spec in specs:
        res = train(panel, spec, cfg, train_end, progress=progress)
        curves.append(SensitivityCurve(spec.dilations, [r["train_l1"] for r in res.history],
                                       receptive_field(spec.dilations, spec.kernel_size), res.runtime))
    return curves


def write_curve_csv(curve: SensitivityCurve, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_l1"])
        for e, v in enumerate(curve.l1, 1):
            w.writerow([e, repr(v)])
    return path
