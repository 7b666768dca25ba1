"""Seeded synthetic panels and raw files used by tests, demos and the bench."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .data import SeriesPanel


def _categorical(values) -> tuple[np.ndarray, list[str]]:
    vocab = sorted(set(values))
    lookup = {v: k for k, v in enumerate(vocab)}
    return np.array([lookup[v] for v in values], dtype=np.int64), vocab


def seasonal_panel(n_series: int = 50, length: int = 182, n_categories: int = 5, noise: float = 0.1,
                   seed: int = 0, start: str = "2020-01-06") -> SeriesPanel:
    """Daily series with a weekly cycle whose amplitude depends on the category.

    ``y = level * (1 + a_c * s(day_of_week)) + eps`` with
    ``eps ~ N(0, (noise * level * a_c)^2)``.
    """
    rng = np.random.default_rng(seed)
    amps = np.linspace(0.1, 0.5, n_categories)
    profile = np.sin(2 * np.pi * np.arange(7) / 7) + 0.5 * np.cos(4 * np.pi * np.arange(7) / 7)
    profile /= np.abs(profile).max()
    cats = rng.integers(0, n_categories, n_series)
    levels = rng.uniform(50, 150, n_series)
    dow = pd.date_range(start, periods=length, freq="D").dayofweek.to_numpy()
    amplitude = (levels * amps[cats])[:, None]
    values = levels[:, None] + amplitude * profile[dow][None, :]
    values = values + rng.normal(size=values.shape) * noise * amplitude
    codes, vocab = _categorical([f"cat{c}" for c in cats])
    panel = SeriesPanel([f"s{i:03d}" for i in range(n_series)], "daily", pd.Timestamp(start), values,
                        np.zeros(n_series), np.full(n_series, length), {"category": codes}, {"category": vocab})
    panel.noise_sd = (noise * amplitude[:, 0]).copy()
    return panel


def long_memory_panel(n_series: int = 32, days: int = 60, period: int = 4, noise: float = 0.05,
                      seed: int = 0, start: str = "2020-01-01") -> SeriesPanel:
    """Hourly series made of day-long constant blocks repeating every ``period`` days.

    The level of the next day equals the level ``period`` days back, so a
    24-step forecast from a day boundary needs inputs 72-95 steps old.
    """
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.2, 1.0, size=(n_series, period))
    blocks = np.tile(base, (1, -(-days // period)))[:, :days]
    values = np.repeat(blocks, 24, axis=1) + noise * rng.normal(size=(n_series, days * 24))
    values = 10 * values
    codes, vocab = _categorical(["all"] * n_series)
    return SeriesPanel([f"m{i:03d}" for i in range(n_series)], "hourly", pd.Timestamp(start), values,
                       np.zeros(n_series), np.full(n_series, days * 24), {"group": codes}, {"group": vocab})


def electricity_like(n_clients: int = 20, start: str = "2014-10-01", days: int = 92, seed: int = 0) -> pd.DataFrame:
    """15-minute consumption table shaped like the UCI load-diagram file.

    Index holds interval-end timestamps; each client has its own daily
    profile, a weekend effect, slow drift and multiplicative noise.
    """
    rng = np.random.default_rng(seed)
    stamps = pd.date_range(pd.Timestamp(start) + pd.Timedelta(minutes=15), periods=days * 96, freq="15min")
    t_start = stamps - pd.Timedelta(minutes=15)
    hour = t_start.hour.to_numpy() + t_start.minute.to_numpy() / 60
    weekend = (t_start.dayofweek.to_numpy() >= 5).astype(float)
    day = (t_start - t_start[0]).days.to_numpy()
    cols = {}
    for c in range(n_clients):
        base = rng.uniform(5, 200)
        peaks = rng.uniform(6, 21, size=2)
        widths = rng.uniform(1.5, 4, size=2)
        heights = rng.uniform(0.3, 1.5, size=2)
        shape = 0.5 + sum(h * np.exp(-0.5 * ((hour - p) / w) ** 2) for h, p, w in zip(heights, peaks, widths))
        week = 1 + rng.uniform(-0.35, 0.2) * weekend
        drift = 1 + 0.1 * np.sin(2 * np.pi * day / rng.uniform(20, 60) + rng.uniform(0, 6.3))
        daily_noise = np.repeat(np.exp(0.08 * rng.normal(size=days)), 96)
        load = base * shape * week * drift * daily_noise * np.exp(0.05 * rng.normal(size=len(stamps)))
        cols[f"MT_{c + 1:03d}"] = np.round(load / 4, 3)
    return pd.DataFrame(cols, index=stamps)


def write_electricity_raw(path, frame: pd.DataFrame) -> Path:
    """Write a frame in the load-diagram text layout (``;`` separated, decimal comma)."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write('"";' + ";".join(f'"{c}"' for c in frame.columns) + "\n")
        for ts, row in zip(frame.index, frame.to_numpy()):
            cells = ";".join(f"{v:g}".replace(".", ",") for v in row)
            fh.write(f'"{ts:%Y-%m-%d %H:%M:%S}";{cells}\n')
    return path


def write_traffic_raw(directory, n_lanes: int = 3, n_train: int = 4, n_test: int = 2, seed: int = 0) -> tuple[Path, np.ndarray]:
    """Shuffled-day occupancy files in the PEMS-SF layout.

    Returns the directory and the calendar-ordered (days, lanes, 144) array.
    """
    rng = np.random.default_rng(seed)
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n_days = n_train + n_test
    truth = np.round(rng.uniform(0, 0.3, size=(n_days, n_lanes, 144)), 4)
    perm = rng.permutation(n_days) + 1        # merged day j sits at calendar day perm[j]
    merged = truth[perm - 1]

    def day_line(day):
        return "[" + ";".join(" ".join(f"{v:g}" for v in lane) for lane in day) + "]\n"

    (d / "PEMS_train").write_text("".join(day_line(x) for x in merged[:n_train]))
    (d / "PEMS_test").write_text("".join(day_line(x) for x in merged[n_train:]))
    (d / "randperm").write_text("[" + " ".join(str(p) for p in perm) + "]\n")
    (d / "stations_list").write_text("[" + " ".join(str(400000 + k) for k in range(n_lanes)) + "]\n")
    return d, truth


def parts_like(n_series: int = 200, months: int = 51, seed: int = 0) -> pd.DataFrame:
    """Intermittent monthly demand, one column per part (wide layout)."""
    rng = np.random.default_rng(seed)
    rate = rng.gamma(0.6, 0.8, size=n_series)
    active = rng.uniform(size=(months, n_series)) < rng.uniform(0.05, 0.6, size=n_series)
    demand = np.where(active, rng.poisson(1 + rate * 3, size=(months, n_series)), 0)
    index = pd.period_range("1998-01", periods=months, freq="M").strftime("%Y-%m")
    return pd.DataFrame(demand, index=index, columns=[f"p{i:04d}" for i in range(n_series)])


def write_generic_csv(panel: SeriesPanel, directory) -> tuple[Path, Path]:
    """Write ``values.csv`` and ``static.csv`` in the generic ingestion layout."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, sid in enumerate(panel.ids):
        s, n = int(panel.starts[i]), int(panel.lengths[i])
        stamps = panel.timestamps(s, s + n)
        frame = {"series_id": sid, "timestamp": stamps.strftime("%Y-%m-%d %H:%M:%S"),
                 "value": [repr(float(v)) for v in panel.values[i, s:s + n]]}
        for k, name in enumerate(panel.covariate_names):
            frame[name] = [repr(float(v)) for v in panel.covariates[i, s:s + n, k]]
        rows.append(pd.DataFrame(frame))
    values = d / "values.csv"
    pd.concat(rows).to_csv(values, index=False)
    static = pd.DataFrame({"series_id": panel.ids,
                           **{col: [panel.vocab[col][c] for c in codes] for col, codes in panel.static.items()}})
    static_path = d / "static.csv"
    static.to_csv(static_path, index=False)
    return values, static_path
