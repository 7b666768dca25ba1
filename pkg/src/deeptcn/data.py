"""Series panels, covariate featurization, scaling and window extraction."""
from __future__ import annotations

import datetime as dt
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError
from .layers import default_embedding_dim

log = logging.getLogger(__name__)

FREQ = {"hourly": "h", "daily": "D", "monthly": "MS"}
SEASON = {"hourly": 24, "daily": 7, "monthly": 12}
CALENDAR = {
    "hourly": ("hour_of_day", "day_of_week", "day_of_month"),
    "daily": ("day_of_week", "day_of_year"),
    "monthly": ("month_of_year",),
}
PANEL_FORMAT = 1


@dataclass
class SeriesPanel:
    """N series on a shared time axis.

    ``values`` is (N, T) float32 with NaN outside each series' span
    ``[starts[i], starts[i] + lengths[i])``; ``covariates`` is (N, T, R).
    """

    ids: list[str]
    granularity: str
    start: pd.Timestamp
    values: np.ndarray
    starts: np.ndarray
    lengths: np.ndarray
    static: dict[str, np.ndarray] = field(default_factory=dict)
    vocab: dict[str, list[str]] = field(default_factory=dict)
    covariates: np.ndarray | None = None
    covariate_names: list[str] = field(default_factory=list)
    holidays: frozenset = frozenset()

    def __post_init__(self):
        if self.granularity not in FREQ:
            raise DataError(f"unknown granularity {self.granularity!r}")
        self.start = pd.Timestamp(self.start)
        self.values = np.asarray(self.values, dtype=np.float32)
        self.starts = np.asarray(self.starts, dtype=np.int64)
        self.lengths = np.asarray(self.lengths, dtype=np.int64)
        if self.covariates is None:
            self.covariates = np.zeros(self.values.shape + (0,), dtype=np.float32)
        self.covariates = np.asarray(self.covariates, dtype=np.float32)
        self._index = {sid: i for i, sid in enumerate(self.ids)}

    @property
    def n_series(self) -> int:
        return len(self.ids)

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    @property
    def freq(self) -> str:
        return FREQ[self.granularity]

    def position(self, series_id: str) -> int:
        try:
            return self._index[series_id]
        except KeyError:
            raise DataError(f"unknown series id {series_id!r}") from None

    def timestamp(self, pos: int) -> pd.Timestamp:
        return self.start + pd.tseries.frequencies.to_offset(self.freq) * int(pos)

    def timestamps(self, lo: int, hi: int) -> pd.DatetimeIndex:
        return pd.date_range(self.timestamp(lo), periods=hi - lo, freq=self.freq)

    def to_position(self, ts) -> int:
        ts = pd.Timestamp(ts)
        if self.granularity == "monthly":
            return (ts.year - self.start.year) * 12 + ts.month - self.start.month
        delta = (ts - self.start) / pd.Timedelta(1, unit=self.freq)
        if delta != int(delta):
            raise DataError(f"timestamp {ts} is not on the {self.granularity} grid")
        return int(delta)

    def series(self, i: int) -> np.ndarray:
        s = self.starts[i]
        return self.values[i, s:s + self.lengths[i]]

    def ends(self) -> np.ndarray:
        return self.starts + self.lengths

    def validate(self) -> None:
        """Enforce no missing values inside spans and consistent static columns."""
        for i, sid in enumerate(self.ids):
            span = self.series(i)
            bad = np.flatnonzero(~np.isfinite(span))
            if bad.size:
                raise DataError(f"series {sid!r}: missing value at {self.timestamp(self.starts[i] + bad[0])}")
        for col, codes in self.static.items():
            if len(codes) != self.n_series:
                raise DataError(f"static column {col!r} has {len(codes)} entries for {self.n_series} series")
            if codes.size and (codes.min() < 0 or codes.max() >= len(self.vocab[col])):
                raise DataError(f"static column {col!r} has codes outside its vocabulary")

    def truncate(self, stop: int) -> "SeriesPanel":
        """Copy holding only positions before ``stop``."""
        ends = np.minimum(self.ends(), stop)
        return replace(self, values=self.values[:, :stop].copy(), covariates=self.covariates[:, :stop].copy(),
                       lengths=np.maximum(ends - self.starts, 0))

    def subset(self, ids: Sequence[str]) -> "SeriesPanel":
        rows = [self.position(s) for s in ids]
        return replace(self, ids=list(ids), values=self.values[rows].copy(), starts=self.starts[rows],
                       lengths=self.lengths[rows], covariates=self.covariates[rows].copy(),
                       static={k: v[rows] for k, v in self.static.items()})


# --------------------------------------------------------------------------
# CSV ingestion


def _numeric(df: pd.DataFrame, col: str, path) -> np.ndarray:
    nums = pd.to_numeric(df[col], errors="coerce")
    bad = np.flatnonzero(nums.isna().to_numpy())
    if bad.size:
        row = bad[0]
        raise DataError(f"{path}:{row + 2}: non-numeric {col} {df[col].iloc[row]!r}")
    return nums.to_numpy(dtype=np.float64)


def _infer_granularity(groups: dict[str, pd.DatetimeIndex]) -> str:
    diffs = [np.diff(ts.asi8) for ts in groups.values() if len(ts) > 1]
    diffs = np.concatenate(diffs) if diffs else np.array([], dtype=np.int64)
    diffs = diffs[diffs > 0]
    if not diffs.size:
        raise DataError("cannot infer granularity from single-point series; pass it explicitly")
    step = pd.Timedelta(int(diffs.min()), unit="ns")
    if step == pd.Timedelta(hours=1):
        return "hourly"
    if step == pd.Timedelta(days=1):
        return "daily"
    first_days = all((ts.day == 1).all() for ts in groups.values())
    if pd.Timedelta(days=28) <= step <= pd.Timedelta(days=31) and first_days:
        return "monthly"
    raise DataError(f"cannot infer granularity from step {step}")


def load_panel(values_file, static_file, calendar_file=None, granularity: str | None = None) -> SeriesPanel:
    """Read the values/static/calendar CSV contracts into a validated panel."""
    df = pd.read_csv(values_file, dtype=str, keep_default_na=False)
    if list(df.columns[:3]) != ["series_id", "timestamp", "value"]:
        raise DataError(f"{values_file}: header must start with series_id,timestamp,value")
    cov_names = list(df.columns[3:])
    value = _numeric(df, "value", values_file)
    covs = np.stack([_numeric(df, c, values_file) for c in cov_names], axis=1) if cov_names \
        else np.zeros((len(df), 0))
    stamps = pd.to_datetime(df["timestamp"], format="ISO8601", errors="coerce")
    bad = np.flatnonzero(stamps.isna().to_numpy())
    if bad.size:
        raise DataError(f"{values_file}:{bad[0] + 2}: unparseable timestamp {df['timestamp'].iloc[bad[0]]!r}")

    order = list(dict.fromkeys(df["series_id"]))
    rows_by_id = {sid: np.flatnonzero((df["series_id"] == sid).to_numpy()) for sid in order}
    sorted_rows = {}
    groups = {}
    for sid, rows in rows_by_id.items():
        ts = pd.DatetimeIndex(stamps.iloc[rows])
        perm = np.argsort(ts.asi8, kind="stable")
        sorted_rows[sid] = rows[perm]
        groups[sid] = ts[perm]
    granularity = granularity or _infer_granularity(groups)
    if granularity not in FREQ:
        raise DataError(f"unknown granularity {granularity!r}")
    freq = FREQ[granularity]

    for sid, ts in groups.items():
        if granularity == "monthly":
            ts = ts.to_period("M").to_timestamp()
            groups[sid] = ts
        expected = pd.date_range(ts[0], periods=len(ts), freq=freq)
        mismatch = np.flatnonzero(expected.asi8 != ts.asi8)
        if mismatch.size:
            k = mismatch[0]
            what = "duplicate timestamp" if ts[k] == ts[k - 1] else "gap"
            raise DataError(f"series {sid!r}: {what} at {expected[k]} (found {ts[k]})")

    start = min(ts[0] for ts in groups.values())
    probe = SeriesPanel(order, granularity, start, np.zeros((len(order), 0)), np.zeros(len(order)),
                        np.zeros(len(order)))
    starts = np.array([probe.to_position(groups[sid][0]) for sid in order])
    lengths = np.array([len(groups[sid]) for sid in order])
    n_steps = int((starts + lengths).max())
    values = np.full((len(order), n_steps), np.nan, dtype=np.float32)
    cov = np.zeros((len(order), n_steps, len(cov_names)), dtype=np.float32)
    for i, sid in enumerate(order):
        rows = sorted_rows[sid]
        values[i, starts[i]:starts[i] + lengths[i]] = value[rows]
        cov[i, starts[i]:starts[i] + lengths[i]] = covs[rows]

    static, vocab = _load_static(static_file, order)
    holidays = load_calendar(calendar_file) if calendar_file else frozenset()
    panel = SeriesPanel(order, granularity, start, values, starts, lengths, static, vocab, cov, cov_names, holidays)
    panel.validate()
    return panel


def _load_static(path, ids: list[str]) -> tuple[dict, dict]:
    sdf = pd.read_csv(path, dtype=str, keep_default_na=False)
    if sdf.columns[0] != "series_id":
        raise DataError(f"{path}: header must start with series_id")
    dup = sdf["series_id"][sdf["series_id"].duplicated()]
    if len(dup):
        raise DataError(f"{path}: duplicate series id {dup.iloc[0]!r}")
    known = set(ids)
    listed = set(sdf["series_id"])
    if listed - known:
        raise DataError(f"{path}: series {sorted(listed - known)[0]!r} has no values")
    if known - listed:
        raise DataError(f"series {sorted(known - listed)[0]!r} missing from {path}")
    sdf = sdf.set_index("series_id").loc[ids]
    static, vocab = {}, {}
    for col in sdf.columns:
        vocab[col] = sorted(set(sdf[col]))
        lookup = {v: k for k, v in enumerate(vocab[col])}
        static[col] = np.array([lookup[v] for v in sdf[col]], dtype=np.int64)
    return static, vocab


def load_calendar(path) -> frozenset:
    dates = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            try:
                dates.add(dt.date.fromisoformat(text))
            except ValueError:
                raise DataError(f"{path}:{lineno}: not an ISO date: {text!r}") from None
    return frozenset(dates)


# --------------------------------------------------------------------------
# persistence


def save_panel(panel: SeriesPanel, out_dir) -> Path:
    """Write ``panel.json`` + ``values.bin`` (series-major float32 little-endian).

    Each series contributes ``length x (1 + n_covariates)`` floats: value
    followed by its covariates, one time step after another.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": PANEL_FORMAT,
        "granularity": panel.granularity,
        "start": panel.start.isoformat(),
        "n_steps": panel.n_steps,
        "ids": panel.ids,
        "starts": panel.starts.tolist(),
        "lengths": panel.lengths.tolist(),
        "covariates": panel.covariate_names,
        "static": {k: v.tolist() for k, v in panel.static.items()},
        "vocab": panel.vocab,
        "holidays": sorted(d.isoformat() for d in panel.holidays),
        "layout": "series-major; per series length x (1 + n_covariates) float32 little-endian",
    }
    (out / "panel.json").write_text(json.dumps(meta, indent=1))
    with open(out / "values.bin", "wb") as fh:
        for i in range(panel.n_series):
            s, n = panel.starts[i], panel.lengths[i]
            block = np.concatenate([panel.values[i, s:s + n, None], panel.covariates[i, s:s + n]], axis=1)
            fh.write(block.astype("<f4").tobytes())
    return out


def load_prepared(path) -> SeriesPanel:
    path = Path(path)
    try:
        meta = json.loads((path / "panel.json").read_text())
    except FileNotFoundError:
        raise DataError(f"{path}: no panel.json") from None
    if meta.get("format") != PANEL_FORMAT:
        raise DataError(f"{path}: unsupported panel format {meta.get('format')!r}")
    raw = np.fromfile(path / "values.bin", dtype="<f4")
    n_cov = len(meta["covariates"])
    starts, lengths = np.array(meta["starts"]), np.array(meta["lengths"])
    if raw.size != int(lengths.sum()) * (1 + n_cov):
        raise DataError(f"{path}: values.bin holds {raw.size} floats, expected {int(lengths.sum()) * (1 + n_cov)}")
    n = len(meta["ids"])
    values = np.full((n, meta["n_steps"]), np.nan, dtype=np.float32)
    cov = np.zeros((n, meta["n_steps"], n_cov), dtype=np.float32)
    offset = 0
    for i in range(n):
        s, k = starts[i], lengths[i]
        block = raw[offset:offset + k * (1 + n_cov)].reshape(k, 1 + n_cov)
        values[i, s:s + k] = block[:, 0]
        cov[i, s:s + k] = block[:, 1:]
        offset += k * (1 + n_cov)
    return SeriesPanel(
        meta["ids"], meta["granularity"], pd.Timestamp(meta["start"]), values, starts, lengths,
        {k: np.array(v, dtype=np.int64) for k, v in meta["static"].items()}, meta["vocab"], cov,
        meta["covariates"], frozenset(dt.date.fromisoformat(d) for d in meta["holidays"]))


# --------------------------------------------------------------------------
# covariates


@dataclass(frozen=True)
class CategoricalFeature:
    name: str
    vocab_size: int
    dim: int


@dataclass(frozen=True)
class CovariateSchema:
    """Layout of the per-step covariate vector.

    Real part: sin/cos pair per calendar feature, optional holiday flag, then
    passthrough real covariates. Categorical features are embedded by the
    model and appended after the real part.
    """

    granularity: str
    calendar: tuple[str, ...]
    holiday: bool = False
    categorical: tuple[CategoricalFeature, ...] = ()
    real: tuple[str, ...] = ()

    @property
    def real_width(self) -> int:
        return 2 * len(self.calendar) + int(self.holiday) + len(self.real)

    @property
    def width(self) -> int:
        return self.real_width + sum(c.dim for c in self.categorical)

    @classmethod
    def from_panel(cls, panel: SeriesPanel, calendar: Sequence[str] | None = None,
                   embed: Sequence[str] | None = None, embed_dims: dict[str, int] | None = None,
                   holiday: bool | None = None) -> "CovariateSchema":
        calendar = CALENDAR[panel.granularity] if calendar is None else tuple(calendar)
        for name in calendar:
            if name not in _CALENDAR_FEATURES:
                raise ConfigError(f"unknown calendar feature {name!r}")
        embed = list(panel.static) if embed is None else list(embed)
        embed_dims = embed_dims or {}
        cats = []
        for name in embed:
            if name not in panel.vocab:
                raise ConfigError(f"no static column {name!r} in panel")
            v = len(panel.vocab[name])
            cats.append(CategoricalFeature(name, v, int(embed_dims.get(name, default_embedding_dim(v)))))
        holiday = bool(panel.holidays) if holiday is None else holiday
        return cls(panel.granularity, tuple(calendar), holiday, tuple(cats), tuple(panel.covariate_names))

    def to_dict(self) -> dict:
        return {
            "granularity": self.granularity,
            "calendar": list(self.calendar),
            "holiday": self.holiday,
            "categorical": [[c.name, c.vocab_size, c.dim] for c in self.categorical],
            "real": list(self.real),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CovariateSchema":
        return cls(d["granularity"], tuple(d["calendar"]), bool(d["holiday"]),
                   tuple(CategoricalFeature(n, int(v), int(e)) for n, v, e in d["categorical"]),
                   tuple(d["real"]))

    def check_panel(self, panel: SeriesPanel) -> None:
        if panel.granularity != self.granularity:
            raise ConfigError(f"schema is {self.granularity}, panel is {panel.granularity}")
        if tuple(panel.covariate_names) != self.real:
            raise ConfigError(f"schema covariates {self.real} != panel covariates {tuple(panel.covariate_names)}")
        for c in self.categorical:
            if c.name not in panel.vocab:
                raise ConfigError(f"panel lacks static column {c.name!r}")
            if len(panel.vocab[c.name]) != c.vocab_size:
                raise ConfigError(f"static column {c.name!r} has {len(panel.vocab[c.name])} values, "
                                  f"schema expects {c.vocab_size}")


def _cyclic(phase: np.ndarray) -> np.ndarray:
    angle = 2 * np.pi * phase
    return np.stack([np.sin(angle), np.cos(angle)], axis=-1)


_CALENDAR_FEATURES = {
    "hour_of_day": lambda ts: ts.hour / 24.0,
    "day_of_week": lambda ts: ts.dayofweek / 7.0,
    "day_of_month": lambda ts: (ts.day - 1) / ts.days_in_month,
    "day_of_year": lambda ts: (ts.dayofyear - 1) / np.where(ts.is_leap_year, 366.0, 365.0),
    "month_of_year": lambda ts: (ts.month - 1) / 12.0,
}


def calendar_block(panel: SeriesPanel, schema: CovariateSchema, lo: int, hi: int) -> np.ndarray:
    """Calendar and holiday columns for global positions ``[lo, hi)``."""
    ts = panel.timestamps(lo, hi)
    cols = [_cyclic(np.asarray(_CALENDAR_FEATURES[name](ts), dtype=np.float64)) for name in schema.calendar]
    if schema.holiday:
        if panel.granularity == "monthly":
            months = {(d.year, d.month) for d in panel.holidays}
            flag = np.array([(t.year, t.month) in months for t in ts], dtype=np.float64)
        else:
            flag = np.array([t.date() in panel.holidays for t in ts], dtype=np.float64)
        cols.append(flag[:, None])
    if not cols:
        return np.zeros((hi - lo, 0), dtype=np.float32)
    return np.concatenate(cols, axis=1).astype(np.float32)


@dataclass
class Features:
    real: np.ndarray          # (steps, real_width)
    categorical: np.ndarray   # (n_categorical,) codes


def featurize(panel: SeriesPanel, schema: CovariateSchema, series: str | int, t_range: tuple[int, int]) -> Features:
    """Covariates of one series over global positions ``[lo, hi)``.

    Calendar features extend anywhere; real covariates are zero before the
    series starts and unavailable after its last observation.
    """
    i = series if isinstance(series, (int, np.integer)) else panel.position(series)
    lo, hi = t_range
    cal = calendar_block(panel, schema, lo, hi)
    real = _real_covariates(panel, schema, i, lo, hi)
    cats = np.array([panel.static[c.name][i] for c in schema.categorical], dtype=np.int64)
    return Features(np.concatenate([cal, real], axis=1), cats)


def _real_covariates(panel: SeriesPanel, schema: CovariateSchema, i: int, lo: int, hi: int) -> np.ndarray:
    out = np.zeros((hi - lo, len(schema.real)), dtype=np.float32)
    if not schema.real:
        return out
    s, e = panel.starts[i], panel.starts[i] + panel.lengths[i]
    if hi > e:
        raise DataError(f"series {panel.ids[i]!r}: covariates unknown after {panel.timestamp(e - 1)}")
    a = max(lo, s)
    if a < hi:
        out[a - lo:] = panel.covariates[i, a:hi]
    return out


# --------------------------------------------------------------------------
# scaling and windows


def scale_series(values) -> tuple[np.ndarray, float]:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DataError("cannot scale an empty range")
    scale = 1.0 + float(np.mean(np.abs(values)))
    return values / scale, scale


def unscale(scaled, scale: float) -> np.ndarray:
    return np.asarray(scaled, dtype=np.float64) * scale


def series_scales(panel: SeriesPanel, stop: int | None = None) -> np.ndarray:
    """Scale of every series over its observations before ``stop`` (1 when none)."""
    stop = panel.n_steps if stop is None else stop
    out = np.ones(panel.n_series)
    for i in range(panel.n_series):
        s = panel.starts[i]
        e = min(s + panel.lengths[i], stop)
        if e > s:
            out[i] = scale_series(panel.values[i, s:e])[1]
    return out


@dataclass
class TrainingWindow:
    series: int
    series_id: str
    target_start: int
    y_in: np.ndarray        # (T_in,) scaled, zero padded
    x_in: np.ndarray        # (T_in, real_width)
    x_future: np.ndarray    # (horizon, real_width)
    cats: np.ndarray        # (n_categorical,)
    target: np.ndarray      # (horizon,) scaled
    scale: float
    padded: int = 0


class WindowList(list):
    """List of windows that also remembers how many series were skipped."""

    skipped: int = 0


def window_inputs(panel: SeriesPanel, schema: CovariateSchema, i: int, target_start: int,
                  input_length: int, horizon: int, scale: float, calendar=None, cal_lo: int = 0):
    """Scaled inputs and covariates for one window whose first target step is ``target_start``.

    Reads values only at positions before ``target_start``.
    """
    lo = target_start - input_length
    s = panel.starts[i]
    a = max(lo, s)
    y_in = np.zeros(input_length, dtype=np.float32)
    if a < target_start:
        y_in[a - lo:] = panel.values[i, a:target_start] / scale
    if calendar is None:
        calendar, cal_lo = calendar_block(panel, schema, lo, target_start + horizon), lo
    cal_in = calendar[lo - cal_lo: target_start - cal_lo]
    cal_out = calendar[target_start - cal_lo: target_start + horizon - cal_lo]
    real_in = _real_covariates(panel, schema, i, lo, target_start)
    real_out = _real_covariates(panel, schema, i, target_start, target_start + horizon)
    cats = np.array([panel.static[c.name][i] for c in schema.categorical], dtype=np.int64)
    padded = int(min(max(s - lo, 0), input_length))
    x_in = np.concatenate([cal_in, real_in], axis=1)
    x_future = np.concatenate([cal_out, real_out], axis=1)
    return y_in, x_in, x_future, cats, padded


def make_windows(panel: SeriesPanel, schema: CovariateSchema, input_length: int, horizon: int,
                 stride: int = 1, split: tuple[int, int] | None = None,
                 scales: np.ndarray | None = None) -> WindowList:
    """Sliding windows whose targets lie inside ``split`` (global positions, half-open).

    Windows are aligned to the end of each series' usable range and step
    back by ``stride``. Series whose history is shorter than ``input_length``
    contribute one left-padded window; series with fewer than ``horizon + 1``
    usable steps are skipped.
    """
    if input_length < 1 or horizon < 1 or stride < 1:
        raise ConfigError("input length, horizon and stride must be positive")
    lo, hi = (0, panel.n_steps) if split is None else split
    hi = min(hi, panel.n_steps)
    if scales is None:
        scales = series_scales(panel, hi)
    out = WindowList()
    plans = []
    for i in range(panel.n_series):
        s, e = panel.starts[i], min(panel.starts[i] + panel.lengths[i], hi)
        last = e - horizon
        history = min(input_length, last - s)
        first = max(s + history, lo)
        if history < 1 or last < first:
            out.skipped += 1
            continue
        starts = list(range(last, first - 1, -stride))[::-1]
        plans.append((i, starts))
    if out.skipped:
        log.warning("make_windows: skipped %d series without enough history for horizon %d", out.skipped, horizon)
    if not plans:
        return out
    cal_lo = min(st[0] for _, st in plans) - input_length
    cal_hi = max(st[-1] for _, st in plans) + horizon
    calendar = calendar_block(panel, schema, cal_lo, cal_hi)
    for i, starts in plans:
        scale = float(scales[i])
        for ts in starts:
            y_in, x_in, x_future, cats, padded = window_inputs(
                panel, schema, i, ts, input_length, horizon, scale, calendar, cal_lo)
            target = (panel.values[i, ts:ts + horizon] / scale).astype(np.float32)
            out.append(TrainingWindow(i, panel.ids[i], ts, y_in, x_in, x_future, cats, target, scale, padded))
    return out


@dataclass
class Batch:
    y_in: np.ndarray
    x_in: np.ndarray
    x_future: np.ndarray
    cats: np.ndarray
    target: np.ndarray | None = None
    scale: np.ndarray | None = None

    def __len__(self) -> int:
        return self.y_in.shape[0]

    def take(self, idx) -> "Batch":
        return Batch(self.y_in[idx], self.x_in[idx], self.x_future[idx], self.cats[idx],
                     None if self.target is None else self.target[idx],
                     None if self.scale is None else self.scale[idx])


def stack_windows(windows: Sequence[TrainingWindow]) -> Batch:
    if not windows:
        raise ConfigError("no windows to stack")
    return Batch(
        np.stack([w.y_in for w in windows]),
        np.stack([w.x_in for w in windows]),
        np.stack([w.x_future for w in windows]),
        np.stack([w.cats for w in windows]).reshape(len(windows), -1),
        np.stack([w.target for w in windows]),
        np.array([w.scale for w in windows]),
    )


def season_length(granularity: str) -> int:
    return SEASON[granularity]

