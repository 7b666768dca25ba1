"""Acceptance criteria 1-10. Each test records one pass/fail line (see conftest)."""
import time

import numpy as np
import pytest

from deeptcn import bench, datasets, synthetic
from deeptcn import metrics as M
from deeptcn.causality import run_causality_suite
from deeptcn.data import CovariateSchema
from deeptcn.gradcheck import CASES, TOLERANCE, run_suite
from deeptcn.model import ModelSpec
from deeptcn.train import (
    TrainConfig,
    checkpoint_bytes,
    load_checkpoint,
    save_checkpoint,
    train,
)

DEEP_DILATIONS = (1, 2, 4, 8, 16, 20, 32)

# criteria 5 and 6: 50 daily series, weekly cycle, noise sd 0.1 x amplitude
SYNTH_LENGTH = 182
SYNTH_CFG = dict(batch_size=128, learning_rate=3e-3, epochs=200, patience=None, windows_per_epoch=3200)

# criterion 7: 20 clients, 92 days, electricity preset lengths and dilations; day of month
# is left out of the calendar since 92 days cannot teach it
ELEC_CALENDAR = ("hour_of_day", "day_of_week")
ELEC_CFG = dict(batch_size=128, learning_rate=1e-2, epochs=60, windows_per_epoch=4096)
ELEC_HIDDEN = 64

# criterion 10: 5 vs 6 dilation levels on the long-memory panel
MEMORY_CFG = dict(batch_size=64, learning_rate=1e-2, epochs=40, windows_per_epoch=1024, patience=None, stride=24)


def test_01_gradient_oracle(report):
    t0 = time.perf_counter()
    results = run_suite(20, seed=0)
    seconds = time.perf_counter() - t0
    worst = max(results, key=lambda r: r.max_rel_err)
    ok = all(r.passed and r.configs >= 20 for r in results) and seconds < 120 and len(results) == len(CASES)
    report(1, ok, f"{len(results)} ops x 20 configs, max rel err {worst.max_rel_err:.2e} ({worst.op}) "
                  f"< {TOLERANCE:g}, {seconds:.1f}s < 120s")
    assert ok, [(r.op, r.max_rel_err) for r in results if not r.passed]


def test_02_causality_and_receptive_field(report):
    t0 = time.perf_counter()
    results = run_causality_suite()
    seconds = time.perf_counter() - t0
    ok = all(r.passed for r in results) and seconds < 60
    rf = ", ".join(f"{len(r.dilations)} levels rf {r.receptive_field}" for r in results)
    report(2, ok, f"bitwise, {rf}, {seconds:.1f}s < 60s")
    assert ok, results


def test_03_metric_fixtures(report):
    y, yhat = [10.0, 20.0, 30.0, 40.0], [12.0, 18.0, 33.0, 36.0]
    checks = {
        "QL50": (M.ql(0.5, y, yhat), 0.5 * 11 / 100),
        "QL90": (M.ql(0.9, y, yhat), (0.9 * 6 + 0.1 * 5) / 100),
        "QL50 single": (M.ql(0.5, [10.0], [6.0]), 0.2),
        "SMAPE": (M.smape(y, yhat), (4 / 22 + 4 / 38 + 6 / 63 + 8 / 76) / 4),
        "SMAPE single": (M.smape([10.0], [30.0]), 1.0),
        "NRMSE": (M.nrmse(y, yhat), np.sqrt(33 / 4) / 25),
        "MASE": (M.mase([[10.0, 20.0], [1.0, 2.0]], [[12.0, 18.0], [2.0, 2.0]],
                        [[1, 3, 2, 4, 3, 5], [0, 4, 0, 4, 2]], 2), (2 + 0.75) / 2),
    }
    fixture_err = max(abs(a - b) for a, b in checks.values())
    rng = np.random.default_rng(2024)
    identity_err = 0.0
    for _ in range(100):
        n = rng.integers(1, 11)
        a = rng.normal(0, 10, size=n)
        b = a + rng.normal(0, 5, size=n)
        identity_err = max(identity_err, abs(M.ql(0.5, a, b) - 0.5 * np.sum(np.abs(a - b)) / np.sum(np.abs(a))))
    ok = fixture_err < 1e-9 and identity_err < 1e-12
    report(3, ok, f"{len(checks)} fixtures max err {fixture_err:.1e} < 1e-9, "
                  f"QL50 = 0.5 sum AE / sum |y| on 100 fixtures, max err {identity_err:.1e}")
    assert ok


def test_04_quantile_minimizer(report):
    rng = np.random.default_rng(4)
    failures = []
    for k in range(50):
        n = int(rng.integers(1, 51))
        y = rng.normal(0, 3, size=n) + rng.exponential(2, size=n)
        grid = np.union1d(np.linspace(y.min() - 1, y.max() + 1, 20001), y)
        for q in (0.1, 0.5, 0.9):
            loss = M.pinball(y[None, :], grid[:, None], q).sum(axis=1)
            c = grid[np.argmin(loss)]
            # c is an empirical q-quantile iff #{y < c} <= qn and #{y > c} <= (1 - q)n
            if not (np.sum(y < c) <= q * n + 1e-9 and np.sum(y > c) <= (1 - q) * n + 1e-9):
                failures.append((k, n, q))
    ok = not failures
    report(4, ok, f"150 scans (50 samples, n <= 50, q in 0.1/0.5/0.9), {len(failures)} non-quantile minimizers")
    assert ok, failures


@pytest.fixture(scope="module")
def synthetic_run():
    panel = synthetic.seasonal_panel(50, length=SYNTH_LENGTH, seed=0)
    schema = CovariateSchema.from_panel(panel, calendar=("day_of_week",))
    spec = ModelSpec(28, 7, schema, dilations=(1, 2, 4), channels=16, hidden=32, quantiles=(0.1, 0.5, 0.9), seed=0)
    t0 = time.perf_counter()
    res = train(panel, spec, TrainConfig(**SYNTH_CFG), train_end=SYNTH_LENGTH - 7)
    levels = (0.1, 0.5, 0.9)
    model_rep = bench.rolling_eval(res.model, panel, 1, 7, levels, m=7)
    naive_rep = bench.rolling_eval(bench.SeasonalNaive(7, 7, levels), panel, 1, 7, levels, m=7)
    origin = SYNTH_LENGTH - 8
    q90 = np.stack([r.quantiles([0.9])[:, 0] for r in res.model.forecast(panel, None, origin)])
    actual = panel.values[:, origin + 1:]
    return dict(model=model_rep.metrics, naive=naive_rep.metrics, coverage=float(np.mean(actual <= q90)),
                seconds=time.perf_counter() - t0, epochs=len(res.history))


def test_05_synthetic_end_to_end(report, synthetic_run):
    r = synthetic_run
    ratio = r["model"]["QL50"] / r["naive"]["QL50"]
    ok = ratio <= 0.8 and r["epochs"] <= 200 and r["seconds"] < 600
    report(5, ok, f"QL50 {r['model']['QL50']:.4f} vs seasonal naive {r['naive']['QL50']:.4f} "
                  f"(ratio {ratio:.3f} <= 0.8), {r['epochs']} epochs, {r['seconds']:.0f}s < 600s")
    assert ok


def test_06_calibration(report, synthetic_run):
    cov = synthetic_run["coverage"]
    ok = 0.85 <= cov <= 0.95
    report(6, ok, f"0.9-quantile coverage {cov:.3f} on 350 held-out points, target [0.85, 0.95]")
    assert ok


def test_07_electricity_subset(report, tmp_path):
    t0 = time.perf_counter()
    raw = synthetic.write_electricity_raw(tmp_path / "LD2011_2014.txt", synthetic.electricity_like(20, days=92))
    panel = datasets.prepare_electricity(raw)
    n_windows, horizon = bench.PROTOCOLS["electricity"]
    train_end = panel.n_steps - n_windows * horizon
    schema = CovariateSchema.from_panel(panel, calendar=ELEC_CALENDAR)
    spec = ModelSpec(168, 24, schema, dilations=DEEP_DILATIONS, hidden=ELEC_HIDDEN, seed=0)
    res = train(panel, spec, TrainConfig(**ELEC_CFG), train_end)
    model_rep = bench.rolling_eval(res.model, panel, n_windows, horizon, m=24)
    naive_rep = bench.rolling_eval(bench.SeasonalNaive(24, 24), panel, n_windows, horizon, m=24)
    seconds = time.perf_counter() - t0
    a, b = model_rep.metrics, naive_rep.metrics
    ok = a["QL50"] < b["QL50"]
    report(7, ok, f"{panel.n_series} series x {panel.n_steps}h, 7x24 pooled QL50 {a['QL50']:.4f} vs naive "
                  f"{b['QL50']:.4f} (QL90 {a['QL90']:.4f} vs {b['QL90']:.4f}), {len(res.history)} epochs, "
                  f"{seconds:.0f}s")
    assert ok


def test_08_parts_filter(report):
    frame = synthetic.parts_like(1500, seed=8)
    frame.iloc[[3, 20, 40], [0, 7, 11]] = np.nan
    panel, rep = datasets.filter_parts(frame)
    # independent count of the same rules
    pos = frame.fillna(0).gt(0)
    expected = int((frame.notna().all() & (pos.sum() >= 10) & pos.iloc[:15].any() & pos.iloc[-15:].any()).sum())
    ok = rep.retained == expected == panel.n_series
    report(8, ok, f"retained {rep.retained} of {rep.total} synthetic parts (independent count {expected}); "
                  f"reference counts 1406 and 1046, not asserted")
    assert ok


def test_09_determinism(report, tmp_path):
    panel = synthetic.seasonal_panel(12, length=70, seed=9)
    schema = CovariateSchema.from_panel(panel, calendar=("day_of_week",))
    spec = ModelSpec(14, 7, schema, dilations=(1, 2, 4), channels=8, seed=3)
    cfg = TrainConfig(batch_size=32, learning_rate=5e-3, epochs=4, windows_per_epoch=128)
    first = train(panel, spec, cfg).model
    second = train(panel, spec, cfg).model
    identical = checkpoint_bytes(first) == checkpoint_bytes(second)
    back = load_checkpoint(save_checkpoint(first, tmp_path / "m.dtcn"))
    same = all(np.array_equal(a.values, b.values)
               for origin in (40, panel.n_steps - 1)
               for a, b in zip(first.forecast(panel, None, origin), back.forecast(panel, None, origin)))
    ok = identical and same
    report(9, ok, f"same-seed checkpoints byte-identical: {identical}; round-trip forecasts bitwise equal: {same}")
    assert ok


def test_10_sensitivity_depth(report):
    panel = synthetic.long_memory_panel(32, days=60, period=4, seed=0)
    schema = CovariateSchema.from_panel(panel, calendar=("hour_of_day",))
    specs = [ModelSpec(168, 24, schema, dilations=d, channels=8, seed=0)
             for d in ((1, 2, 4, 8, 16), (1, 2, 4, 8, 16, 32))]
    t0 = time.perf_counter()
    five, six = bench.sensitivity_run(panel, specs, TrainConfig(**MEMORY_CFG))
    seconds = time.perf_counter() - t0
    ok = six.final <= five.final
    report(10, ok, f"final train L1: 6 levels (rf {six.receptive_field}) {six.final:.4f} <= 5 levels "
                   f"(rf {five.receptive_field}) {five.final:.4f}, {seconds:.0f}s")
    assert ok
