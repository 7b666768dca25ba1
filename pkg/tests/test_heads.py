import math

import numpy as np
import pytest

from deeptcn.errors import ConfigError, NumericError
from deeptcn.heads import (
    ForecastResult,
    GaussianHead,
    QuantileHead,
    check_levels,
    gaussian_batch_loss,
    gaussian_nll,
    gaussian_quantiles,
    norm_ppf,
    quantile_batch_loss,
    quantile_loss,
    total_quantile_loss,
)
from deeptcn.tensor import Tape, Tensor, grad_check, precision

# high-precision inversion of the normal CDF (mpmath, 40 digits)
PPF_0_9 = 1.2815515655446004


def test_quantile_loss_examples():
    assert quantile_loss(0.0, 0.0, 0.3) == 0.0
    assert quantile_loss(10.0, 6.0, 0.5) == 2.0
    assert quantile_loss(5.0, 10.0, 0.9) == pytest.approx(0.5, abs=1e-15)
    assert total_quantile_loss(10.0, [6.0, 12.0], [0.5, 0.9]) == pytest.approx(2.0 + 0.2)
    with pytest.raises(ConfigError):
        quantile_loss(1.0, 0.0, 1.0)


def test_quantile_loss_nonnegative_zero_only_at_target():
    rng = np.random.default_rng(0)
    for y, yh, q in zip(rng.normal(size=200), rng.normal(size=200), rng.uniform(0.01, 0.99, 200)):
        assert quantile_loss(y, yh, q) > 0
        assert quantile_loss(y, y, q) == 0


def test_gaussian_nll_examples():
    assert gaussian_nll(1.3, 1.3, 1.0) == pytest.approx(0.918938533204673, abs=1e-12)
    assert gaussian_nll(0.0, 0.0, math.e) == pytest.approx(0.5 * math.log(2 * math.pi) + 1, abs=1e-12)
    with pytest.raises(AssertionError):
        gaussian_nll(0.0, 0.0, 0.0)


def test_gaussian_nll_minimizers():
    rng = np.random.default_rng(1)
    y = rng.normal(2.0, 1.5, size=30)
    mus = np.linspace(-2, 6, 801)
    best_mu = mus[np.argmin([sum(gaussian_nll(v, m, 1.0) for v in y) for m in mus])]
    assert best_mu == pytest.approx(y.mean(), abs=0.01)
    sigmas = np.linspace(0.5, 3.0, 2501)
    best_sigma = sigmas[np.argmin([sum(gaussian_nll(v, 2.0, s) for v in y) for s in sigmas])]
    assert best_sigma == pytest.approx(np.sqrt(np.mean((y - 2.0) ** 2)), abs=1e-3)
    with precision(np.float64):
        target = np.array([[0.7, -1.2]])
        mu = Tensor(target.copy(), requires_grad=True)
        with Tape() as tape:
            loss = gaussian_batch_loss(target, mu, Tensor(np.array([[0.5, 2.0]])))
        (g,) = tape.gradient(loss, [mu])
    assert np.all(g == 0.0)


def test_norm_ppf_examples_and_oracle():
    assert norm_ppf(0.5) == 0.0
    assert norm_ppf(0.9) == pytest.approx(PPF_0_9, abs=1e-9)
    np.testing.assert_allclose(gaussian_quantiles(10.0, 2.0, [0.5, 0.9]), [10.0, 10 + 2 * PPF_0_9], atol=1e-9)
    assert gaussian_quantiles(10.0, 2.0, [0.5, 0.9])[1] == pytest.approx(12.5631, abs=1e-4)
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    for p in [1e-10, 1e-7, 0.001, 0.02425, 0.1, 0.3, 0.49, 0.51, 0.8, 0.97575, 0.999, 1 - 1e-10]:
        exact = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))
        assert abs(norm_ppf(p) - exact) < 1e-9, p


def test_gaussian_quantiles_monotone_and_affine():
    levels = [0.05, 0.1, 0.5, 0.9, 0.95]
    q = gaussian_quantiles(1.5, 0.7, levels)
    assert np.all(np.diff(q) > 0)
    a, b = -3.0, 2.5
    np.testing.assert_allclose(gaussian_quantiles(a + b * 1.5, b * 0.7, levels), a + b * q, atol=1e-12)
    with pytest.raises(ConfigError):
        gaussian_quantiles(0.0, 1.0, [1.0])
    with pytest.raises(ConfigError):
        norm_ppf(0.0)


def test_check_levels():
    assert check_levels([0.1, 0.5]) == (0.1, 0.5)
    for bad in ([], [0.5, 0.5], [0.9, 0.1], [0.0], [1.2]):
        with pytest.raises(ConfigError):
            check_levels(bad)


def test_head_forward_examples():
    rng = np.random.default_rng(0)
    g = GaussianHead(3, rng)
    g.dense.weight.data[:] = 0
    mu, sigma = g(Tensor(rng.normal(size=(2, 4, 3))))
    assert np.all(mu.data == 0)
    np.testing.assert_allclose(sigma.data, math.log(2), rtol=1e-6)
    qh = QuantileHead(3, (0.1, 0.5, 0.9), rng)
    qh.dense.weight.data[:] = 0
    qh.dense.bias.data[:] = [1.0, 2.0, 3.0]
    out = qh(Tensor(rng.normal(size=(2, 4, 3)))).data
    np.testing.assert_array_equal(out, np.broadcast_to([1.0, 2.0, 3.0], (2, 4, 3)))


def test_quantile_head_gradient_against_finite_differences():
    rng = np.random.default_rng(5)
    with precision(np.float64):
        head = QuantileHead(3, (0.1, 0.5, 0.9), rng)
        delta = Tensor(rng.normal(size=(3, 2, 3)))
        y = rng.normal(size=(3, 2)) * 3

        def f(w):
            old = head.dense.weight
            head.dense.weight = w
            try:
                return quantile_batch_loss(y, head(delta), head.levels)
            finally:
                head.dense.weight = old

        assert grad_check(f, head.dense.weight.data.copy(), eps=1e-6) < 1e-5


def test_quantile_batch_loss_is_a_mean():
    y = np.array([[1.0, 2.0]])
    preds = Tensor(np.array([[[0.0, 0.0], [2.0, 2.0]]]))
    # per-point pinball: (0.5, 0.9) at step 1 and (1.0, 2.0) * (0.5, 0.1) at step 2
    expected = np.mean([0.5 * 1, 0.9 * 1, 0.5 * 0, 0.1 * 0])
    assert quantile_batch_loss(y, preds, (0.5, 0.9)).item() == pytest.approx(expected)


def test_forecast_result_contract():
    import pandas as pd
    stamps = pd.date_range("2020-01-01", periods=2, freq="D")
    r = ForecastResult("a", stamps[0], stamps, "gaussian", 1.0, (0.5, 0.9), mu=np.zeros(2), sigma=np.ones(2))
    np.testing.assert_allclose(r.quantiles([0.9])[:, 0], PPF_0_9, atol=1e-9)
    assert [row[1] for row in r.rows()] == ["mu", "sigma", "mu", "sigma"]
    with pytest.raises(NumericError):
        ForecastResult("a", stamps[0], stamps, "gaussian", 1.0, mu=np.zeros(2), sigma=np.array([1.0, 0.0]))
    with pytest.raises(NumericError):
        ForecastResult("a", stamps[0], stamps, "quantile", 1.0, (0.5,), values=np.array([[np.nan], [1.0]]))
    q = ForecastResult("a", stamps[0], stamps, "quantile", 1.0, (0.5, 0.9), values=np.ones((2, 2)))
    with pytest.raises(ConfigError):
        q.quantiles([0.1])
