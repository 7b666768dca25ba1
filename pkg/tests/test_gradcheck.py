import pytest

from deeptcn import gradcheck
from deeptcn import tensor as T
from deeptcn.gradcheck import CASES, TOLERANCE, check_op, run_suite


def test_every_differentiable_op_has_a_case():
    for name in ("conv", "batchnorm", "dense", "embedding", "softplus", "relu", "quantile_loss",
                 "gaussian_loss", "composite"):
        assert name in CASES


@pytest.mark.parametrize("op", ["relu", "softplus", "dense", "conv", "batchnorm", "quantile_loss"])
def test_small_suite_passes(op):
    (res,) = run_suite(3, seed=11, ops=[op])
    assert res.passed and res.configs == 3 and res.checks >= 3
    assert res.max_rel_err < TOLERANCE


def test_oracle_catches_a_slightly_wrong_backward(monkeypatch):
    real = T._sigmoid
    monkeypatch.setattr(T, "_sigmoid", lambda z: real(z) * (1 + 1e-5))
    res = check_op("softplus", 3, seed=0)
    assert not res.passed


def test_unknown_op_is_rejected():
    with pytest.raises(KeyError):
        run_suite(1, ops=["fft"])
    assert gradcheck.STEPS[0] > gradcheck.STEPS[-1]
