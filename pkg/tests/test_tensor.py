import math

import numpy as np
import pytest

from deeptcn import tensor as T
from deeptcn.errors import DimensionError, DomainError, NumericError
from deeptcn.tensor import RngState, Tape, Tensor, grad_check, precision


def test_matmul_identity_and_dot():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(T.matmul(Tensor(np.eye(2)), a).data, a.data)
    assert T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_shape_error_names_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))


def test_matmul_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    b = rng.normal(size=(3, 4))
    err = grad_check(lambda x: T.tsum(T.matmul(x, Tensor(b))), rng.normal(size=(2, 3)), eps=1e-5)
    assert err < 1e-6


def test_elementwise_examples():
    assert T.softplus(Tensor(0.0)).item() == pytest.approx(math.log(2), abs=1e-6)
    assert T.relu(Tensor(-3.0)).item() == 0.0
    assert T.relu(Tensor(3.0)).item() == 3.0
    with precision(np.float64):
        assert T.softplus(Tensor(1000.0)).item() == 1000.0
    assert T.elementwise("square", Tensor([2.0])).data.tolist() == [4.0]


def test_domain_errors():
    with pytest.raises(DomainError):
        T.log(Tensor([1.0, 0.0]))
    with pytest.raises(DomainError):
        T.div(Tensor([1.0]), Tensor([0.0]))


def test_non_finite_output_is_an_error_naming_the_op():
    with pytest.raises(NumericError, match="exp"):
        T.exp(Tensor([1000.0]))


def test_scalar_broadcast_identities_and_commutativity():
    rng = np.random.default_rng(1)
    a, b = Tensor(rng.normal(size=(3, 2))), Tensor(rng.normal(size=(3, 2)))
    np.testing.assert_array_equal(T.add(a, 0.0).data, a.data)
    np.testing.assert_array_equal(T.mul(a, 1.0).data, a.data)
    np.testing.assert_array_equal(T.add(a, b).data, T.add(b, a).data)
    np.testing.assert_array_equal(T.mul(a, b).data, T.mul(b, a).data)
    with pytest.raises(DimensionError):
        T.add(a, Tensor(np.ones((2, 3))))


def test_grad_check_examples():
    assert grad_check(lambda x: T.tsum(T.square(x)), np.array([1.0, 2.0]), eps=1e-5) < 1e-8
    assert grad_check(lambda x: T.tsum(T.relu(x)), np.array([-1.5, 0.7, 2.0]), eps=1e-5) < 1e-8
    assert grad_check(lambda x: T.tsum(T.mul(Tensor(np.zeros(3)), x)), np.ones(3), eps=1e-5) == 0.0


def test_grad_check_rejects_bad_eps_and_non_finite_values():
    with pytest.raises(ValueError):
        grad_check(lambda x: T.tsum(x), np.ones(2), eps=1e-2)
    with pytest.raises(NumericError):
        grad_check(lambda x: T.tsum(T.mul(x, float("inf"))), np.ones(2), eps=1e-5)


def test_tape_accumulates_reused_inputs():
    x = Tensor([3.0], requires_grad=True)
    with Tape() as tape:
        y = T.add(T.mul(x, x), x)
    (g,) = tape.gradient(y, [x])
    assert g.tolist() == [7.0]


def test_precision_context_sets_dtype():
    assert Tensor([1.0]).dtype == np.float32
    with precision(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    with pytest.raises(ValueError):
        with precision(np.int32):
            pass


def test_causal_conv_reads_only_past_positions():
    x = np.arange(1, 9, dtype=np.float32).reshape(1, 1, 8)
    w = Tensor(np.array([[[1.0, 10.0]]]))      # tap k multiplies x[t - d*k]
    out = T.causal_conv1d(Tensor(x), w, dilation=2).data[0, 0]
    expected = [1, 2, 3 + 10, 4 + 20, 5 + 30, 6 + 40, 7 + 50, 8 + 60]
    assert out.tolist() == expected


def test_rng_state_is_reproducible_and_split_by_stream():
    a = RngState(7).generator(0).normal(size=5)
    b = RngState(7).generator(0).normal(size=5)
    c = RngState(7).generator(1).normal(size=5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ValueError):
        RngState(-1)
