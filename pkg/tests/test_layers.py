import numpy as np
import pytest

from deeptcn import tensor as T
from deeptcn.causality import causality_check
from deeptcn.errors import ConfigError, DimensionError
from deeptcn.layers import (
    BatchNorm,
    CausalConv1d,
    Dense,
    Embedding,
    Encoder,
    EncoderBlock,
    ResnetV,
    default_embedding_dim,
    receptive_field,
)
from deeptcn.tensor import Tape, Tensor, grad_check, precision


def _conv(k, d, w, rng=None):
    conv = CausalConv1d(1, 1, k, d, rng or np.random.default_rng(0))
    conv.weight.data[:] = np.asarray(w, dtype=np.float32).reshape(1, 1, k)
    return conv


def test_identity_kernel():
    x = np.random.default_rng(0).normal(size=(2, 1, 6)).astype(np.float32)
    np.testing.assert_array_equal(_conv(1, 1, [1.0])(Tensor(x)).data, x)


def test_dilated_sum_with_left_zero_padding():
    x = Tensor(np.arange(1, 9, dtype=np.float32).reshape(1, 1, 8))
    out = _conv(2, 2, [1.0, 1.0])(x).data.reshape(-1)
    assert out.tolist() == [1, 2, 4, 6, 8, 10, 12, 14]


def test_conv_channel_mismatch_and_length_validation():
    conv = CausalConv1d(2, 3, 2, 4, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        conv(Tensor(np.zeros((1, 3, 8))))
    with pytest.raises(ConfigError):
        conv.validate(7)
    conv.validate(8)


@pytest.mark.parametrize("dilations,k,per_level,expected", [
    ((1, 2, 4, 8), 2, 1, 16),
    ((1,), 1, 1, 1),
    ((1, 2, 4, 8), 2, 2, 31),
])
def test_receptive_field(dilations, k, per_level, expected):
    assert receptive_field(dilations, k, per_level) == expected


def test_receptive_field_rejects_bad_dilations():
    with pytest.raises(ConfigError):
        receptive_field([], 2)
    with pytest.raises(ConfigError):
        receptive_field([1, 0], 2)


def test_batchnorm_fixed_point_and_batch_statistics():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(64, 3, 10))
    z = (z - z.mean(axis=(0, 2), keepdims=True)) / z.std(axis=(0, 2), keepdims=True)
    with precision(np.float64):
        bn = BatchNorm(3, axis=1)
        out = bn(Tensor(z), training=True).data
        np.testing.assert_allclose(out, z, rtol=1e-5, atol=1e-5)   # eps shrinks by 1/sqrt(1 + 1e-5)
        y = bn(Tensor(rng.normal(3.0, 2.0, size=(16, 3, 5))), training=True).data
    assert np.abs(y.mean(axis=(0, 2))).max() < 1e-6
    assert np.abs(y.var(axis=(0, 2)) - 1).max() < 1e-4


def test_batchnorm_running_stats_and_inference():
    rng = np.random.default_rng(1)
    bn = BatchNorm(2, axis=1, momentum=0.9)
    x = rng.normal(2.0, 3.0, size=(8, 2, 4)).astype(np.float32)
    bn(Tensor(x), training=True)
    mu = x.mean(axis=(0, 2))
    np.testing.assert_allclose(bn._buffers["running_mean"], 0.1 * mu, rtol=1e-5)
    a = bn(Tensor(x), training=False).data
    b = bn(Tensor(x), training=False).data
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(bn._buffers["running_mean"], 0.1 * mu, rtol=1e-5)


def test_batchnorm_constant_channel_and_size_one_batch():
    bn = BatchNorm(1, axis=1)
    out = bn(Tensor(np.full((4, 1, 3), 5.0)), training=True).data
    assert np.all(out == 0)
    with pytest.raises(ConfigError):
        bn(Tensor(np.ones((1, 1, 1))), training=True)
    with pytest.raises(ConfigError):
        BatchNorm(2, momentum=1.0)


def test_embedding_lookup_and_gradient():
    emb = Embedding(4, 3, np.random.default_rng(0), name="store")
    rows = emb(np.array([2, 2])).data
    np.testing.assert_array_equal(rows[0], rows[1])
    emb.table.requires_grad = True
    with Tape() as tape:
        y = T.tsum(emb(np.array([0, 0])))
    (g,) = tape.gradient(y, [emb.table])
    np.testing.assert_array_equal(g[0], 2 * np.ones(3))
    assert np.all(g[1:] == 0)
    with pytest.raises(IndexError, match="store"):
        emb(np.array([4]))


def test_default_embedding_dim():
    assert default_embedding_dim(4) == 2
    assert default_embedding_dim(10_000) == 20


def test_dense_shapes():
    d = Dense(3, 2, np.random.default_rng(0))
    assert d(Tensor(np.ones((4, 5, 3)))).shape == (4, 5, 2)
    with pytest.raises(DimensionError):
        d(Tensor(np.ones((4, 2))))


def test_encoder_zero_input_gives_zero_latent():
    enc = Encoder(3, 4, 2, (1, 2, 4), np.random.default_rng(0))
    for training in (True, False):
        h = enc(Tensor(np.zeros((2, 3, 16))), training)
        assert h.shape == (2, 4)
        assert np.all(h.data == 0)


def test_encoder_accepts_six_layers_for_168_steps():
    enc = Encoder(5, 5, 2, (1, 2, 4, 8, 16, 32), np.random.default_rng(0))
    enc.validate(168)
    assert enc(Tensor(np.ones((2, 5, 168))), False).shape == (2, 5)
    with pytest.raises(ConfigError):
        enc.validate(63)


def test_encoder_last_step_and_outside_receptive_field():
    rng = np.random.default_rng(3)
    enc = Encoder(2, 3, 2, (1, 2), rng, activation="identity", batchnorm=False)
    rf = enc.receptive_field
    x = rng.normal(size=(1, 2, rf + 5)).astype(np.float32)
    h = enc(Tensor(x), False).data
    last = x.copy()
    last[..., -1] += 1
    assert np.abs(enc(Tensor(last), False).data - h).max() > 1e-3
    outside = x.copy()
    outside[..., : x.shape[2] - rf] += 1
    assert np.abs(enc(Tensor(outside), False).data - h).max() < 1e-7


def test_block_projection_when_widths_differ():
    block = EncoderBlock(2, 4, 2, 1, np.random.default_rng(0))
    assert block.proj is not None
    assert block(Tensor(np.ones((3, 2, 6))), True).shape == (3, 4, 6)
    with pytest.raises(ConfigError):
        EncoderBlock(2, 2, 2, 1, np.random.default_rng(0), activation="tanh")


def test_resnet_v_zero_residual_and_zero_latent():
    rng = np.random.default_rng(0)
    dec = ResnetV(3, 5, 4, rng)
    h = rng.normal(size=(2, 4))
    x = rng.normal(size=(2, 6, 3))
    dec.dense2.weight.data[:] = 0
    with precision(np.float64):
        delta = dec(Tensor(h), Tensor(x), training=True).data
        np.testing.assert_array_equal(delta, np.repeat(h[:, None, :], 6, axis=1))
        dec2 = ResnetV(3, 5, 4, np.random.default_rng(1))
        r = dec2.residual(Tensor(x), training=False).data
        np.testing.assert_array_equal(dec2(Tensor(np.zeros((2, 4))), Tensor(x), training=False).data, r)


def test_resnet_v_gradients_and_shape_errors():
    rng = np.random.default_rng(4)
    with precision(np.float64):
        dec = ResnetV(3, 4, 2, rng)
    h0, x0 = rng.normal(size=(3, 2)), rng.normal(size=(3, 4, 3))
    w = rng.uniform(0.5, 1.5, size=(3, 4, 2))
    f_h = lambda h: T.tsum(T.mul(dec(h, Tensor(x0), training=False), Tensor(w)))
    f_x = lambda x: T.tsum(T.mul(dec(Tensor(h0), x, training=False), Tensor(w)))
    assert grad_check(f_h, h0, eps=1e-5) < 1e-6
    assert grad_check(f_x, x0, eps=1e-5) < 1e-6
    with pytest.raises(DimensionError):
        dec(Tensor(h0), Tensor(np.ones((3, 4, 2))), training=False)
    with pytest.raises(DimensionError):
        dec(Tensor(np.ones((3, 3))), Tensor(x0), training=False)


def test_causality_check_detects_a_leaky_conv(monkeypatch):
    assert causality_check((1, 2), margin=3).passed
    real = T.causal_conv1d

    def leaky(x, w, dilation):
        out = real(x, w, dilation)
        shifted = np.concatenate([x.data[..., 1:], x.data[..., -1:]], axis=-1).sum(axis=1, keepdims=True)
        return Tensor(out.data + 1e-3 * shifted, dtype=out.dtype)

    monkeypatch.setattr(T, "causal_conv1d", leaky)
    res = causality_check((1, 2), margin=3)
    assert res.layer_leaks > 0 and res.encoder_leaks > 0


def test_causality_check_detects_a_wrong_receptive_field(monkeypatch):
    from deeptcn import causality
    monkeypatch.setattr(causality, "receptive_field", lambda d, k, c: receptive_field(d, k, c) - 1)
    res = causality_check((1, 2), margin=3)
    assert res.outside_changed
    monkeypatch.setattr(causality, "receptive_field", lambda d, k, c: receptive_field(d, k, c) + 1)
    assert causality_check((1, 2), margin=3).inside_silent == 1
