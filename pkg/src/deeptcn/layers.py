"""Neural building blocks: causal convolution, batch norm, dense, embedding,
the encoder residual block and the decoder's covariate residual unit."""
from __future__ import annotations

import math
from typing import Iterator, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .tensor import Tensor, default_dtype


class Module:
    """Minimal container tracking named parameters, buffers and children."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, Module] = {}

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        p = Tensor(value, requires_grad=True, name=name)
        self._params[name] = p
        return p

    def add_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = np.array(value, dtype=default_dtype())

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, b in self._buffers.items():
            yield prefix + name, b
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = self._buffer_owners()
        expected = set(params) | set(buffers)
        if set(state) != expected:
            missing, extra = expected - set(state), set(state) - expected
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise DimensionError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data = np.array(state[name], dtype=p.dtype)
        for name, (owner, key) in buffers.items():
            owner._buffers[key] = np.array(state[name], dtype=owner._buffers[key].dtype)

    def _buffer_owners(self, prefix: str = "") -> dict[str, tuple["Module", str]]:
        out = {prefix + k: (self, k) for k in self._buffers}
        for cname, child in self._children.items():
            out.update(child._buffer_owners(f"{prefix}{cname}."))
        return out

    def astype(self, dtype) -> "Module":
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
        for _, (owner, key) in self._buffer_owners().items():
            owner._buffers[key] = owner._buffers[key].astype(dtype)
        return self


def he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class CausalConv1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, dilation: int,
                 rng: np.random.Generator):
        super().__init__()
        if min(in_channels, out_channels, kernel_size, dilation) < 1:
            raise ConfigError("conv extents and dilation must be positive")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel_size, self.dilation = kernel_size, dilation
        self.weight = self.add_param(
            "weight", he_uniform(rng, (out_channels, in_channels, kernel_size), in_channels * kernel_size))
        self.bias = self.add_param("bias", np.zeros(out_channels))

    def validate(self, length: int) -> None:
        if self.kernel_size * self.dilation > length:
            raise ConfigError(
                f"kernel size {self.kernel_size} x dilation {self.dilation} exceeds input length {length}")

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise DimensionError(f"conv expects (batch, {self.in_channels}, T), got {x.shape}")
        return T.bias_add(T.causal_conv1d(x, self.weight, self.dilation), self.bias, axis=1)


class BatchNorm(Module):
    """Per-channel batch normalization along ``axis``.

    Running statistics follow ``running = momentum*running + (1-momentum)*batch``.
    """

    def __init__(self, channels: int, axis: int = 1, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__()
        if not 0 < momentum < 1:
            raise ConfigError(f"momentum must lie in (0, 1), got {momentum}")
        self.channels, self.axis, self.momentum, self.eps = channels, axis, momentum, eps
        self.gamma = self.add_param("gamma", np.ones(channels))
        self.beta = self.add_param("beta", np.zeros(channels))
        self.add_buffer("running_mean", np.zeros(channels))
        self.add_buffer("running_var", np.ones(channels))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        axis = self.axis % x.ndim
        if x.shape[axis] != self.channels:
            raise DimensionError(f"batch norm expects {self.channels} channels on axis {axis}, got {x.shape}")
        if training:
            if x.size // self.channels < 2:
                raise ConfigError("batch norm in training mode needs at least 2 values per channel")
            xhat, mu, var = T.batch_standardize(x, axis, self.eps)
            m = self.momentum
            rm, rv = self._buffers["running_mean"], self._buffers["running_var"]
            self._buffers["running_mean"] = (m * rm + (1 - m) * mu).astype(rm.dtype)
            self._buffers["running_var"] = (m * rv + (1 - m) * var).astype(rv.dtype)
        else:
            inv = 1.0 / np.sqrt(self._buffers["running_var"] + self.eps)
            scale = Tensor(inv, dtype=x.dtype)
            shift = Tensor(-self._buffers["running_mean"] * inv, dtype=x.dtype)
            xhat = T.channel_affine(x, scale, shift, axis)
        return T.channel_affine(xhat, self.gamma, self.beta, axis)


class Dense(Module):
    """Affine map over the last axis."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        self.weight = self.add_param("weight", he_uniform(rng, (in_features, out_features), in_features))
        self.bias = self.add_param("bias", np.zeros(out_features))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise DimensionError(f"dense expects {self.in_features} input features, got {x.shape}")
        lead = x.shape[:-1]
        y = T.matmul(T.reshape(x, (-1, self.in_features)), self.weight)
        y = T.bias_add(y, self.bias, axis=1)
        return T.reshape(y, lead + (self.out_features,))


def default_embedding_dim(vocab_size: int) -> int:
    return min(20, math.ceil(math.sqrt(vocab_size)))


class Embedding(Module):
    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator, name: str = "feature"):
        super().__init__()
        self.vocab_size, self.dim, self.feature = vocab_size, dim, name
        self.table = self.add_param("table", rng.normal(0.0, 0.01, size=(vocab_size, dim)))

    def __call__(self, indices) -> Tensor:
        idx = np.asarray(indices)
        if idx.size and (idx.min() < 0 or idx.max() >= self.vocab_size):
            bad = idx[(idx < 0) | (idx >= self.vocab_size)].reshape(-1)[0]
            raise IndexError(f"feature {self.feature!r}: index {bad} outside vocabulary of size {self.vocab_size}")
        return T.gather_rows(self.table, idx)


def receptive_field(dilations: Sequence[int], kernel_size: int, convs_per_level: int = 2) -> int:
    """Trailing input steps that can reach the last output of a dilated stack."""
    if not dilations or any(d < 1 for d in dilations):
        raise ConfigError("dilations must be a non-empty list of positive integers")
    return 1 + convs_per_level * (kernel_size - 1) * sum(dilations)


class EncoderBlock(Module):
    """conv -> BN -> act -> conv -> BN, plus skip, then act.

    ``batchnorm=False`` and ``activation="identity"`` give the linear variant
    used for receptive-field checks.
    """

    def __init__(self, in_channels: int, channels: int, kernel_size: int, dilation: int,
                 rng: np.random.Generator, activation: str = "relu", batchnorm: bool = True):
        super().__init__()
        if activation not in ("relu", "identity"):
            raise ConfigError(f"unknown activation {activation!r}")
        self.activation, self.batchnorm = activation, batchnorm
        self.conv1 = self.add_child("conv1", CausalConv1d(in_channels, channels, kernel_size, dilation, rng))
        self.conv2 = self.add_child("conv2", CausalConv1d(channels, channels, kernel_size, dilation, rng))
        if batchnorm:
            self.bn1 = self.add_child("bn1", BatchNorm(channels, axis=1))
            self.bn2 = self.add_child("bn2", BatchNorm(channels, axis=1))
        self.proj = None
        if in_channels != channels:
            self.proj = self.add_child("proj", CausalConv1d(in_channels, channels, 1, 1, rng))

    def _act(self, x: Tensor) -> Tensor:
        return T.relu(x) if self.activation == "relu" else x

    def validate(self, length: int) -> None:
        self.conv1.validate(length)
        self.conv2.validate(length)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        y = self.conv1(x)
        if self.batchnorm:
            y = self.bn1(y, training)
        y = self.conv2(self._act(y))
        if self.batchnorm:
            y = self.bn2(y, training)
        skip = x if self.proj is None else self.proj(x)
        return self._act(T.add(skip, y))


class Encoder(Module):
    """Stack of residual blocks, one per dilation; the latent is the last time step."""

    def __init__(self, in_channels: int, channels: int, kernel_size: int, dilations: Sequence[int],
                 rng: np.random.Generator, activation: str = "relu", batchnorm: bool = True):
        super().__init__()
        if not dilations:
            raise ConfigError("encoder needs at least one dilation")
        self.kernel_size, self.dilations = kernel_size, tuple(dilations)
        self.blocks: list[EncoderBlock] = []
        c_in = in_channels
        for i, d in enumerate(dilations):
            block = EncoderBlock(c_in, channels, kernel_size, d, rng, activation, batchnorm)
            self.blocks.append(self.add_child(f"block{i}", block))
            c_in = channels

    def validate(self, length: int) -> None:
        for block in self.blocks:
            block.validate(length)

    def features(self, x: Tensor, training: bool) -> Tensor:
        for block in self.blocks:
            x = block(x, training)
        return x

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return T.getitem(self.features(x, training), (slice(None), slice(None), -1))

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.dilations, self.kernel_size, 2)


class ResnetV(Module):
    """delta = R(X) + h with R = dense -> BN -> ReLU -> dense -> BN applied per horizon step."""

    def __init__(self, in_features: int, hidden: int, latent: int, rng: np.random.Generator):
        super().__init__()
        self.in_features, self.latent = in_features, latent
        self.dense1 = self.add_child("dense1", Dense(in_features, hidden, rng))
        self.bn1 = self.add_child("bn1", BatchNorm(hidden, axis=-1))
        self.dense2 = self.add_child("dense2", Dense(hidden, latent, rng))
        self.bn2 = self.add_child("bn2", BatchNorm(latent, axis=-1))

    def residual(self, x: Tensor, training: bool) -> Tensor:
        y = T.relu(self.bn1(self.dense1(x), training))
        return self.bn2(self.dense2(y), training)

    def __call__(self, h: Tensor, x_future: Tensor, training: bool) -> Tensor:
        if x_future.ndim != 3 or x_future.shape[2] != self.in_features:
            raise DimensionError(f"future covariates must be (batch, horizon, {self.in_features}), got {x_future.shape}")
        if h.shape != (x_future.shape[0], self.latent):
            raise DimensionError(f"latent h has shape {h.shape}, expected ({x_future.shape[0]}, {self.latent})")
        return T.add(self.residual(x_future, training), T.expand(h, 1, x_future.shape[1]))
