"""Bitwise perturbation checks of causality and receptive field for encoder stacks."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .layers import Encoder, receptive_field
from .tensor import Tensor

# dilation lists of the depth study
ARCHITECTURES = ((1, 2, 4, 8, 16), (1, 2, 4, 8, 16, 32), (1, 2, 4, 8, 16, 20, 32))


@dataclass
class CausalityResult:
    dilations: tuple[int, ...]
    receptive_field: int
    length: int
    layer_leaks: int        # (conv, t) pairs whose past output moved when a future input did
    encoder_leaks: int      # same for the whole stack
    outside_changed: bool   # some input before the receptive field moved the last output
    inside_silent: int      # inputs inside the receptive field that left the last output unchanged
    seconds: float

    @property
    def passed(self) -> bool:
        return not (self.layer_leaks or self.encoder_leaks or self.outside_changed or self.inside_silent)


def _run(encoder: Encoder, x: np.ndarray) -> np.ndarray:
    return encoder.features(Tensor(x), training=False).data


def _conv_leaks(conv, x: np.ndarray, rng) -> int:
    base = conv(Tensor(x)).data
    T = x.shape[2]
    leaks = 0
    for t in range(T - 1):
        # all future positions at once, then one random future position
        bumped = x.copy()
        bumped[:, :, t + 1:] += 1.0
        single = x.copy()
        single[:, :, rng.integers(t + 1, T)] += 1.0
        for probe in (bumped, single):
            if not np.array_equal(conv(Tensor(probe)).data[:, :, :t + 1], base[:, :, :t + 1]):
                leaks += 1
                break
    return leaks


def causality_check(dilations: Sequence[int], kernel_size: int = 2, in_channels: int = 3, channels: int = 4,
                    batch: int = 2, margin: int = 8, seed: int = 0) -> CausalityResult:
    """Perturb inputs and compare outputs bit for bit.

    Causality is checked on every conv layer and on the full stack (batch norm
    in inference mode, relu). The receptive field is checked on the linear
    variant: inputs before it must leave the last output bit-identical and
    every input inside it must move that output.
    """
    started = time.perf_counter()
    dilations = tuple(int(d) for d in dilations)
    rf = receptive_field(dilations, kernel_size, 2)
    T = rf + margin
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(batch, in_channels, T))

    full = Encoder(in_channels, channels, kernel_size, dilations, rng)
    layer_leaks = 0
    h = x
    for block in full.blocks:
        for conv in (block.conv1, block.conv2):
            inp = h if conv is block.conv1 else rng.normal(size=(batch, channels, T))
            layer_leaks += _conv_leaks(conv, inp, rng)
        h = block(Tensor(h), training=False).data

    base = _run(full, x)
    encoder_leaks = 0
    for t in range(T - 1):
        bumped = x.copy()
        bumped[:, :, t + 1:] += 1.0
        if not np.array_equal(_run(full, bumped)[:, :, :t + 1], base[:, :, :t + 1]):
            encoder_leaks += 1

    linear = Encoder(in_channels, channels, kernel_size, dilations, rng, activation="identity", batchnorm=False)
    last = _run(linear, x)[:, :, -1]
    before = x.copy()
    before[:, :, :T - rf] += rng.normal(size=(batch, in_channels, T - rf))
    outside_changed = not np.array_equal(_run(linear, before)[:, :, -1], last)
    inside_silent = 0
    for s in range(T - rf, T):
        probe = x.copy()
        probe[:, :, s] += 1.0
        if np.array_equal(_run(linear, probe)[:, :, -1], last):
            inside_silent += 1
    return CausalityResult(dilations, rf, T, layer_leaks, encoder_leaks, outside_changed, inside_silent,
                           time.perf_counter() - started)


def run_causality_suite(architectures=ARCHITECTURES, kernel_size: int = 2, seed: int = 0) -> list[CausalityResult]:
    return [causality_check(d, kernel_size, seed=seed) for d in architectures]
