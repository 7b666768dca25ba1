"""Model specification and the assembled encoder/decoder network."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import tensor as T
from .data import Batch, CovariateSchema, SeriesPanel, scale_series, window_inputs
from .errors import ConfigError, DataError
from .heads import ForecastResult, GaussianHead, QuantileHead, check_levels
from .layers import Embedding, Encoder, Module, ResnetV
from .tensor import RngState, Tensor


@dataclass(frozen=True)
class ModelSpec:
    input_length: int
    horizon: int
    schema: CovariateSchema
    kernel_size: int = 2
    dilations: tuple[int, ...] = (1, 2, 4, 8)
    channels: int | None = None        # None: encoder input width
    hidden: int | None = None          # width inside the decoder residual; None: channels
    head: str = "quantile"
    quantiles: tuple[float, ...] = (0.5, 0.9)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        object.__setattr__(self, "quantiles", tuple(float(q) for q in self.quantiles))
        self.validate()

    @property
    def input_channels(self) -> int:
        return 1 + self.schema.width

    @property
    def n_channels(self) -> int:
        return self.channels or self.input_channels

    @property
    def n_hidden(self) -> int:
        return self.hidden or self.n_channels

    def validate(self) -> None:
        if self.input_length < 1 or self.horizon < 1:
            raise ConfigError("input length and horizon must be positive")
        if self.kernel_size < 1 or not self.dilations or min(self.dilations) < 1:
            raise ConfigError("kernel size and dilations must be positive")
        if self.kernel_size * max(self.dilations) > self.input_length:
            raise ConfigError(
                f"kernel size {self.kernel_size} x dilation {max(self.dilations)} exceeds "
                f"input length {self.input_length}")
        if self.head not in ("quantile", "gaussian"):
            raise ConfigError(f"unknown head {self.head!r}")
        if self.head == "quantile":
            check_levels(self.quantiles)
        if self.channels is not None and self.channels < 1:
            raise ConfigError("channels must be positive")

    def to_dict(self) -> dict:
        return {
            "input_length": self.input_length,
            "horizon": self.horizon,
            "schema": self.schema.to_dict(),
            "kernel_size": self.kernel_size,
            "dilations": list(self.dilations),
            "channels": self.channels,
            "hidden": self.hidden,
            "head": self.head,
            "quantiles": list(self.quantiles),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["schema"] = CovariateSchema.from_dict(d["schema"])
        return cls(**d)

    def replace(self, **changes) -> "ModelSpec":
        return replace(self, **changes)


class DeepTCN(Module):
    """Dilated causal encoder, covariate residual decoder and an output head.

    Forecasts for all horizon steps come out of one forward pass.
    """

    def __init__(self, spec: ModelSpec, rng: np.random.Generator | None = None):
        super().__init__()
        self.spec = spec
        self.rng_state = RngState(spec.seed)
        rng = rng or self.rng_state.generator(0)
        schema = spec.schema
        self.embeddings: list[Embedding] = [
            self.add_child(f"embed_{c.name}", Embedding(c.vocab_size, c.dim, rng, c.name))
            for c in schema.categorical]
        self.encoder = self.add_child("encoder", Encoder(
            spec.input_channels, spec.n_channels, spec.kernel_size, spec.dilations, rng))
        self.encoder.validate(spec.input_length)
        self.decoder = self.add_child("decoder", ResnetV(schema.width, spec.n_hidden, spec.n_channels, rng))
        if spec.head == "quantile":
            self.head = self.add_child("head", QuantileHead(spec.n_channels, spec.quantiles, rng))
        else:
            self.head = self.add_child("head", GaussianHead(spec.n_channels, rng))
        # per-series scale from the training range, keyed by id
        self.scales: dict[str, float] = {}
        self.metadata: dict = {}

    @property
    def horizon(self) -> int:
        return self.spec.horizon

    @property
    def levels(self) -> tuple[float, ...]:
        return self.spec.quantiles

    def _features(self, batch: Batch, steps: int, x_real: np.ndarray) -> Tensor:
        """Real covariates plus embeddings broadcast over ``steps``: (B, steps, F)."""
        parts = [Tensor(x_real)]
        for k, emb in enumerate(self.embeddings):
            parts.append(T.expand(emb(batch.cats[:, k]), 1, steps))
        return T.concat(parts, axis=2) if len(parts) > 1 else parts[0]

    def __call__(self, batch: Batch, training: bool = False):
        spec = self.spec
        if batch.y_in.shape[1] != spec.input_length or batch.x_future.shape[1] != spec.horizon:
            raise DataError(f"batch has input {batch.y_in.shape[1]} / horizon {batch.x_future.shape[1]}, "
                            f"model expects {spec.input_length} / {spec.horizon}")
        enc_in = T.concat([Tensor(batch.y_in[:, :, None]),
                           self._features(batch, spec.input_length, batch.x_in)], axis=2)
        h = self.encoder(T.transpose(enc_in, (0, 2, 1)), training)
        delta = self.decoder(h, self._features(batch, spec.horizon, batch.x_future), training)
        return self.head(delta)

    def loss(self, batch: Batch, training: bool = True) -> tuple[Tensor, np.ndarray]:
        """Mean training loss and the point forecast (scaled) for the batch."""
        out = self(batch, training)
        point = self.head.point(out.data if isinstance(out, Tensor) else (out[0].data, out[1].data))
        return self.head.loss(batch.target, out), point

    def predict(self, batch: Batch) -> dict[str, np.ndarray]:
        """Scaled-space outputs in inference mode."""
        out = self(batch, training=False)
        if self.spec.head == "quantile":
            return {"quantiles": out.data.astype(np.float64)}
        return {"mu": out[0].data.astype(np.float64), "sigma": out[1].data.astype(np.float64)}

    def series_scale(self, panel: SeriesPanel, i: int, origin: int) -> float:
        sid = panel.ids[i]
        if sid in self.scales:
            return self.scales[sid]
        s = panel.starts[i]
        e = min(s + panel.lengths[i], origin + 1)
        return scale_series(panel.values[i, s:e])[1] if e > s else 1.0

    def forecast(self, panel: SeriesPanel, series_ids: Sequence[str] | None, origin) -> list[ForecastResult]:
        """Forecast ``horizon`` steps after ``origin`` (last observed position or timestamp).

        Never reads values after ``origin``; short histories are zero padded.
        """
        spec = self.spec
        spec.schema.check_panel(panel)
        origin = origin if isinstance(origin, (int, np.integer)) else panel.to_position(origin)
        ids = list(panel.ids) if series_ids is None else list(series_ids)
        rows = [panel.position(s) for s in ids]
        ts = origin + 1
        parts = {"y": [], "xi": [], "xf": [], "c": [], "pad": [], "scale": []}
        for i in rows:
            scale = self.series_scale(panel, i, origin)
            y_in, x_in, x_future, cats, padded = window_inputs(
                panel, spec.schema, i, ts, spec.input_length, spec.horizon, scale)
            for key, val in zip(parts, (y_in, x_in, x_future, cats, padded, scale)):
                parts[key].append(val)
        batch = Batch(np.stack(parts["y"]), np.stack(parts["xi"]), np.stack(parts["xf"]),
                      np.stack(parts["c"]).reshape(len(rows), -1))
        out = self.predict(batch)
        stamps = panel.timestamps(ts, ts + spec.horizon)
        origin_ts = panel.timestamp(origin)
        results = []
        for b, sid in enumerate(ids):
            scale = parts["scale"][b]
            common = dict(series_id=sid, origin=origin_ts, timestamps=stamps, kind=spec.head,
                          scale=scale, padded=parts["pad"][b])
            if spec.head == "quantile":
                results.append(ForecastResult(levels=spec.quantiles, values=out["quantiles"][b] * scale, **common))
            else:
                results.append(ForecastResult(levels=spec.quantiles, mu=out["mu"][b] * scale,
                                              sigma=out["sigma"][b] * scale, **common))
        return results


def build_model(spec: ModelSpec) -> DeepTCN:
    return DeepTCN(spec)

