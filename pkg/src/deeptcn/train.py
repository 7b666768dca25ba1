"""Adam, the minibatch training loop with model selection, and checkpoint files."""
from __future__ import annotations

import hashlib
import json
import logging
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .data import Batch, SeriesPanel, make_windows, series_scales, stack_windows
from .errors import CheckpointError, CheckpointVersionError, ConfigError, NumericError
from .heads import ForecastResult
from .model import DeepTCN, ModelSpec
from .tensor import Tensor

log = logging.getLogger(__name__)

MAGIC = b"DTCN"
VERSION = 1
SELECTION_MODES = ("validation", "test-tracking")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 1e-3
    epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    selection: str = "validation"
    # share of the training span held out for selection; None holds out the final horizon
    val_fraction: float | None = None
    patience: int | None = 30
    clip: bool = False
    clip_norm: float = 10.0
    stride: int = 1
    # windows drawn per epoch (seeded); None uses every window
    windows_per_epoch: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError("batch size must be at least 2 (batch norm needs batch statistics)")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or not self.adam_eps > 0:
            raise ConfigError("Adam betas must lie in [0, 1) and eps must be positive")
        if self.selection not in SELECTION_MODES:
            raise ConfigError(f"selection must be one of {SELECTION_MODES}, got {self.selection!r}")
        if self.selection == "validation" and self.val_fraction is not None and not 0 < self.val_fraction < 1:
            raise ConfigError(f"validation fraction must lie in (0, 1), got {self.val_fraction}")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be positive")
        if self.stride < 1:
            raise ConfigError("stride must be positive")
        if self.windows_per_epoch is not None and self.windows_per_epoch < 2:
            raise ConfigError("windows_per_epoch must be at least 2")

    @property
    def betas(self) -> tuple[float, float]:
        return self.beta1, self.beta2

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState | None,
              lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
              names: Sequence[str] | None = None) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new parameter arrays and state."""
    if len(params) != len(grads):
        raise ConfigError(f"{len(params)} parameters but {len(grads)} gradients")
    if state is None:
        state = AdamState([np.zeros(p.shape) for p in params], [np.zeros(p.shape) for p in params])
    names = names or [f"param{i}" for i in range(len(params))]
    for p, g, m, name in zip(params, grads, state.m, names):
        if p.shape != g.shape or p.shape != m.shape:
            raise ConfigError(f"{name}: shapes of parameter {p.shape}, gradient {g.shape}, state {m.shape} differ")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
    b1, b2 = betas
    t = state.step + 1
    c1, c2 = 1 - b1 ** t, 1 - b2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        if lr == 0:
            new_params.append(p)
        else:
            upd = lr * (m / c1) / (np.sqrt(v / c2) + eps)
            new_params.append((p - upd).astype(p.dtype))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)


class Adam:
    """Stateful wrapper applying :func:`adam_step` to named tensors in place."""

    def __init__(self, named_params: Sequence[tuple[str, Tensor]], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.names = [n for n, _ in named_params]
        self.params = [p for _, p in named_params]
        self.lr, self.betas, self.eps = lr, betas, eps
        self.state: AdamState | None = None

    def step(self, clip_norm: float | None = None) -> float:
        """Apply one update from the ``.grad`` slots; returns the global gradient norm."""
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]
        for g, name in zip(grads, self.names):
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {name}")
        norm = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))
        if clip_norm is not None and norm > clip_norm:
            grads = [g * (clip_norm / norm) for g in grads]
        new, self.state = adam_step([p.data for p in self.params], grads, self.state, self.lr,
                                    self.betas, self.eps, self.names)
        for p, arr in zip(self.params, new):
            p.data = arr
        return norm


# --------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: DeepTCN
    history: list[dict]
    best_epoch: int
    runtime: float = 0.0
    n_windows: int = 0
    n_selection: int = 0
    skipped: int = 0
    extra: dict = field(default_factory=dict)


def loss_name(head: str) -> str:
    return "pinball" if head == "quantile" else "nll"


def selection_split(panel: SeriesPanel, spec: ModelSpec, cfg: TrainConfig, train_end: int):
    """(training target range, selection target range) as global positions."""
    horizon = spec.horizon
    if cfg.selection == "test-tracking":
        if train_end >= panel.n_steps:
            raise ConfigError("test-tracking selection needs data after the training range")
        return (0, train_end), (train_end, panel.n_steps)
    span = train_end - int(panel.starts.min())
    held = horizon if cfg.val_fraction is None else max(horizon, int(round(cfg.val_fraction * span)))
    if held >= span:
        raise ConfigError(f"validation range of {held} steps leaves no training data")
    return (0, train_end - held), (train_end - held, train_end)


def evaluate_loss(model: DeepTCN, batch: Batch, batch_size: int = 1024) -> tuple[float, float]:
    """Inference-mode mean loss and mean absolute error (scaled space)."""
    total, l1, n = 0.0, 0.0, len(batch)
    for lo in range(0, n, batch_size):
        part = batch.take(slice(lo, lo + batch_size))
        loss, point = model.loss(part, training=False)
        total += loss.item() * len(part)
        l1 += float(np.mean(np.abs(point - part.target))) * len(part)
    return total / n, l1 / n


def train(panel: SeriesPanel, spec: ModelSpec, cfg: TrainConfig, train_end: int | None = None,
          model: DeepTCN | None = None, progress=None) -> TrainResult:
    """Fit a model on windows whose targets end before ``train_end``.

    Each epoch shuffles the windows with the spec's seed, runs Adam over
    minibatches, then scores the selection windows. The parameters of the
    epoch with the lowest selection loss are restored at the end.
    """
    spec.schema.check_panel(panel)
    train_end = panel.n_steps if train_end is None else int(train_end)
    (tr_lo, tr_hi), (sel_lo, sel_hi) = selection_split(panel, spec, cfg, train_end)
    scales = series_scales(panel, train_end)
    windows = make_windows(panel, spec.schema, spec.input_length, spec.horizon, cfg.stride, (tr_lo, tr_hi), scales)
    if len(windows) < 2:
        raise ConfigError(f"training range yields {len(windows)} windows; need at least 2")
    sel_windows = make_windows(panel, spec.schema, spec.input_length, spec.horizon, spec.horizon,
                               (sel_lo, sel_hi), scales)
    if not sel_windows:
        raise ConfigError("selection range yields no windows")
    data, sel = stack_windows(windows), stack_windows(sel_windows)

    model = model or DeepTCN(spec)
    model.scales = {sid: float(s) for sid, s in zip(panel.ids, scales)}
    opt = Adam(list(model.named_parameters()), cfg.learning_rate, cfg.betas, cfg.adam_eps)
    rng = model.rng_state.generator(1)
    name = loss_name(spec.head)
    history: list[dict] = []
    best = (np.inf, -1, None)
    started = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(data))
        if cfg.windows_per_epoch is not None:
            order = order[:cfg.windows_per_epoch]
        n_batches = len(order) // cfg.batch_size + (len(order) % cfg.batch_size >= 2)
        tot_loss = tot_l1 = 0.0
        seen = 0
        for b in range(n_batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            batch = data.take(idx)
            try:
                with T.Tape() as tape:
                    loss, point = model.loss(batch, training=True)
                model.zero_grad()
                tape.backward(loss)
                opt.step(cfg.clip_norm if cfg.clip else None)
            except NumericError as err:
                raise NumericError(f"epoch {epoch}, batch {b}: {err}") from err
            tot_loss += loss.item() * len(idx)
            tot_l1 += float(np.mean(np.abs(point - batch.target))) * len(idx)
            seen += len(idx)
        sel_loss, sel_l1 = evaluate_loss(model, sel)
        if not np.isfinite(sel_loss):
            raise NumericError(f"epoch {epoch}: selection loss is not finite")
        row = {"epoch": epoch, f"train_{name}": tot_loss / seen, "train_l1": tot_l1 / seen,
               f"selection_{name}": sel_loss, "selection_l1": sel_l1,
               "seconds": time.perf_counter() - t0}
        history.append(row)
        if progress:
            progress(row)
        if sel_loss < best[0]:
            best = (sel_loss, epoch, model.state_dict())
        elif cfg.patience is not None and epoch - best[1] >= cfg.patience:
            log.info("early stop at epoch %d; best epoch %d", epoch, best[1])
            break
    model.load_state_dict(best[2])
    chosen = history[best[1] - 1]
    model.metadata = {
        "epoch": best[1],
        "epochs_run": len(history),
        "selection": cfg.selection,
        "train_loss": chosen[f"train_{name}"],
        "train_l1": chosen["train_l1"],
        "selection_loss": chosen[f"selection_{name}"],
        "train_end": train_end,
        "config": cfg.to_dict(),
    }
    return TrainResult(model, history, best[1], time.perf_counter() - started,
                       len(windows), len(sel_windows), windows.skipped)


def forecast(model: DeepTCN, panel: SeriesPanel, series_ids: Sequence[str] | None, origin) -> list[ForecastResult]:
    return model.forecast(panel, series_ids, origin)


# --------------------------------------------------------------------------
# checkpoints


def _checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def checkpoint_bytes(model: DeepTCN) -> bytes:
    """Serialize parameters, buffers, spec, scales and metadata deterministically."""
    state = model.state_dict()
    directory, chunks, offset = [], [], 0
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f4")
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    payload = b"".join(chunks)
    header = {
        "spec": model.spec.to_dict(),
        "rng": model.rng_state.to_dict(),
        "tensors": directory,
        "payload_bytes": len(payload),
        "scales": model.scales,
        "metadata": model.metadata,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(head)) + head + payload + struct.pack("<Q", _checksum(payload))


def save_checkpoint(model: DeepTCN, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(model))
    return path


def model_from_bytes(raw: bytes, source: str = "<bytes>") -> DeepTCN:
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{source}: not a checkpoint file")
    version, head_len = struct.unpack("<IQ", raw[4:16])
    if version != VERSION:
        raise CheckpointVersionError(f"{source}: checkpoint version {version}, this build reads version {VERSION}")
    if len(raw) < 16 + head_len:
        raise CheckpointError(f"{source}: truncated header")
    try:
        header = json.loads(raw[16:16 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"{source}: corrupt header ({err})") from None
    size = header["payload_bytes"]
    body = raw[16 + head_len:]
    if len(body) != size + 8:
        raise CheckpointError(f"{source}: payload is {len(body) - 8} bytes, header says {size}")
    payload = body[:size]
    (stored,) = struct.unpack("<Q", body[size:])
    if stored != _checksum(payload):
        raise CheckpointError(f"{source}: payload checksum mismatch")
    state = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=entry["offset"])
        state[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float32)
    spec = ModelSpec.from_dict(header["spec"])
    model = DeepTCN(spec)
    model.load_state_dict(state)
    model.scales = {k: float(v) for k, v in header["scales"].items()}
    model.metadata = header["metadata"]
    return model


def load_checkpoint(path) -> DeepTCN:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"{path}: no such checkpoint") from None
    return model_from_bytes(raw, str(path))
