"""Finite-difference gradient oracle suite over every differentiable op and the full model.

Each case draws a random configuration, reduces the op output to a scalar
with a random weight tensor (so no gradient is identically zero by
symmetry) and compares tape gradients with central differences in 64-bit.
Configurations whose difference stencil crosses a relu kink are redrawn,
since finite differences are meaningless there, as are configurations with
a nonzero gradient component too small to resolve against the float64
roundoff of the objective. The full model is checked along random
directions through all of its parameters at once.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import tensor as T
from .data import Batch, CategoricalFeature, CovariateSchema
from .heads import gaussian_batch_loss, quantile_batch_loss
from .layers import BatchNorm, CausalConv1d, Dense, Embedding, EncoderBlock, ResnetV
from .model import DeepTCN, ModelSpec
from .tensor import Tape, Tensor, grad_check, kink_probe, precision

TOLERANCE = 1e-6
# central-difference step: balances float64 roundoff against truncation error
EPS = 1e-4
# smooth ops with large third derivatives prefer a smaller step
CASE_EPS = {"elementwise": 1e-5, "gaussian_loss": 1e-5, "quantile_loss": 1e-5, "composite": 1e-5}
# each check keeps its best step: truncation and roundoff trade off differently per component
STEPS = (1e-3, 1e-4, 1e-5, 1e-6)
COMPOSITE_DIRECTIONS = 24
# a component is resolvable when the loss change it causes over the stencil
# exceeds float64 roundoff of the loss by this factor (margin for one smaller step)
RESOLVE = 1e8

Check = tuple[str, Callable[[Tensor], Tensor], np.ndarray]


@dataclass
class OpResult:
    op: str
    configs: int
    checks: int
    max_rel_err: float
    seconds: float
    worst: str = ""
    redrawn: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_err < TOLERANCE


def _project(out: Tensor, w: np.ndarray) -> Tensor:
    return T.tsum(T.mul(out, Tensor(w)))


def _weights(rng, shape) -> np.ndarray:
    """Projection weights bounded away from zero, so linear ops have no tiny gradients."""
    return rng.uniform(0.5, 1.5, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _swap(module, name: str, f: Callable[[], Tensor]) -> Callable[[Tensor], Tensor]:
    """Objective of a module parameter: substitute the leaf, evaluate, restore."""
    def objective(leaf: Tensor) -> Tensor:
        old = getattr(module, name)
        setattr(module, name, leaf)
        module._params[name] = leaf
        try:
            return f()
        finally:
            setattr(module, name, old)
            module._params[name] = old
    return objective


def _params(module, names, f) -> Iterator[Check]:
    for name in names:
        yield name, _swap(module, name, f), getattr(module, name).data.copy()


# --------------------------------------------------------------------------
# cases: each takes a generator and returns a list of checks


def case_elementwise(rng) -> list[Check]:
    shape = tuple(rng.integers(1, 5, size=rng.integers(1, 4)))
    a, b = rng.normal(size=shape), rng.normal(size=shape)
    pos = rng.uniform(0.5, 2.0, size=shape)
    den = pos * rng.choice([-1, 1], size=shape)
    w = _weights(rng, shape)
    return [
        ("add", lambda x: _project(T.add(x, Tensor(b)), w), a),
        ("sub", lambda x: _project(T.sub(Tensor(b), x), w), a),
        ("mul", lambda x: _project(T.mul(x, Tensor(b)), w), a),
        ("div.numerator", lambda x: _project(T.div(x, Tensor(den)), w), a),
        ("div.denominator", lambda x: _project(T.div(Tensor(b), x), w), den),
        ("exp", lambda x: _project(T.exp(x), w), a),
        ("log", lambda x: _project(T.log(x), w), pos),
        ("square", lambda x: _project(T.square(x), w), a),
        ("scalar", lambda x: T.add(T.mul(T.tsum(T.mul(x, Tensor(w))), 3.0), 1.0), a),
    ]


def case_relu(rng) -> list[Check]:
    shape = tuple(rng.integers(1, 6, size=rng.integers(1, 4)))
    x = rng.uniform(0.05, 2.0, size=shape) * rng.choice([-1, 1], size=shape)
    w = _weights(rng, shape)
    return [("relu", lambda t: _project(T.relu(t), w), x)]


def case_softplus(rng) -> list[Check]:
    shape = tuple(rng.integers(1, 6, size=rng.integers(1, 4)))
    x = rng.normal(scale=3.0, size=shape)
    w = _weights(rng, shape)
    return [("softplus", lambda t: _project(T.softplus(t), w), x)]


def case_matmul(rng) -> list[Check]:
    n, k, m = rng.integers(1, 6, size=3)
    a, b = rng.normal(size=(n, k)), rng.normal(size=(k, m))
    w = _weights(rng, (n, m))
    return [
        ("matmul.left", lambda x: _project(T.matmul(x, Tensor(b)), w), a),
        ("matmul.right", lambda x: _project(T.matmul(Tensor(a), x), w), b),
    ]


def case_reduce_shape(rng) -> list[Check]:
    shape = tuple(int(s) for s in rng.integers(2, 5, size=3))
    x = rng.normal(size=shape)
    axis = int(rng.integers(0, 3))
    perm = tuple(int(p) for p in rng.permutation(3))
    other = rng.normal(size=shape)
    w_sum = _weights(rng, shape[:axis] + shape[axis + 1:])
    w_perm = _weights(rng, tuple(shape[p] for p in perm))
    w_cat = _weights(rng, shape[:axis] + (2 * shape[axis],) + shape[axis + 1:])
    w_exp = _weights(rng, shape[:1] + (3,) + shape[1:])
    w_item = _weights(rng, (shape[0], shape[2]))
    w_flat, w_full = _weights(rng, (x.size,)), _weights(rng, shape)
    return [
        ("sum", lambda t: _project(T.tsum(t, axis), w_sum), x),
        ("mean", lambda t: _project(T.mean(t, axis), w_sum), x),
        ("transpose", lambda t: _project(T.transpose(t, perm), w_perm), x),
        ("reshape", lambda t: _project(T.reshape(t, (-1,)), w_flat), x),
        ("concat", lambda t: _project(T.concat([t, Tensor(other)], axis), w_cat), x),
        ("expand", lambda t: _project(T.expand(t, 1, 3), w_exp), x),
        ("getitem", lambda t: _project(T.getitem(t, (slice(None), 1, slice(None))), w_item), x),
        ("bias_add", lambda t: _project(T.bias_add(Tensor(x), t, axis), w_full), rng.normal(size=shape[axis])),
    ]


def case_conv(rng) -> list[Check]:
    b, c, o, k = (int(v) for v in rng.integers(1, 4, size=4))
    d = int(rng.choice([1, 2, 3, 4]))
    t = int(rng.integers(k * d, k * d + 6))
    x, w = rng.normal(size=(b, c, t)), rng.normal(size=(o, c, k))
    wo = _weights(rng, (b, o, t))
    return [
        ("conv.input", lambda v: _project(T.causal_conv1d(v, Tensor(w), d), wo), x),
        ("conv.weight", lambda v: _project(T.causal_conv1d(Tensor(x), v, d), wo), w),
    ]


def case_conv_layer(rng) -> list[Check]:
    c, o, k = (int(v) for v in rng.integers(1, 4, size=3))
    d = int(rng.choice([1, 2, 4]))
    x = rng.normal(size=(2, c, k * d + 3))
    layer = CausalConv1d(c, o, k, d, rng)
    wo = _weights(rng, (2, o, x.shape[2]))
    f = lambda: _project(layer(Tensor(x)), wo)
    return [("conv_layer.input", lambda v: _project(layer(v), wo), x), *_params(layer, ["weight", "bias"], f)]


def case_batchnorm(rng) -> list[Check]:
    ch = int(rng.integers(1, 4))
    ndim = int(rng.integers(2, 4))
    axis = int(rng.integers(0, ndim)) if ndim == 3 else 1
    shape = [int(s) for s in rng.integers(3, 6, size=ndim)]     # >= 3 values per channel
    shape[axis] = ch
    x = rng.normal(loc=rng.normal(), scale=rng.uniform(0.5, 2), size=shape)
    bn = BatchNorm(ch, axis=axis)
    bn.gamma.data = rng.uniform(0.5, 1.5, size=ch)
    bn.beta.data = rng.normal(size=ch)
    w = _weights(rng, shape)
    f = lambda: _project(bn(Tensor(x), True), w)
    return [("bn_train.input", lambda v: _project(bn(v, True), w), x), *_params(bn, ["gamma", "beta"], f),
            ("bn_infer.input", lambda v: _project(bn(v, False), w), x)]


def case_dense(rng) -> list[Check]:
    i, o = (int(v) for v in rng.integers(1, 6, size=2))
    lead = tuple(int(v) for v in rng.integers(1, 4, size=rng.integers(1, 3)))
    x = rng.normal(size=lead + (i,))
    layer = Dense(i, o, rng)
    layer.bias.data = rng.normal(size=o)
    w = _weights(rng, lead + (o,))
    f = lambda: _project(layer(Tensor(x)), w)
    return [("dense.input", lambda v: _project(layer(v), w), x), *_params(layer, ["weight", "bias"], f)]


def case_embedding(rng) -> list[Check]:
    v, e = int(rng.integers(1, 8)), int(rng.integers(1, 5))
    idx = rng.integers(0, v, size=int(rng.integers(1, 10)))
    emb = Embedding(v, e, rng, "cat")
    emb.table.data = rng.normal(size=(v, e))
    w = _weights(rng, (len(idx), e))
    f = lambda: _project(emb(idx), w)
    return list(_params(emb, ["table"], f))


def case_quantile_loss(rng) -> list[Check]:
    b, h = (int(v) for v in rng.integers(1, 5, size=2))
    levels = tuple(sorted(rng.choice(np.arange(1, 20) / 20, size=int(rng.integers(1, 4)), replace=False)))
    y = rng.normal(size=(b, h))
    preds = y[..., None] + rng.uniform(0.05, 1.0, size=(b, h, len(levels))) * rng.choice([-1, 1], size=(b, h, len(levels)))
    return [("quantile_loss", lambda p: quantile_batch_loss(y, p, levels), preds)]


def case_gaussian_loss(rng) -> list[Check]:
    b, h = (int(v) for v in rng.integers(1, 5, size=2))
    y, mu = rng.normal(size=(b, h)), rng.normal(size=(b, h))
    sigma = rng.uniform(0.3, 2.0, size=(b, h))
    raw = rng.normal(size=(b, h))
    return [
        ("gaussian_nll.mu", lambda m: gaussian_batch_loss(y, m, Tensor(sigma)), mu),
        ("gaussian_nll.sigma", lambda s: gaussian_batch_loss(y, Tensor(mu), s), sigma),
        ("gaussian_nll.softplus", lambda r: gaussian_batch_loss(y, Tensor(mu), T.softplus(r)), raw),
    ]


def case_blocks(rng) -> list[Check]:
    c_in, ch = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    d = int(rng.choice([1, 2, 4]))
    x = rng.normal(size=(3, c_in, 2 * d + 4))
    block = EncoderBlock(c_in, ch, 2, d, rng)
    wo = _weights(rng, (3, ch, x.shape[2]))
    f_in, hid, lat, hor = int(rng.integers(1, 4)), int(rng.integers(2, 5)), int(rng.integers(1, 4)), int(rng.integers(2, 5))
    res = ResnetV(f_in, hid, lat, rng)
    h, xf = rng.normal(size=(4, lat)), rng.normal(size=(4, hor, f_in))
    wr = _weights(rng, (4, hor, lat))
    fb = lambda: _project(block(Tensor(x), True), wo)
    return [
        ("encoder_block.input", lambda v: _project(block(v, True), wo), x),
        ("encoder_block.conv1", _swap(block.conv1, "weight", fb), block.conv1.weight.data.copy()),
        ("resnet_v.latent", lambda v: _project(res(v, Tensor(xf), True), wr), h),
        ("resnet_v.covariates", lambda v: _project(res(Tensor(h), v, True), wr), xf),
    ]


def case_composite(rng) -> list[Check]:
    """Full encoder-decoder network with either head, against parameters along the whole path."""
    head = "quantile" if rng.uniform() < 0.5 else "gaussian"
    schema = CovariateSchema("daily", ("day_of_week",), False, (CategoricalFeature("cat", 3, 2),))
    spec = ModelSpec(12, int(rng.choice([3, 5])), schema, dilations=(1, 2, 4), channels=int(rng.integers(2, 4)),
                     head=head, quantiles=(0.1, 0.5, 0.9), seed=int(rng.integers(0, 2**31)))
    model = DeepTCN(spec, rng)
    if head == "gaussian":
        model.head.dense.bias.data[1] = 1.0       # start with sigma near one
        model.head.dense.weight.data[:, 1] *= 0.1
    b = 3                                           # odd point count: no quantile balances exactly
    batch = Batch(rng.normal(size=(b, 12)), rng.normal(size=(b, 12, 2)), rng.normal(size=(b, spec.horizon, 2)),
                  rng.permutation(3)[:, None])
    # targets straddle the initial point forecast so loss slopes differ between points
    out = model(batch, training=True)
    centre = out.data[..., 1] if head == "quantile" else out[0].data
    batch.target = centre + rng.normal(scale=0.5, size=centre.shape)
    return [(f"composite.{head}", _directions(model, lambda: model.loss(batch, training=True)[0], rng),
             np.zeros(COMPOSITE_DIRECTIONS))]


def _owners(module) -> Iterator[tuple[object, str]]:
    for name in module._params:
        yield module, name
    for child in module._children.values():
        yield from _owners(child)


def _directions(model, f: Callable[[], Tensor], rng) -> Callable[[Tensor], Tensor]:
    """Objective of coefficients along random directions through all parameters jointly.

    Each checked component is a random projection of the full gradient, so it
    is never vanishingly small next to the float64 roundoff of the loss.
    """
    owners = list(_owners(model))
    k = COMPOSITE_DIRECTIONS
    bases = [(getattr(m, n).data.copy(), rng.normal(size=(k, getattr(m, n).data.size)) / np.sqrt(k))
             for m, n in owners]

    def objective(alpha: Tensor) -> Tensor:
        row = T.reshape(alpha, (1, k))
        olds = [getattr(m, n) for m, n in owners]
        for (m, n), (p0, d) in zip(owners, bases):
            p = T.add(Tensor(p0), T.reshape(T.matmul(row, Tensor(d)), p0.shape))
            setattr(m, n, p)
            m._params[n] = p
        try:
            return f()
        finally:
            for (m, n), old in zip(owners, olds):
                setattr(m, n, old)
                m._params[n] = old
    return objective


CASES: dict[str, Callable[[np.random.Generator], list[Check]]] = {
    "elementwise": case_elementwise,
    "relu": case_relu,
    "softplus": case_softplus,
    "matmul": case_matmul,
    "reduce_shape": case_reduce_shape,
    "conv": case_conv,
    "conv_layer": case_conv_layer,
    "batchnorm": case_batchnorm,
    "dense": case_dense,
    "embedding": case_embedding,
    "quantile_loss": case_quantile_loss,
    "gaussian_loss": case_gaussian_loss,
    "blocks": case_blocks,
    "composite": case_composite,
}


def _watch_kinks(f: Callable[[Tensor], Tensor], patterns: set) -> Callable[[Tensor], Tensor]:
    """Wrap ``f`` so every evaluation records the on/off pattern of all relu units."""
    def wrapped(x: Tensor) -> Tensor:
        with kink_probe() as masks:
            out = f(x)
        patterns.add(b"".join(np.packbits(m).tobytes() + bytes(str(m.shape), "ascii") for m in masks))
        return out
    return wrapped


def _resolvable(f: Callable[[Tensor], Tensor], x0: np.ndarray, eps: float) -> bool:
    """Whether every nonzero gradient component moves the loss well above its float64 roundoff."""
    leaf = Tensor(x0, requires_grad=True)
    with Tape() as tape:
        y = f(leaf)
    (g,) = tape.gradient(y, [leaf])
    floor = RESOLVE * np.finfo(np.float64).eps * max(1.0, abs(y.item())) / eps
    g = np.abs(g)
    return bool(np.all((g == 0) | (g >= floor)))


def check_op(name: str, configs: int = 20, seed: int = 0, eps: float | None = None) -> OpResult:
    """Run ``configs`` seeded random configurations of one case.

    A configuration is redrawn when every step's difference stencil switches
    a relu unit relative to the others (the stencil straddles a kink), or when some gradient component is too small for central differences to
    resolve to the tolerance in float64. Each check reports the best agreement
    over the step ladder ``STEPS`` (or the single ``eps`` given); steps whose
    stencil straddles a kink are skipped.
    """
    steps = STEPS if eps is None else (eps,)
    eps = CASE_EPS.get(name, EPS) if eps is None else eps
    started = time.perf_counter()
    rng = np.random.default_rng([seed, sum(map(ord, name))])
    worst, label, n_checks, redrawn = 0.0, "", 0, 0
    with precision(np.float64):
        done = 0
        while done < configs:
            results = []
            smooth = True
            for lab, f, x0 in CASES[name](rng):
                if not _resolvable(f, x0, eps):
                    smooth = False
                    break
                errs = []
                for step in steps:
                    patterns: set = set()
                    err = grad_check(_watch_kinks(f, patterns), x0, step)
                    if len(patterns) <= 1:
                        errs.append(err)
                if not errs:
                    smooth = False
                    break
                results.append((min(errs), lab))
            if not smooth:
                redrawn += 1
                continue
            for err, lab in results:
                n_checks += 1
                if err >= worst:
                    worst, label = err, lab
            done += 1
    return OpResult(name, configs, n_checks, worst, time.perf_counter() - started, label, redrawn)


def run_suite(configs: int = 20, seed: int = 0, ops=None, eps: float | None = None) -> list[OpResult]:
    return [check_op(name, configs, seed, eps) for name in (ops or CASES)]
