"""Dense neural network engine and the siamese distance-learning models.

Everything is plain numpy: fully connected stacks with
relu/sigmoid/softmax/linear activations, explicit backpropagation, and
Adam with bias correction.  The metric model runs both nets of a pair
through one shared pair of encoder stacks (Laplacian and preference
matrix), concatenates the latent codes, and feeds a dense head that ends
in an m-way softmax (classification into distance intervals) or a single
sigmoid unit (regression of the normalized distance).

Two pretraining variants reconstruct the encodings: "separate" trains one
autoencoder per input type, "siamese" concatenates both latent codes and
decodes each component from the combined code.  Their encoder weights can
be transferred into a metric model before fine-tuning.

Parameters live in one flat buffer per model (float64 by default,
float32 for faster training at checkpoint precision); the public
``params`` dict holds named views into it, which keeps the Adam update a
handful of vector operations regardless of layer count.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field

import numpy as np

try:  # keep BLAS single-threaded inside training loops; small matrices thrash
    from threadpoolctl import threadpool_limits as _threadpool_limits
except ImportError:  # perf-only, training works without it
    import contextlib

    def _threadpool_limits(limits=None):
        return contextlib.nullcontext()

from . import encoding
from .cpnet import CPNet

ACTIVATIONS = ("relu", "sigmoid", "softmax", "linear")

CLASSIFICATION = "classification"
REGRESSION = "regression"

SEPARATE = "separate"
SIAMESE = "siamese"

DEFAULT_ENC_HIDDEN = (128, 64, 32)
DEFAULT_HEAD_HIDDEN = (64, 32)
DEFAULT_DEC_HIDDEN = (64, 128)

LOG_CLAMP = 1e-12

CHECKPOINT_MAGIC = b"CPMM"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError("layer dimensions must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class TrainConfig:
    epochs: int = 70
    batch_size: int = 128
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


class ParamStore:
    """Named parameter arrays backed by one contiguous buffer."""

    def __init__(self, shapes: dict, dtype=np.float64):
        self.spans = {}
        offset = 0
        for key, shape in shapes.items():
            size = int(np.prod(shape))
            self.spans[key] = (offset, offset + size, tuple(shape))
            offset += size
        self.flat = np.zeros(offset, dtype=dtype)
        self.views = {
            key: self.flat[a:b].reshape(shape)
            for key, (a, b, shape) in self.spans.items()
        }

    @property
    def dtype(self):
        return self.flat.dtype

    def like(self) -> "ParamStore":
        return ParamStore(
            {k: shape for k, (_, _, shape) in self.spans.items()}, self.dtype
        )

    def mask_for(self, prefixes: tuple) -> np.ndarray:
        mask = np.ones_like(self.flat)
        for key, (a, b, _) in self.spans.items():
            if any(key.startswith(pfx) for pfx in prefixes):
                mask[a:b] = 0.0
        return mask


def _stack_shapes(name: str, specs) -> dict:
    shapes = {}
    for li, spec in enumerate(specs):
        shapes[f"{name}/{li}/W"] = (spec.in_dim, spec.out_dim)
        shapes[f"{name}/{li}/b"] = (spec.out_dim,)
    return shapes


def _dense_specs(in_dim: int, hidden, out_dim: int, out_act: str) -> tuple:
    dims = [in_dim, *hidden, out_dim]
    acts = ["relu"] * len(hidden) + [out_act]
    return tuple(
        LayerSpec(dims[i], dims[i + 1], acts[i]) for i in range(len(dims) - 1)
    )


def _init_stack(params: dict, name: str, specs, rng: np.random.Generator) -> None:
    # fan-in scaled uniform init, biases at zero
    for li, spec in enumerate(specs):
        bound = np.sqrt(6.0 / spec.in_dim)
        params[f"{name}/{li}/W"][...] = rng.uniform(
            -bound, bound, size=(spec.in_dim, spec.out_dim)
        )
        params[f"{name}/{li}/b"][...] = 0.0


def _apply_activation(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "softmax":
        shifted = z - z.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)
    return z  # linear


def stack_forward(params: dict, name: str, specs, x: np.ndarray, cache=None):
    a = x
    for li, spec in enumerate(specs):
        z = a @ params[f"{name}/{li}/W"] + params[f"{name}/{li}/b"]
        a_out = _apply_activation(spec.activation, z)
        if cache is not None:
            cache.append((a, z, a_out))
        a = a_out
    return a


def stack_backward(
    params: dict,
    name: str,
    specs,
    cache: list,
    d: np.ndarray,
    grads: dict,
    d_is_dz_last: bool = False,
    need_input_grad: bool = True,
) -> np.ndarray | None:
    """Backpropagate through one stack, accumulating parameter gradients.

    ``d`` is dL/d(output); set ``d_is_dz_last`` when the caller already
    folded the output activation into ``d`` (softmax or sigmoid fused with
    the loss).  Returns dL/d(input), or None when ``need_input_grad`` is
    off (saves one matrix product at the first layer).
    """
    for li in reversed(range(len(specs))):
        a_in, z, a_out = cache[li]
        act = specs[li].activation
        if li == len(specs) - 1 and d_is_dz_last:
            dz = d
        elif act == "relu":
            dz = d * (z > 0)
        elif act == "sigmoid":
            dz = d * (a_out * (1.0 - a_out))
        elif act == "linear":
            dz = d
        else:
            raise ValueError(
                "softmax gradients are only available fused with cross-entropy"
            )
        wkey, bkey = f"{name}/{li}/W", f"{name}/{li}/b"
        dw = a_in.T @ dz
        db = dz.sum(axis=0)
        if wkey in grads:
            grads[wkey] += dw
            grads[bkey] += db
        else:
            grads[wkey] = dw
            grads[bkey] = db
        if li == 0 and not need_input_grad:
            return None
        d = dz @ params[wkey].T
    return d


# --- losses ------------------------------------------------------------------


def loss(mode: str, output: np.ndarray, target: np.ndarray) -> float:
    """Cross-entropy against integer bin targets, or mean squared error."""
    if mode == CLASSIFICATION:
        labels = np.asarray(target, dtype=np.int64)
        if output.ndim != 2 or labels.shape != (output.shape[0],):
            raise ValueError("classification expects (B, m) output and (B,) labels")
        probs = np.clip(output[np.arange(len(labels)), labels], LOG_CLAMP, None)
        return float(-np.log(probs).mean())
    if mode == REGRESSION:
        pred = output[:, 0] if output.ndim == 2 else output
        target = np.asarray(target, dtype=np.float64)
        if pred.shape != target.shape:
            raise ValueError("regression output and target shapes differ")
        return float(np.mean((pred - target) ** 2))
    raise ValueError(f"unknown mode {mode!r}")


def _mse_elementwise(recon: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((recon - target) ** 2))


def _bce_elementwise(recon: np.ndarray, target: np.ndarray) -> float:
    # clamp must stay representable: 1 - 1e-12 rounds to 1.0 in float32
    eps = max(LOG_CLAMP, float(np.finfo(recon.dtype).eps))
    r = np.clip(recon, eps, 1.0 - eps)
    return float(-np.mean(target * np.log(r) + (1.0 - target) * np.log(1.0 - r)))


# --- siamese metric model ----------------------------------------------------


@dataclass
class Model:
    n: int
    mode: str
    m: int
    enc_lap: tuple
    enc_cpt: tuple
    head: tuple
    seed: int
    store: ParamStore = field(repr=False)

    @property
    def params(self) -> dict:
        return self.store.views

    @property
    def dtype(self):
        return self.store.dtype

    @property
    def latent_dim(self) -> int:
        return self.enc_lap[-1].out_dim + self.enc_cpt[-1].out_dim

    def stack_specs(self) -> dict:
        return {"enc_lap": self.enc_lap, "enc_cpt": self.enc_cpt, "head": self.head}


def _model_store(enc_lap, enc_cpt, head, dtype) -> ParamStore:
    shapes = {}
    shapes.update(_stack_shapes("enc_lap", enc_lap))
    shapes.update(_stack_shapes("enc_cpt", enc_cpt))
    shapes.update(_stack_shapes("head", head))
    return ParamStore(shapes, dtype)


def build_model(
    n: int,
    mode: str,
    m: int = 10,
    enc_hidden=DEFAULT_ENC_HIDDEN,
    head_hidden=DEFAULT_HEAD_HIDDEN,
    seed: int = 0,
    dtype=np.float64,
) -> Model:
    """Siamese metric model with freshly initialized weights.

    Both nets of a pair pass through the same encoder parameters; the head
    consumes the concatenation of the two latent codes (dim 2 x latent).
    ``dtype=np.float32`` roughly halves training time at checkpoint
    precision; float64 is the default and what gradient checks use.
    """
    if mode not in (CLASSIFICATION, REGRESSION):
        raise ValueError(f"unknown mode {mode!r}")
    lap_dim, cpt_dim = encoding.feature_dims(n)
    enc_lap = _dense_specs(lap_dim, enc_hidden[:-1], enc_hidden[-1], "relu")
    enc_cpt = _dense_specs(cpt_dim, enc_hidden[:-1], enc_hidden[-1], "relu")
    latent = enc_lap[-1].out_dim + enc_cpt[-1].out_dim
    if mode == CLASSIFICATION:
        head = _dense_specs(2 * latent, head_hidden, m, "softmax")
    else:
        head = _dense_specs(2 * latent, head_hidden, 1, "sigmoid")

    store = _model_store(enc_lap, enc_cpt, head, dtype)
    rng = np.random.default_rng([seed, 17])
    _init_stack(store.views, "enc_lap", enc_lap, rng)
    _init_stack(store.views, "enc_cpt", enc_cpt, rng)
    _init_stack(store.views, "head", head, rng)
    return Model(n, mode, m, enc_lap, enc_cpt, head, seed, store)


def _check_batch(model: Model, batch: dict) -> None:
    lap_dim, cpt_dim = encoding.feature_dims(model.n)
    want = {"lap_a": lap_dim, "cpt_a": cpt_dim, "lap_b": lap_dim, "cpt_b": cpt_dim}
    for key, dim in want.items():
        if batch[key].ndim != 2 or batch[key].shape[1] != dim:
            raise ValueError(
                f"{key} has shape {batch[key].shape}, expected (B, {dim})"
            )


def forward(model: Model, batch: dict, cache: dict | None = None) -> np.ndarray:
    """Run a batch of encoded pairs; returns (B, m) class probabilities or
    (B, 1) sigmoid outputs.

    The weight-shared branches are evaluated as one stacked pass per
    encoder: rows [0:B] carry net A, rows [B:2B] net B.
    """
    _check_batch(model, batch)
    caches = {k: [] for k in ("lap", "cpt", "head")} if cache is not None else None
    params = model.params
    B = batch["lap_a"].shape[0]

    h_lap = stack_forward(
        params, "enc_lap", model.enc_lap,
        np.concatenate([batch["lap_a"], batch["lap_b"]]),
        caches["lap"] if caches else None,
    )
    h_cpt = stack_forward(
        params, "enc_cpt", model.enc_cpt,
        np.concatenate([batch["cpt_a"], batch["cpt_b"]]),
        caches["cpt"] if caches else None,
    )
    joint = np.concatenate(
        [h_lap[:B], h_cpt[:B], h_lap[B:], h_cpt[B:]], axis=1
    )
    out = stack_forward(
        params, "head", model.head, joint, caches["head"] if caches else None
    )
    if cache is not None:
        cache.update(caches)
    return out


def _backward_into(model: Model, batch: dict, target: np.ndarray, grads: dict) -> float:
    """Accumulate gradients for one batch into ``grads``; returns the loss.

    The stacked branch rows backpropagate through each encoder in one
    pass, so both branches' contributions land in the shared weights.
    """
    cache: dict = {}
    out = forward(model, batch, cache)
    B = out.shape[0]
    params = model.params

    if model.mode == CLASSIFICATION:
        labels = np.asarray(target, dtype=np.int64)
        value = loss(CLASSIFICATION, out, labels)
        dz = out.copy()
        dz[np.arange(B), labels] -= 1.0
        dz /= B
    else:
        y = np.asarray(target, dtype=model.dtype)
        value = loss(REGRESSION, out, y)
        a = out[:, 0]
        dz = (2.0 * (a - y) / B * a * (1.0 - a))[:, None]

    d_joint = stack_backward(
        params, "head", model.head, cache["head"], dz, grads, d_is_dz_last=True
    )
    latent = model.latent_dim
    lap_latent = model.enc_lap[-1].out_dim
    d_lap = np.concatenate(
        [d_joint[:, :lap_latent], d_joint[:, latent:latent + lap_latent]]
    )
    d_cpt = np.concatenate(
        [d_joint[:, lap_latent:latent], d_joint[:, latent + lap_latent:]]
    )
    stack_backward(params, "enc_lap", model.enc_lap, cache["lap"], d_lap, grads,
                   need_input_grad=False)
    stack_backward(params, "enc_cpt", model.enc_cpt, cache["cpt"], d_cpt, grads,
                   need_input_grad=False)
    return value


def backward(model: Model, batch: dict, target: np.ndarray) -> tuple:
    """Loss and parameter gradients for one batch; returns (value, grads)."""
    grads: dict = {}
    value = _backward_into(model, batch, target, grads)
    return value, grads


# --- Adam --------------------------------------------------------------------


def adam_init(params: dict) -> dict:
    return {k: (np.zeros_like(v), np.zeros_like(v)) for k, v in params.items()}


def adam_step(
    params: dict, grads: dict, state: dict, cfg: TrainConfig, t: int,
) -> tuple:
    """One Adam update with bias correction (first/second moments).

    Updates in place and returns (params, state).  ``t`` counts steps from 1.
    """
    for key, g in grads.items():
        m, v = state[key]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * np.square(g)
        m_hat = m / (1.0 - cfg.beta1 ** t)
        v_hat = v / (1.0 - cfg.beta2 ** t)
        params[key] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return params, state


def _adam_step_flat(
    flat: np.ndarray,
    gflat: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    cfg: TrainConfig,
    t: int,
    mask: np.ndarray | None = None,
    scratch: np.ndarray | None = None,
) -> None:
    # same update as adam_step, on the whole parameter buffer at once
    if scratch is None:
        scratch = np.empty_like(flat)
    m *= cfg.beta1
    np.multiply(gflat, 1.0 - cfg.beta1, out=scratch)
    m += scratch
    v *= cfg.beta2
    np.multiply(gflat, gflat, out=scratch)
    scratch *= 1.0 - cfg.beta2
    v += scratch
    # scratch = lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    np.divide(v, 1.0 - cfg.beta2 ** t, out=scratch)
    np.sqrt(scratch, out=scratch)
    scratch += cfg.epsilon
    np.divide(m, scratch, out=scratch)
    scratch *= cfg.learning_rate / (1.0 - cfg.beta1 ** t)
    if mask is not None:
        scratch *= mask
    flat -= scratch


# --- training loops ----------------------------------------------------------


def _batch_slices(total: int, batch_size: int, order: np.ndarray):
    for start in range(0, total, batch_size):
        yield order[start:start + batch_size]


def pair_batch(
    features: np.ndarray, rows: np.ndarray, n: int, dtype=np.float64
) -> dict:
    blocks = encoding.split_features(features[rows], n)
    return {k: v.astype(dtype) for k, v in blocks.items()}


def evaluate_loss(
    model: Model, features: np.ndarray, target: np.ndarray, chunk: int = 4096
) -> float:
    total = features.shape[0]
    weighted = 0.0
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        rows = np.arange(start, stop)
        out = forward(model, pair_batch(features, rows, model.n, model.dtype))
        weighted += loss(model.mode, out, target[start:stop]) * (stop - start)
    return weighted / total


def train(
    model: Model,
    features: np.ndarray,
    target: np.ndarray,
    cfg: TrainConfig,
    val_features: np.ndarray | None = None,
    val_target: np.ndarray | None = None,
    freeze_encoders: bool = False,
) -> list:
    """Mini-batch Adam training; deterministic given the config seed.

    ``target`` holds bin indices (classification) or normalized distances
    (regression).  Returns per-epoch history dicts with train and
    validation loss; validation entries are None when no validation data
    is given.
    """
    total = features.shape[0]
    if total == 0:
        raise ValueError("empty training fold")
    if features.shape[1] != encoding.record_width(model.n) - 1:
        raise ValueError(
            f"feature width {features.shape[1]} does not match model n={model.n}"
        )
    target = np.asarray(target)
    mask = (
        model.store.mask_for(("enc_lap/", "enc_cpt/")) if freeze_encoders else None
    )

    gstore = model.store.like()
    m_state = np.zeros_like(model.store.flat)
    v_state = np.zeros_like(model.store.flat)
    scratch = np.empty_like(model.store.flat)
    rng = np.random.default_rng([cfg.seed, 29])
    history = []
    t = 0
    with _threadpool_limits(1):
        return _train_loop(
            model, features, target, cfg, val_features, val_target,
            gstore, m_state, v_state, scratch, mask, rng, history, t,
        )


def _train_loop(
    model, features, target, cfg, val_features, val_target,
    gstore, m_state, v_state, scratch, mask, rng, history, t,
):
    total = features.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(total)
        run_loss, seen = 0.0, 0
        for rows in _batch_slices(total, cfg.batch_size, order):
            batch = pair_batch(features, rows, model.n, model.dtype)
            gstore.flat[:] = 0.0
            value = _backward_into(model, batch, target[rows], gstore.views)
            t += 1
            _adam_step_flat(
                model.store.flat, gstore.flat, m_state, v_state, cfg, t, mask,
                scratch,
            )
            run_loss += value * len(rows)
            seen += len(rows)
        entry = {"epoch": epoch, "train_loss": run_loss / seen, "val_loss": None}
        if val_features is not None:
            entry["val_loss"] = evaluate_loss(model, val_features, val_target)
        history.append(entry)
    return history


# --- autoencoders ------------------------------------------------------------


@dataclass
class Autoencoder:
    """Reconstruction model over CP-net encodings.

    kind "separate" holds independent (encoder, decoder) pairs per input
    type trained in isolation; kind "siamese" decodes each input type from
    the concatenation of both latent codes.
    """

    n: int
    kind: str
    stacks: dict  # name -> tuple of LayerSpec
    seed: int
    store: ParamStore = field(repr=False)

    @property
    def params(self) -> dict:
        return self.store.views

    @property
    def dtype(self):
        return self.store.dtype


def build_autoencoder(
    n: int,
    kind: str,
    enc_hidden=DEFAULT_ENC_HIDDEN,
    dec_hidden=DEFAULT_DEC_HIDDEN,
    seed: int = 0,
    dtype=np.float64,
) -> Autoencoder:
    if kind not in (SEPARATE, SIAMESE):
        raise ValueError(f"unknown autoencoder variant {kind!r}")
    lap_dim, cpt_dim = encoding.feature_dims(n)
    enc_lap = _dense_specs(lap_dim, enc_hidden[:-1], enc_hidden[-1], "relu")
    enc_cpt = _dense_specs(cpt_dim, enc_hidden[:-1], enc_hidden[-1], "relu")
    latent = enc_hidden[-1]
    dec_in = 2 * latent if kind == SIAMESE else latent
    stacks = {
        "enc_lap": enc_lap,
        "enc_cpt": enc_cpt,
        # Laplacian entries are real-valued: linear output + MSE;
        # preference entries are 0/1: sigmoid output + binary cross-entropy.
        "dec_lap": _dense_specs(dec_in, dec_hidden, lap_dim, "linear"),
        "dec_cpt": _dense_specs(dec_in, dec_hidden, cpt_dim, "sigmoid"),
    }
    shapes = {}
    for name in ("enc_lap", "enc_cpt", "dec_lap", "dec_cpt"):
        shapes.update(_stack_shapes(name, stacks[name]))
    store = ParamStore(shapes, dtype)
    rng = np.random.default_rng([seed, 23])
    for name in ("enc_lap", "enc_cpt", "dec_lap", "dec_cpt"):
        _init_stack(store.views, name, stacks[name], rng)
    return Autoencoder(n, kind, stacks, seed, store)


def autoencoder_forward(ae: Autoencoder, lap: np.ndarray, cpt: np.ndarray, cache=None):
    caches = {k: [] for k in ae.stacks} if cache is not None else None
    params = ae.params

    def run(name, x):
        return stack_forward(
            params, name, ae.stacks[name], x, caches[name] if caches else None
        )

    h_lap = run("enc_lap", lap)
    h_cpt = run("enc_cpt", cpt)
    if ae.kind == SIAMESE:
        z = np.concatenate([h_lap, h_cpt], axis=1)
        recon_lap, recon_cpt = run("dec_lap", z), run("dec_cpt", z)
    else:
        recon_lap, recon_cpt = run("dec_lap", h_lap), run("dec_cpt", h_cpt)
    if cache is not None:
        cache.update(caches)
    return recon_lap, recon_cpt


def autoencoder_loss(ae: Autoencoder, lap, cpt, recon_lap, recon_cpt) -> dict:
    return {
        "lap": _mse_elementwise(recon_lap, lap),
        "cpt": _bce_elementwise(recon_cpt, cpt),
    }


def _autoencoder_backward_into(
    ae: Autoencoder, lap: np.ndarray, cpt: np.ndarray, grads: dict
) -> float:
    cache: dict = {}
    recon_lap, recon_cpt = autoencoder_forward(ae, lap, cpt, cache)
    parts = autoencoder_loss(ae, lap, cpt, recon_lap, recon_cpt)
    params = ae.params

    B = lap.shape[0]
    dz_lap = 2.0 * (recon_lap - lap) / (B * lap.shape[1])
    # sigmoid + BCE fold to (recon - target) / count
    dz_cpt = (recon_cpt - cpt) / (B * cpt.shape[1])

    d_lap_in = stack_backward(
        params, "dec_lap", ae.stacks["dec_lap"], cache["dec_lap"],
        dz_lap, grads, d_is_dz_last=True,
    )
    d_cpt_in = stack_backward(
        params, "dec_cpt", ae.stacks["dec_cpt"], cache["dec_cpt"],
        dz_cpt, grads, d_is_dz_last=True,
    )
    if ae.kind == SIAMESE:
        latent = ae.stacks["enc_lap"][-1].out_dim
        d = d_lap_in + d_cpt_in
        d_h_lap, d_h_cpt = d[:, :latent], d[:, latent:]
    else:
        d_h_lap, d_h_cpt = d_lap_in, d_cpt_in
    stack_backward(
        params, "enc_lap", ae.stacks["enc_lap"], cache["enc_lap"], d_h_lap, grads,
        need_input_grad=False,
    )
    stack_backward(
        params, "enc_cpt", ae.stacks["enc_cpt"], cache["enc_cpt"], d_h_cpt, grads,
        need_input_grad=False,
    )
    return parts["lap"] + parts["cpt"]


def autoencoder_backward(ae: Autoencoder, lap: np.ndarray, cpt: np.ndarray) -> tuple:
    """Total reconstruction loss (lap MSE + cpt BCE) and gradients."""
    grads: dict = {}
    value = _autoencoder_backward_into(ae, lap, cpt, grads)
    return value, grads


def autoencoder_inputs(features: np.ndarray, n: int, dtype=np.float64) -> tuple:
    """Reconstruction samples from encoded pairs: both halves of every pair."""
    blocks = encoding.split_features(features, n)
    lap = np.concatenate([blocks["lap_a"], blocks["lap_b"]]).astype(dtype)
    cpt = np.concatenate([blocks["cpt_a"], blocks["cpt_b"]]).astype(dtype)
    return lap, cpt


def _component_losses(ae: Autoencoder, lap, cpt, chunk: int = 4096) -> tuple:
    acc = np.zeros(2)
    for start in range(0, lap.shape[0], chunk):
        stop = min(start + chunk, lap.shape[0])
        rl, rc = autoencoder_forward(ae, lap[start:stop], cpt[start:stop])
        parts = autoencoder_loss(ae, lap[start:stop], cpt[start:stop], rl, rc)
        acc += np.array([parts["lap"], parts["cpt"]]) * (stop - start)
    acc /= lap.shape[0]
    return float(acc[0]), float(acc[1])


def pretrain_autoencoder(
    n: int,
    variant: str,
    lap: np.ndarray,
    cpt: np.ndarray,
    cfg: TrainConfig,
    val_lap: np.ndarray | None = None,
    val_cpt: np.ndarray | None = None,
    dtype=np.float64,
) -> tuple:
    """Train an autoencoder of the given variant; keep best-epoch weights.

    In the "separate" variant the two input types are independent models
    (their gradients never mix), so each keeps the weights of its own best
    epoch; the siamese variant shares one combined latent and keeps one
    best epoch for everything.  "Best" means lowest validation loss, or
    training loss when no validation data is given.  Returns
    (autoencoder, history, best_epochs) with history rows per epoch and
    best_epochs a dict per component.
    """
    if lap.shape[0] == 0:
        raise ValueError("empty pretraining set")
    ae = build_autoencoder(n, variant, seed=cfg.seed, dtype=dtype)
    lap = lap.astype(dtype, copy=False)
    cpt = cpt.astype(dtype, copy=False)
    if val_lap is not None:
        val_lap = val_lap.astype(dtype, copy=False)
        val_cpt = val_cpt.astype(dtype, copy=False)
    gstore = ae.store.like()
    m_state = np.zeros_like(ae.store.flat)
    v_state = np.zeros_like(ae.store.flat)
    scratch = np.empty_like(ae.store.flat)
    rng = np.random.default_rng([cfg.seed, 31])
    total = lap.shape[0]

    best = {}  # component -> (score, epoch, flat snapshot)
    history = []
    t = 0
    with _threadpool_limits(1):
        return _pretrain_loop(
            ae, variant, lap, cpt, cfg, val_lap, val_cpt,
            gstore, m_state, v_state, scratch, rng, best, history, t,
        )


def _pretrain_loop(
    ae, variant, lap, cpt, cfg, val_lap, val_cpt,
    gstore, m_state, v_state, scratch, rng, best, history, t,
):
    total = lap.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(total)
        run_loss, seen = 0.0, 0
        for rows in _batch_slices(total, cfg.batch_size, order):
            gstore.flat[:] = 0.0
            value = _autoencoder_backward_into(ae, lap[rows], cpt[rows], gstore.views)
            t += 1
            _adam_step_flat(
                ae.store.flat, gstore.flat, m_state, v_state, cfg, t, None, scratch
            )
            run_loss += value * len(rows)
            seen += len(rows)

        entry = {"epoch": epoch, "train_loss": run_loss / seen}
        if val_lap is not None:
            score_lap, score_cpt = _component_losses(ae, val_lap, val_cpt)
            entry["val_loss_lap"], entry["val_loss_cpt"] = score_lap, score_cpt
        else:
            score_lap, score_cpt = _component_losses(ae, lap, cpt)
            entry["train_loss_lap"], entry["train_loss_cpt"] = score_lap, score_cpt
        history.append(entry)

        if variant == SEPARATE:
            scored = {"lap": score_lap, "cpt": score_cpt}
        else:
            scored = {"all": score_lap + score_cpt}
        for component, score in scored.items():
            if component not in best or score < best[component][0]:
                best[component] = (score, epoch, ae.store.flat.copy())

    if variant == SEPARATE:
        # each independent model keeps its own best epoch
        for key, (a, b, _) in ae.store.spans.items():
            source = "lap" if key.startswith(("enc_lap/", "dec_lap/")) else "cpt"
            ae.store.flat[a:b] = best[source][2][a:b]
    else:
        ae.store.flat[:] = best["all"][2]
    best_epochs = {component: b[1] for component, b in best.items()}
    return ae, history, best_epochs


def encoder_params(ae: Autoencoder) -> dict:
    return {
        k: v for k, v in ae.params.items()
        if k.startswith("enc_lap/") or k.startswith("enc_cpt/")
    }


def transfer_weights(pretrained: dict, model: Model) -> Model:
    """Initialize the model's encoder stacks from pretrained weights.

    The head keeps its fresh initialization and nothing is frozen; pass
    ``freeze_encoders=True`` to :func:`train` to keep the transferred
    weights fixed.
    """
    for key, value in pretrained.items():
        if key not in model.params:
            raise ValueError(f"no parameter {key!r} in the target model")
        if model.params[key].shape != value.shape:
            raise ValueError(
                f"shape mismatch for {key!r}: model {model.params[key].shape}, "
                f"pretrained {value.shape}"
            )
        model.params[key][...] = value
    return model


# --- prediction --------------------------------------------------------------


def encode_input(nets: tuple, dtype=np.float64) -> dict:
    A, B = nets
    lap_a, cpt_a = encoding.net_features(A)
    lap_b, cpt_b = encoding.net_features(B)
    return {
        "lap_a": lap_a[None, :].astype(dtype),
        "cpt_a": cpt_a[None, :].astype(dtype),
        "lap_b": lap_b[None, :].astype(dtype),
        "cpt_b": cpt_b[None, :].astype(dtype),
    }


def predict(model: Model, pair: tuple):
    """Distance prediction for a pair of CP-nets: the interval index
    (classification) or the scalar distance (regression)."""
    A, B = pair
    if A.n != model.n or B.n != model.n:
        raise ValueError(
            f"model expects n={model.n}, got nets with n={A.n} and n={B.n}"
        )
    out = forward(model, encode_input(pair, model.dtype))
    if model.mode == CLASSIFICATION:
        return int(np.argmax(out[0]))
    return float(out[0, 0])


# --- checkpoint file ---------------------------------------------------------
#
# Layout: magic "CPMM", uint32 little-endian header length, UTF-8 JSON header
# (format version, n, m, mode, seed, stack specs, parameter order), then the
# parameters as little-endian float32 blobs concatenated in header order.


def _spec_list(specs) -> list:
    return [[s.in_dim, s.out_dim, s.activation] for s in specs]


def _spec_tuple(raw) -> tuple:
    return tuple(LayerSpec(i, o, a) for i, o, a in raw)


def save_model(model: Model, path) -> None:
    order = sorted(model.params)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "n": model.n,
        "m": model.m,
        "mode": model.mode,
        "seed": model.seed,
        "stacks": {k: _spec_list(v) for k, v in model.stack_specs().items()},
        "params": [[k, list(model.params[k].shape)] for k in order],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for key in order:
            f.write(model.params[key].astype("<f4").tobytes())


def load_model(path, dtype=np.float64) -> Model:
    with open(path, "rb") as f:
        if f.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a model checkpoint")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {header.get('format_version')}"
            )
        enc_lap = _spec_tuple(header["stacks"]["enc_lap"])
        enc_cpt = _spec_tuple(header["stacks"]["enc_cpt"])
        head = _spec_tuple(header["stacks"]["head"])
        store = _model_store(enc_lap, enc_cpt, head, dtype)
        for key, shape in header["params"]:
            count = int(np.prod(shape))
            raw = np.frombuffer(f.read(4 * count), dtype="<f4")
            if key not in store.views:
                raise ValueError(f"checkpoint holds unknown parameter {key!r}")
            store.views[key][...] = raw.reshape(shape)
    return Model(
        n=header["n"],
        mode=header["mode"],
        m=header["m"],
        enc_lap=enc_lap,
        enc_cpt=enc_cpt,
        head=head,
        seed=header["seed"],
        store=store,
    )


def write_history_csv(history: list, path) -> None:
    rows = [h for h in history if "epoch" in h]
    if not rows:
        return
    fields = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
