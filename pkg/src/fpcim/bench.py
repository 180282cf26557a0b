"""Desk-scale DNN workload executed through the macro model.

A small MLP (default 16 -> 32 -> 4, ReLU) runs every matvec through tile
storage, so stored-weight bit flips, the protected read path, and the FP16
datapath all shape its accuracy.  Master weights for fine-tuning live in
float64; the forward pass always goes through the macro and gradients flow
back with a straight-through estimator for the mantissa quantization.
"""

from __future__ import annotations

import dataclasses
from typing import NamedTuple

import numpy as np

from . import align, fp16, macro
from .inject import FieldMask, InjectionPlan
from .macro import COLS, ROWS, ReadPathConfig


class Dataset(NamedTuple):
    x: np.ndarray  # (N, dim) float64
    y: np.ndarray  # (N,) int64
    x_bits: np.ndarray  # (N, dim) uint16, FP16-encoded inputs


def gen_dataset(
    seed: int, n_samples: int, n_classes: int = 4, dim: int = 16, margin: float = 4.0, centroid_seed: int | None = None
) -> Dataset:
    """Gaussian blobs around orthonormal class directions scaled by margin.

    Deterministic in seed; class counts balanced to within one sample.
    centroid_seed pins the class geometry, so different seeds with the same
    centroid_seed give train/eval splits of one problem.
    """
    c_rng = np.random.default_rng(seed if centroid_seed is None else centroid_seed)
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(c_rng.normal(size=(dim, dim)))
    centroids = q[:, :n_classes].T * margin
    per = n_samples // n_classes
    counts = [per + (1 if i < n_samples % n_classes else 0) for i in range(n_classes)]
    y = np.concatenate([np.full(c, i, dtype=np.int64) for i, c in enumerate(counts)])
    x = centroids[y] + rng.normal(size=(n_samples, dim))
    order = rng.permutation(n_samples)
    x, y = x[order], y[order]
    return Dataset(x, y, fp16.encode_array(x))


def centroid_accuracy(ds: Dataset) -> float:
    """Closed-form nearest-centroid classifier accuracy (reference baseline)."""
    classes = np.unique(ds.y)
    mu = np.stack([ds.x[ds.y == c].mean(axis=0) for c in classes])
    d2 = ((ds.x[:, None, :] - mu[None, :, :]) ** 2).sum(axis=2)
    return float((classes[np.argmin(d2, axis=1)] == ds.y).mean())


# ---------------------------------------------------------------------------
# real-arithmetic MLP (pretraining reference and gradient-check path)


def init_params(seed: int, dims=(16, 32, 4)):
    rng = np.random.default_rng(seed)
    d, h, c = dims
    w1 = rng.normal(0, np.sqrt(2.0 / d), (d, h))
    w2 = rng.normal(0, np.sqrt(2.0 / h), (h, c))
    return w1, w2


def forward_real(w1, w2, x):
    z1 = x @ w1
    hid = np.maximum(z1, 0.0)
    return z1, hid, hid @ w2


def softmax_ce(logits, y):
    z = logits - logits.max(axis=1, keepdims=True)
    with np.errstate(over="ignore"):
        e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    n = len(y)
    loss = float(-np.log(np.maximum(p[np.arange(n), y], 1e-300)).mean())
    dlogits = p.copy()
    dlogits[np.arange(n), y] -= 1.0
    return loss, dlogits / n


def grads_real(w1, w2, x, y):
    """Loss and exact gradients on the projection-free real path."""
    z1, hid, logits = forward_real(w1, w2, x)
    loss, dlogits = softmax_ce(logits, y)
    g2 = hid.T @ dlogits
    dh = dlogits @ w2.T
    dz1 = dh * (z1 > 0)
    g1 = x.T @ dz1
    return loss, g1, g2


def train_reference(ds: Dataset, dims=(16, 32, 4), epochs: int = 40, lr: float = 0.1, batch: int = 32, seed: int = 7):
    """Plain float64 SGD pretraining; the source of pre-trained weights."""
    w1, w2 = init_params(seed, dims)
    rng = np.random.default_rng(seed + 1)
    n = len(ds.y)
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch):
            sel = order[lo : lo + batch]
            _, g1, g2 = grads_real(w1, w2, ds.x[sel], ds.y[sel])
            w1 -= lr * g1
            w2 -= lr * g2
    return w1, w2


def accuracy_real(w1, w2, ds: Dataset) -> float:
    _, _, logits = forward_real(w1, w2, ds.x)
    return float((np.argmax(logits, axis=1) == ds.y).mean())


# ---------------------------------------------------------------------------
# macro-backed model


@dataclasses.dataclass
class TinyMlp:
    """MLP whose layers live in tile storage (zero-padded to tile geometry)."""

    dims: tuple
    mode: str  # "baseline" | "one4n"
    weight_bits: list  # [(in, out) uint16, ...] per layer
    n: int = 8
    index: int = 2
    tables: list | None = None  # one4n: per-layer e_shared tables
    _tiles: list | None = dataclasses.field(default=None, repr=False)


def build_model(weights, mode: str = "baseline", n: int = 8, index: int = 2) -> TinyMlp:
    """Quantize (baseline) or align-then-quantize (one4n) real weight tensors."""
    dims = (weights[0].shape[0],) + tuple(w.shape[1] for w in weights)
    if mode == "baseline":
        return TinyMlp(dims, mode, [fp16.encode_array(w) for w in weights])
    if mode != "one4n":
        raise ValueError(f"unknown model mode {mode!r}")
    padded = [_pad_rows_to_multiple(w, n) for w in weights]
    aligned, tables = align.align_model(padded, n, index)
    bits = [fp16.encode_array(a) for a in aligned]
    return TinyMlp(dims, mode, bits, n=n, index=index, tables=tables)


def _pad_rows_to_multiple(w, n):
    w = np.asarray(w, dtype=np.float64)
    pad = (-w.shape[0]) % n
    if pad:
        w = np.vstack([w, np.zeros((pad, w.shape[1]))])
    return w


def _layer_tiles(bits: np.ndarray, mode: str, n: int, table, salt0: int):
    """Split an (in, out) layer across 256x16 tiles, padding with zeros."""
    in_dim, out_dim = bits.shape
    if in_dim > ROWS:
        raise ValueError(f"layer input dim {in_dim} exceeds tile rows {ROWS}")
    tiles = []
    for t, lo in enumerate(range(0, out_dim, COLS)):
        cols = min(COLS, out_dim - lo)
        words = np.zeros((ROWS, COLS), dtype=np.uint16)
        words[:in_dim, :cols] = bits[:, lo : lo + cols]
        if mode == "baseline":
            tiles.append(
                macro.load_tile(words, "baseline", n=n, active_rows=in_dim, active_cols=cols, key_salt=salt0 + t)
            )
        else:
            fields = np.zeros((ROWS // n, COLS), dtype=np.uint8)
            g_real = in_dim // n  # build_model pads layer rows to a multiple of n
            tab = np.asarray(table[:, lo : lo + cols])
            fields[:g_real, :cols] = np.where(tab == align.DEGENERATE_E, 0, tab + 15).astype(np.uint8)
            tiles.append(
                macro.load_tile(
                    words, "one4n", n=n, spec_fields=fields, active_rows=in_dim, active_cols=cols, key_salt=salt0 + t
                )
            )
    return tiles


def model_tiles(model: TinyMlp):
    if model._tiles is None:
        tiles = []
        for layer, bits in enumerate(model.weight_bits):
            table = model.tables[layer] if model.tables is not None else None
            tiles.append(_layer_tiles(bits, model.mode, model.n, table, salt0=layer * 64))
        model._tiles = tiles
    return model._tiles


def relu_bits(bits: np.ndarray) -> np.ndarray:
    """max(0, x) on patterns: negatives (and -Inf) become +0, NaN propagates."""
    is_nan = ((bits & 0x7C00) == 0x7C00) & ((bits & 0x3FF) != 0)
    neg = (bits & 0x8000) != 0
    return np.where(is_nan, bits, np.where(neg, 0, bits)).astype(np.uint16)


def forward_tiles(tiles_per_layer, dims, x_bits, config: ReadPathConfig, access0: int = 0):
    """Forward a batch of encoded inputs through the tile layers.

    Returns (per-layer pre-activation bit arrays, CallStats); the last entry
    holds the logits.
    """
    stats = macro.CallStats()
    b = x_bits.shape[0]
    acts = []
    cur = x_bits
    for layer, tiles in enumerate(tiles_per_layer):
        in_dim = dims[layer]
        out_dim = dims[layer + 1]
        buf = np.zeros((b, ROWS), dtype=np.uint16)
        buf[:, :in_dim] = cur[:, :in_dim]
        z = np.zeros((b, out_dim), dtype=np.uint16)
        for t, tile in enumerate(tiles):
            out, s = macro.tile_matvec_batch(tile, buf, config, access0)
            stats.merge(s)
            lo = t * COLS
            z[:, lo : lo + tile.active_cols] = out[:, : tile.active_cols]
        acts.append(z)
        if layer < len(tiles_per_layer) - 1:
            cur = relu_bits(z)
    return acts, stats


# ---------------------------------------------------------------------------
# evaluation under injection


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """One resilience run: injection settings plus the read-path switches."""

    mode: str = "static"  # injection cadence
    ber: float = 0.0
    mask: FieldMask = FieldMask.FULL
    exposure: str = "all"
    ecc: bool = False
    seed: int = 0
    frac_bits: int = fp16.DEFAULT_FRAC_BITS


class EvalResult(NamedTuple):
    accuracy: float
    flips: int
    corrected_singles: int
    detected_doubles: int
    nan_events: int


def _run_tiles(model: TinyMlp, rc: RunConfig):
    """Per-run tile set and read config: static corruption happens here."""
    tiles = model_tiles(model)
    if rc.ber <= 0:
        return tiles, ReadPathConfig(ecc=rc.ecc, frac_bits=rc.frac_bits), 0
    if rc.mode == "static":
        plan = InjectionPlan("static", rc.ber, rc.mask, rc.seed)
        corrupted = [[macro.with_static_faults(t, plan, rc.exposure) for t in layer] for layer in tiles]
        flips = sum(t.static_flips for layer in corrupted for t in layer)
        return corrupted, ReadPathConfig(ecc=rc.ecc, frac_bits=rc.frac_bits), flips
    plan = InjectionPlan("dynamic", rc.ber, rc.mask, rc.seed)
    return tiles, ReadPathConfig(ecc=rc.ecc, injection=plan, exposure=rc.exposure, frac_bits=rc.frac_bits), 0


def evaluate(model: TinyMlp, ds: Dataset, rc: RunConfig = RunConfig(), access0: int = 0) -> EvalResult:
    """Accuracy with every matvec routed through the macro; deterministic in
    (model, dataset, run config)."""
    tiles, cfg, static_flips = _run_tiles(model, rc)
    acts, stats = forward_tiles(tiles, model.dims, ds.x_bits, cfg, access0)
    logits = fp16.decode_array(acts[-1])
    pred = np.argmax(logits, axis=1)
    correct = (pred == ds.y) & np.isfinite(logits).all(axis=1)
    nan_events = int(np.isnan(logits).any(axis=1).sum())
    corrected = doubles = 0
    if rc.mode == "static" or rc.ber <= 0:
        for layer in tiles:
            for t in layer:
                c, d = macro.static_decode_counts(t, rc.ecc)
                corrected += c
                doubles += d
    flips = static_flips + stats.flips
    return EvalResult(
        float(correct.mean()),
        flips,
        corrected + stats.corrected_singles,
        doubles + stats.detected_doubles,
        nan_events,
    )


def reference_eval_bits(model: TinyMlp, ds: Dataset) -> np.ndarray:
    """Straight-line fp16-core forward (no tiles); logits bit patterns."""
    logits = np.zeros((len(ds.y), model.dims[-1]), dtype=np.uint16)
    for i, xrow in enumerate(ds.x_bits):
        cur = xrow
        for layer, bits in enumerate(model.weight_bits):
            in_dim = model.dims[layer]
            out = np.zeros(model.dims[layer + 1], dtype=np.uint16)
            for c in range(model.dims[layer + 1]):
                prods = [fp16.fp_mul(int(bits[r, c]), int(cur[r])) for r in range(in_dim)]
                out[c] = fp16.mac(prods).bits
            cur = relu_bits(out) if layer < len(model.weight_bits) - 1 else out
        logits[i] = cur
    return logits


# ---------------------------------------------------------------------------
# fine-tuning with frozen exponents


@dataclasses.dataclass
class TrainState:
    w1: np.ndarray  # float64 master weights
    w2: np.ndarray
    n: int = 8
    index: int = 2
    tables: list | None = None  # frozen alignment; None = plain training
    lr: float = 0.05
    step: int = 0
    loss_history: list = dataclasses.field(default_factory=list)
    acc_history: list = dataclasses.field(default_factory=list)
    nan_events: int = 0
    first_nan_epoch: int | None = None
    failed: bool = False


def init_train_state(w1, w2, n: int = 8, index: int = 2, lr: float = 0.05, aligned: bool = True) -> TrainState:
    """Fix the alignment from pre-trained weights, then project the masters."""
    if not aligned:
        return TrainState(np.array(w1, dtype=np.float64), np.array(w2, dtype=np.float64), n, index, None, lr)
    padded = [_pad_rows_to_multiple(w, n) for w in (w1, w2)]
    aligned_ws, tables = align.align_model(padded, n, index)
    return TrainState(aligned_ws[0], aligned_ws[1], n, index, tables, lr)


def project_to_tables(w: np.ndarray, table: np.ndarray, n: int) -> np.ndarray:
    """Clamp magnitudes into each block's [LL, UL] and quantize the mantissa;
    degenerate (all-zero) blocks stay zero."""
    e = np.repeat(np.asarray(table, dtype=np.float64), n, axis=0)[: w.shape[0]]
    degen = e == align.DEGENERATE_E
    e = np.where(degen, 0.0, e)
    ll = 2.0**e
    ul = ll * align.UL_RATIO
    sign = np.where(w < 0, -1.0, 1.0)
    mag = np.clip(np.abs(w), ll, ul)
    mant = np.clip(np.round(mag * 2.0**-e * 1024.0 - 1024.0), 0, 1023)
    out = sign * (1024.0 + mant) * 2.0 ** (e - 10)
    return np.where(degen, 0.0, out)


def _state_model(state: TrainState) -> TinyMlp:
    dims = (state.w1.shape[0], state.w1.shape[1], state.w2.shape[1])
    if state.tables is None:
        return TinyMlp(dims, "baseline", [fp16.encode_array(state.w1), fp16.encode_array(state.w2)])
    return TinyMlp(
        dims,
        "one4n",
        [fp16.encode_array(state.w1), fp16.encode_array(state.w2)],
        n=state.n,
        index=state.index,
        tables=state.tables,
    )


GRAD_CLIP = 1e3


def finetune_aligned(
    state: TrainState,
    ds: Dataset,
    epochs: int,
    rc: RunConfig = RunConfig(),
    batch: int = 32,
    eval_ds: Dataset | None = None,
    shuffle_seed: int = 0,
):
    """SGD with the forward pass through the macro (injection active when
    configured) and a straight-through-estimator backward pass in float64.

    After every step the masters are projected back onto their blocks'
    ranges (aligned states), so is_aligned holds throughout.  A batch whose
    loss is non-finite is recorded as a NaN event and its update skipped; a
    non-finite master weight marks the run failed.  Returns per-epoch trace
    rows (epoch, loss, accuracy, nan_flag).
    """
    eval_ds = eval_ds or ds
    rng = np.random.default_rng(shuffle_seed)
    n_samples = len(ds.y)
    access = 0
    trace = []
    for epoch in range(epochs):
        order = rng.permutation(n_samples)
        losses = []
        epoch_nan = False
        for lo in range(0, n_samples, batch):
            sel = order[lo : lo + batch]
            model = _state_model(state)
            tiles, cfg, _ = _run_tiles(model, rc)
            acts, _ = forward_tiles(tiles, model.dims, ds.x_bits[sel], cfg, access)
            access += len(sel)
            z1 = fp16.decode_array(acts[0])
            logits = fp16.decode_array(acts[1])
            if not np.isfinite(logits).all() or not np.isfinite(z1).all():
                state.nan_events += 1
                epoch_nan = True
                if state.first_nan_epoch is None:
                    state.first_nan_epoch = epoch
                continue
            loss, dlogits = softmax_ce(logits, ds.y[sel])
            losses.append(loss)
            hid = np.maximum(z1, 0.0)
            w2q = fp16.decode_array(model.weight_bits[1])
            g2 = np.clip(hid.T @ dlogits, -GRAD_CLIP, GRAD_CLIP)
            dh = dlogits @ w2q.T
            dz1 = dh * (z1 > 0)
            g1 = np.clip(ds.x[sel].T @ dz1, -GRAD_CLIP, GRAD_CLIP)
            state.w1 -= state.lr * g1
            state.w2 -= state.lr * g2
            if state.tables is not None:
                state.w1 = project_to_tables(state.w1, state.tables[0], state.n)
                state.w2 = project_to_tables(state.w2, state.tables[1], state.n)
            if not (np.isfinite(state.w1).all() and np.isfinite(state.w2).all()):
                state.failed = True
                state.loss_history.append(float("nan"))
                trace.append((epoch, float("nan"), 0.0, 1))
                return state, trace
            state.step += 1
        model = _state_model(state)
        acc = evaluate(model, eval_ds, rc, access0=access).accuracy
        access += len(eval_ds.y)
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        state.loss_history.append(mean_loss)
        state.acc_history.append(acc)
        trace.append((epoch, mean_loss, acc, int(epoch_nan)))
    if state.nan_events and not state.acc_history:
        state.failed = True
    return state, trace
