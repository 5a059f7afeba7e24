"""Dense-tensor neural network core, numpy only.

Layers: valid cross-correlation convolution, 1x2 max pooling, fully
connected, ReLU, sigmoid, softmax with cross-entropy. Training uses
classical SGD with momentum. Everything runs in 64-bit floats with
analytic backward passes that the test suite verifies against central
finite differences.

Batched layouts: images are [N, C, H, W], flat features [N, D]. The
single-image forms [C, H, W] and [D] are accepted too and return the
same rank they were given.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

INIT_WEIGHT_STD = 0.01


def _as_batched(x: np.ndarray, rank: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == rank - 1:
        return x[None], True
    if x.ndim == rank:
        return x, False
    raise ValueError(f"expected rank {rank - 1} or {rank}, got shape {x.shape}")


def _unbatch(y: np.ndarray, squeeze: bool) -> np.ndarray:
    return y[0] if squeeze else y


# ---------------------------------------------------------------------------
# Convolution (valid cross-correlation, stride 1, scalar bias per map)
# ---------------------------------------------------------------------------

def conv2d_forward(x: np.ndarray, filters: np.ndarray, biases: np.ndarray) -> np.ndarray:
    """out[n,f] = b[f] + sum_c x[n,c] star filters[f,c], valid region.

    x: [N, C, H, W] (or [C, H, W]); filters: [F, C, fh, fw]; biases: [F].
    Output height H-fh+1, width W-fw+1.
    """
    x, squeeze = _as_batched(x, 4)
    filters = np.asarray(filters, dtype=np.float64)
    biases = np.asarray(biases, dtype=np.float64)
    nf, nc, fh, fw = filters.shape
    if x.shape[1] != nc:
        raise ValueError(f"input channels {x.shape[1]} != filter channels {nc}")
    if x.shape[2] < fh or x.shape[3] < fw:
        raise ValueError(f"filter {fh}x{fw} larger than input {x.shape[2]}x{x.shape[3]}")
    win = np.lib.stride_tricks.sliding_window_view(x, (fh, fw), axis=(2, 3))
    out = np.tensordot(win, filters, axes=([1, 4, 5], [1, 2, 3]))  # [N, H', W', F]
    out = np.moveaxis(out, 3, 1) + biases[None, :, None, None]
    return _unbatch(np.ascontiguousarray(out), squeeze)


def conv2d_backward(
    x: np.ndarray, filters: np.ndarray, grad_out: np.ndarray, need_input_grad: bool = True
) -> tuple[np.ndarray | None, np.ndarray, np.ndarray]:
    """Gradients of conv2d_forward. Returns (grad_x, grad_filters, grad_biases).

    grad_x is the expensive term and is None when need_input_grad is
    False (a first-layer convolution never uses it).
    """
    x, squeeze = _as_batched(x, 4)
    grad_out, _ = _as_batched(grad_out, 4)
    filters = np.asarray(filters, dtype=np.float64)
    nf, nc, fh, fw = filters.shape

    grad_b = grad_out.sum(axis=(0, 2, 3))

    win = np.lib.stride_tricks.sliding_window_view(x, (fh, fw), axis=(2, 3))
    # dK[f,c,i,j] = sum_{n,y,x} dout[n,f,y,x] * x[n,c,y+i,x+j]
    grad_f = np.tensordot(grad_out, win, axes=([0, 2, 3], [0, 2, 3]))

    if not need_input_grad:
        return None, grad_f, grad_b

    # dx: full correlation of dout with the spatially flipped filters.
    pad = np.pad(grad_out, ((0, 0), (0, 0), (fh - 1, fh - 1), (fw - 1, fw - 1)))
    win2 = np.lib.stride_tricks.sliding_window_view(pad, (fh, fw), axis=(2, 3))
    flipped = filters[:, :, ::-1, ::-1]
    grad_x = np.tensordot(win2, flipped, axes=([1, 4, 5], [0, 2, 3]))  # [N, H, W, C]
    grad_x = np.ascontiguousarray(np.moveaxis(grad_x, 3, 1))
    return _unbatch(grad_x, squeeze), grad_f, grad_b


# ---------------------------------------------------------------------------
# Max pooling over width, window 2, stride 2
# ---------------------------------------------------------------------------

def maxpool1x2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping 1x2 max pool along the last axis.

    Returns (pooled, argmax). Width halves (floor); an odd trailing
    column is dropped. Ties take the left element. argmax holds 0/1
    offsets used by the backward pass.
    """
    x, squeeze = _as_batched(x, 4)
    w2 = x.shape[3] // 2
    if w2 < 1:
        raise ValueError("maxpool needs input width >= 2")
    pairs = x[..., : 2 * w2].reshape(x.shape[0], x.shape[1], x.shape[2], w2, 2)
    # argmax returns the first maximum, which is the documented tie-break.
    idx = pairs.argmax(axis=4)
    out = np.take_along_axis(pairs, idx[..., None], axis=4)[..., 0]
    return _unbatch(out, squeeze), _unbatch(idx, squeeze)


def maxpool1x2_backward(grad_out: np.ndarray, argmax: np.ndarray, in_width: int) -> np.ndarray:
    """Route each pooled gradient back to its argmax column, zeros elsewhere."""
    grad_out, squeeze = _as_batched(grad_out, 4)
    argmax = np.asarray(argmax)
    if argmax.ndim == 3:
        argmax = argmax[None]
    n, c, h, w2 = grad_out.shape
    pairs = np.zeros((n, c, h, w2, 2))
    np.put_along_axis(pairs, argmax[..., None], grad_out[..., None], axis=4)
    grad_x = np.zeros((n, c, h, in_width))
    grad_x[..., : 2 * w2] = pairs.reshape(n, c, h, 2 * w2)
    return _unbatch(grad_x, squeeze)


# ---------------------------------------------------------------------------
# Dense layer, activations
# ---------------------------------------------------------------------------

def dense_forward(x: np.ndarray, weights: np.ndarray, biases: np.ndarray) -> np.ndarray:
    """logits = x W + b with W shaped [in, out]."""
    x, squeeze = _as_batched(x, 2)
    weights = np.asarray(weights, dtype=np.float64)
    if x.shape[1] != weights.shape[0]:
        raise ValueError(f"dense input size {x.shape[1]} != weight rows {weights.shape[0]}")
    return _unbatch(x @ weights + np.asarray(biases, dtype=np.float64), squeeze)


def dense_backward(
    x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, squeeze = _as_batched(x, 2)
    grad_out, _ = _as_batched(grad_out, 2)
    grad_w = x.T @ grad_out
    grad_b = grad_out.sum(axis=0)
    grad_x = grad_out @ np.asarray(weights, dtype=np.float64).T
    return _unbatch(grad_x, squeeze), grad_w, grad_b


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(x) > 0.0, grad_out, 0.0)


def sigmoid_forward(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(out: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * out * (1.0 - out)


# ---------------------------------------------------------------------------
# Softmax + cross-entropy
# ---------------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax along the last axis (max-logit subtraction)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    """Softmax probabilities, summed cross-entropy and the logit gradient.

    For one sample ([C] logits, scalar label): loss = -ln p_label and
    grad = p - onehot(label). A batch [N, C] accumulates by summation in
    index order: loss is the sum of per-sample losses and grad stacks the
    per-sample gradients unscaled, so one optimizer step sees the whole
    batch at full weight.
    """
    logits, squeeze = _as_batched(logits, 2)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError("label out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.sum(logsumexp - shifted[np.arange(n), labels]))
    probs = softmax(logits)
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return _unbatch(probs, squeeze), loss, _unbatch(grad, squeeze)


# ---------------------------------------------------------------------------
# Optimizer and initialization
# ---------------------------------------------------------------------------

def init_weights(rng: np.random.Generator, shape: tuple[int, ...], std: float = INIT_WEIGHT_STD) -> np.ndarray:
    """Zero-mean normal weights, default standard deviation 0.01."""
    return rng.normal(0.0, std, size=shape)


def init_biases(shape: tuple[int, ...]) -> np.ndarray:
    return np.zeros(shape)


def sgd_momentum_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    velocity: dict[str, np.ndarray],
    learning_rate: float,
    momentum: float,
) -> None:
    """Classical momentum, in place: v <- mu v - eta g; theta <- theta + v.

    Parameter names are visited in sorted order so accumulation is
    bit-reproducible.
    """
    for name in sorted(params):
        v = momentum * velocity[name] - learning_rate * grads[name]
        velocity[name] = v
        params[name] = params[name] + v


def zero_velocity(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(value) for name, value in params.items()}


def numeric_gradient(fn, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar fn at x, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = fn(x)
        flat[i] = keep - step
        lo = fn(x)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


# ---------------------------------------------------------------------------
# Checkpoints: length-prefixed JSON metadata + float64 blob + sha256
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, meta: dict, params: dict[str, np.ndarray]) -> None:
    """Write metadata and parameter tensors to one self-checking file.

    Layout: u64le metadata length, metadata JSON (sorted keys), all
    tensors as little-endian float64 in the declared order, sha256 of
    everything before it. The tensor order and shapes live in the
    metadata, so loading restores exact arrays.
    """
    names = sorted(params)
    doc = dict(meta)
    doc["checkpoint_version"] = CHECKPOINT_VERSION
    doc["tensors"] = [{"name": n, "shape": list(params[n].shape)} for n in names]
    meta_bytes = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(params[n], dtype="<f8").tobytes() for n in names)
    body = struct.pack("<Q", len(meta_bytes)) + meta_bytes + blob
    digest = hashlib.sha256(body).digest()
    Path(path).write_bytes(body + digest)


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < 8 + 32:
        raise DataError(f"{path}: truncated checkpoint")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise DataError(f"{path}: checkpoint checksum mismatch")
    (meta_len,) = struct.unpack_from("<Q", body)
    if 8 + meta_len > len(body):
        raise DataError(f"{path}: corrupt metadata length")
    try:
        meta = json.loads(body[8 : 8 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: corrupt metadata: {e}") from e
    if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version")
    params: dict[str, np.ndarray] = {}
    offset = 8 + meta_len
    for entry in meta["tensors"]:
        shape = tuple(int(d) for d in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(body):
            raise DataError(f"{path}: truncated tensor blob")
        params[entry["name"]] = (
            np.frombuffer(body[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        )
        offset = end
    if offset != len(body):
        raise DataError(f"{path}: trailing bytes after tensors")
    return meta, params
