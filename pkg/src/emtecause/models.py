"""Classifiers over feature images: a small CNN and three references.

The CNN is one convolution (ten filters), ReLU, 1x2 max pooling, one
dense layer and softmax, trained with mini-batch SGD momentum. The
reference methods are a tapered MLP on flattened pixels, PCA followed by
one-vs-rest linear hinge classifiers, and a single-hidden-layer
autoencoder whose frozen code feeds a softmax head.

Training is deterministic under (data, config): the config carries the
seed, shuffles come from one generator consumed in a fixed order, and
checkpoints serialize to identical bytes across runs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import tensornn as tnn
from .errors import DataError
from .preprocess import InputCase


class ModelKind(Enum):
    CNN = "cnn"
    TMLP = "tmlp"
    PCA_SVM = "pca_svm"
    AUTOENCODER = "autoencoder"


@dataclass(frozen=True)
class CnnConfig:
    filter_count: int = 10
    filter_shape: tuple[int, int] = (2, 20)
    pool: tuple[int, int] = (1, 2)
    epochs: int = 40
    batch_size: int = 128
    learning_rate: float = 1e-4
    momentum: float = 0.9
    init_std: float = 0.01
    relu: bool = True
    seed: int = 0


# Named presets: the compact setup (2x20 filters, 40 epochs) and the wide
# setup (5x100 filters, 4 epochs). The wide preset needs images at least
# 5 rows tall and 100 columns wide.
CNN_PRESETS: dict[str, CnnConfig] = {
    "rtds": CnnConfig(filter_shape=(2, 20), epochs=40),
    "emtp": CnnConfig(filter_shape=(5, 100), epochs=4),
}


@dataclass(frozen=True)
class TmlpConfig:
    """Tapered MLP: hidden sizes ceil(in/4) and ceil(in/16), ReLU.

    The default learning rate is the power of ten reaching the lowest
    final training loss within the epoch budget on the standard
    synthetic dataset; 1e-4 leaves it visibly undertrained and 1e-2
    diverges."""

    epochs: int = 40
    batch_size: int = 128
    learning_rate: float = 1e-3
    momentum: float = 0.9
    init_std: float = 0.01
    seed: int = 0


@dataclass(frozen=True)
class PcaSvmConfig:
    """PCA to n_components (grown to reach var_target when possible),
    then one-vs-rest linear hinge classifiers by full-batch subgradient
    descent. One full-batch pass counts as one logged iteration."""

    n_components: int = 32
    var_target: float = 0.95
    iterations: int = 300
    learning_rate: float = 0.05
    weight_decay: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class AutoencoderConfig:
    """One sigmoid hidden layer of ceil(in/8) units trained to
    reconstruct the input, then a softmax head on the frozen code.

    Default learning rates follow the same calibration as the MLP,
    applied per phase: the power of ten with the lowest final loss
    within the budget. Larger head rates oscillate without settling."""

    recon_epochs: int = 30
    head_epochs: int = 30
    batch_size: int = 128
    recon_lr: float = 0.1
    head_lr: float = 1e-3
    momentum: float = 0.9
    init_std: float = 0.01
    seed: int = 0


@dataclass
class TrainedModel:
    kind: ModelKind
    case: InputCase | None
    n_classes: int
    input_shape: tuple[int, ...]
    params: dict[str, np.ndarray]
    meta: dict
    train_log: list[tuple[int, int, float, float | None]]  # iteration, epoch, loss, train_acc
    eval_log: list[tuple[int, float]]  # iteration, holdout accuracy


def _check_training_inputs(images: np.ndarray, labels: np.ndarray, n_classes: int) -> None:
    if images.ndim != 4:
        raise ValueError(f"expected images [N, C, H, W], got {images.shape}")
    if labels.shape != (images.shape[0],):
        raise ValueError("labels must be one class index per image")
    if not np.all(np.isfinite(images)):
        raise ValueError("images contain non-finite values")
    present = set(int(v) for v in np.unique(labels))
    wanted = set(range(n_classes))
    if not present <= wanted:
        raise ValueError("label out of range")
    if present != wanted:
        missing = sorted(wanted - present)
        raise ValueError(f"classes absent from the training split: {missing}")


def _flatten(images: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(images.reshape(images.shape[0], -1))


class _EvalHook:
    """Samples held-out accuracy every few iterations during training."""

    def __init__(self, model_stub, eval_set, every: int):
        self.stub = model_stub
        self.eval_set = eval_set
        self.every = max(1, every)
        self.log: list[tuple[int, float]] = []

    def maybe(self, iteration: int, total_iterations: int) -> None:
        if self.eval_set is None:
            return
        if iteration % self.every == 0 or iteration == total_iterations:
            images, labels = self.eval_set
            pred, _ = predict(self.stub, images)
            self.log.append((iteration, float(np.mean(pred == labels))))


def train_cnn(
    images: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    config: CnnConfig,
    case: InputCase | None = None,
    eval_set: tuple[np.ndarray, np.ndarray] | None = None,
    eval_every: int = 10,
) -> TrainedModel:
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _check_training_inputs(images, labels, n_classes)
    if config.epochs < 1:
        raise ValueError("epochs must be >= 1")
    if config.pool != (1, 2):
        raise ValueError("only 1x2 pooling is supported")
    n, c, h, w = images.shape
    fh, fw = config.filter_shape
    if fh > h or fw > w:
        raise ValueError(f"filter {fh}x{fw} larger than image {h}x{w}")

    conv_h = h - fh + 1
    conv_w = w - fw + 1
    pool_w = conv_w // 2
    pooled = pool_w >= 1  # degenerate narrow outputs skip the pool
    dense_in = config.filter_count * conv_h * (pool_w if pooled else conv_w)

    rng = np.random.default_rng(config.seed)
    params = {
        "conv_w": tnn.init_weights(rng, (config.filter_count, c, fh, fw), config.init_std),
        "conv_b": tnn.init_biases((config.filter_count,)),
        "dense_w": tnn.init_weights(rng, (dense_in, n_classes), config.init_std),
        "dense_b": tnn.init_biases((n_classes,)),
    }
    velocity = tnn.zero_velocity(params)

    meta = {
        "kind": ModelKind.CNN.value,
        "case": case.value if case else None,
        "n_classes": n_classes,
        "input_shape": [c, h, w],
        "config": _config_dict(config),
        "arch": {"conv_out": [config.filter_count, conv_h, conv_w], "pooled": pooled, "dense_in": dense_in},
    }
    model = TrainedModel(ModelKind.CNN, case, n_classes, (c, h, w), params, meta, [], [])
    hook = _EvalHook(model, eval_set, eval_every)

    iters_per_epoch = math.ceil(n / config.batch_size)
    total_iterations = config.epochs * iters_per_epoch
    iteration = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            x, y = images[batch], labels[batch]

            conv = tnn.conv2d_forward(x, params["conv_w"], params["conv_b"])
            act = tnn.relu_forward(conv) if config.relu else conv
            if pooled:
                pool, argmax = tnn.maxpool1x2_forward(act)
            else:
                pool = act
            flat = _flatten(pool)
            logits = tnn.dense_forward(flat, params["dense_w"], params["dense_b"])
            _, loss, dlogits = tnn.softmax_xent(logits, y)
            loss /= len(batch)  # log the per-sample loss; the step uses the batch sum

            dflat, dw_dense, db_dense = tnn.dense_backward(flat, params["dense_w"], dlogits)
            dpool = dflat.reshape(pool.shape)
            dact = tnn.maxpool1x2_backward(dpool, argmax, conv_w) if pooled else dpool
            dconv = tnn.relu_backward(conv, dact) if config.relu else dact
            _, dw_conv, db_conv = tnn.conv2d_backward(
                x, params["conv_w"], dconv, need_input_grad=False
            )

            grads = {"conv_w": dw_conv, "conv_b": db_conv, "dense_w": dw_dense, "dense_b": db_dense}
            tnn.sgd_momentum_step(params, grads, velocity, config.learning_rate, config.momentum)

            iteration += 1
            last_of_epoch = start + config.batch_size >= n
            train_acc = None
            if last_of_epoch:
                pred, _ = predict(model, images)
                train_acc = float(np.mean(pred == labels))
            model.train_log.append((iteration, epoch, loss, train_acc))
            hook.maybe(iteration, total_iterations)

    model.eval_log = hook.log
    return model


def train_tmlp(
    images: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    config: TmlpConfig,
    case: InputCase | None = None,
    eval_set: tuple[np.ndarray, np.ndarray] | None = None,
    eval_every: int = 10,
) -> TrainedModel:
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _check_training_inputs(images, labels, n_classes)
    if config.epochs < 1:
        raise ValueError("epochs must be >= 1")
    flat_all = _flatten(images)
    n, d = flat_all.shape
    h1 = math.ceil(d / 4)
    h2 = math.ceil(d / 16)

    rng = np.random.default_rng(config.seed)
    params = {
        "w1": tnn.init_weights(rng, (d, h1), config.init_std),
        "b1": tnn.init_biases((h1,)),
        "w2": tnn.init_weights(rng, (h1, h2), config.init_std),
        "b2": tnn.init_biases((h2,)),
        "w3": tnn.init_weights(rng, (h2, n_classes), config.init_std),
        "b3": tnn.init_biases((n_classes,)),
    }
    velocity = tnn.zero_velocity(params)
    meta = {
        "kind": ModelKind.TMLP.value,
        "case": case.value if case else None,
        "n_classes": n_classes,
        "input_shape": list(images.shape[1:]),
        "config": _config_dict(config),
        "arch": {"hidden": [h1, h2]},
    }
    model = TrainedModel(ModelKind.TMLP, case, n_classes, images.shape[1:], params, meta, [], [])
    hook = _EvalHook(model, eval_set, eval_every)

    iters_per_epoch = math.ceil(n / config.batch_size)
    total_iterations = config.epochs * iters_per_epoch
    iteration = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            x, y = flat_all[batch], labels[batch]

            z1 = tnn.dense_forward(x, params["w1"], params["b1"])
            a1 = tnn.relu_forward(z1)
            z2 = tnn.dense_forward(a1, params["w2"], params["b2"])
            a2 = tnn.relu_forward(z2)
            logits = tnn.dense_forward(a2, params["w3"], params["b3"])
            _, loss, dlogits = tnn.softmax_xent(logits, y)
            loss /= len(batch)

            da2, dw3, db3 = tnn.dense_backward(a2, params["w3"], dlogits)
            dz2 = tnn.relu_backward(z2, da2)
            da1, dw2, db2 = tnn.dense_backward(a1, params["w2"], dz2)
            dz1 = tnn.relu_backward(z1, da1)
            _, dw1, db1 = tnn.dense_backward(x, params["w1"], dz1)

            grads = {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2, "w3": dw3, "b3": db3}
            tnn.sgd_momentum_step(params, grads, velocity, config.learning_rate, config.momentum)

            iteration += 1
            train_acc = None
            if start + config.batch_size >= n:
                pred, _ = predict(model, images)
                train_acc = float(np.mean(pred == labels))
            model.train_log.append((iteration, epoch, loss, train_acc))
            hook.maybe(iteration, total_iterations)

    model.eval_log = hook.log
    return model


def _pca_fit(flat: np.ndarray, config: PcaSvmConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centered PCA. Returns (mean, components [D, k], eigenvalues [k]).

    Uses the Gram matrix when samples are fewer than features; the top
    spectrum is identical either way. Component signs are fixed so the
    largest-magnitude entry of each component is positive.
    """
    n, d = flat.shape
    mean = flat.mean(axis=0)
    xc = flat - mean
    k_max = min(n - 1 if n > 1 else 1, d)
    if config.n_components > k_max:
        warnings.warn(
            f"n_components={config.n_components} exceeds the usable rank; clamping to {k_max}",
            stacklevel=2,
        )
    k = min(max(1, config.n_components), k_max)

    if d <= n:
        cov = (xc.T @ xc) / max(n - 1, 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1]
        eigvals = np.maximum(eigvals[order], 0.0)
        comps = eigvecs[:, order]
    else:
        gram = (xc @ xc.T) / max(n - 1, 1)
        eigvals, eigvecs = np.linalg.eigh(gram)
        order = np.argsort(eigvals)[::-1]
        eigvals = np.maximum(eigvals[order], 0.0)
        scale = np.sqrt(np.maximum(eigvals * max(n - 1, 1), 1e-300))
        comps = (xc.T @ eigvecs[:, order]) / scale

    total_var = float(eigvals.sum())
    if total_var > 0:
        cum = np.cumsum(eigvals) / total_var
        while k < k_max and cum[k - 1] < config.var_target:
            k += 1
    comps = comps[:, :k]
    signs = np.sign(comps[np.argmax(np.abs(comps), axis=0), np.arange(k)])
    signs[signs == 0] = 1.0
    return mean, comps * signs, eigvals[:k]


def train_pca_svm(
    images: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    config: PcaSvmConfig,
    case: InputCase | None = None,
) -> TrainedModel:
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _check_training_inputs(images, labels, n_classes)
    flat = _flatten(images)
    n, d = flat.shape

    mean, comps, eigvals = _pca_fit(flat, config)
    scores = (flat - mean) @ comps
    # One scalar scale for conditioning; deliberately not per-component.
    rms = float(np.sqrt(np.mean(scores**2)))
    scale = rms if rms > 0 else 1.0
    scores = scores / scale

    k = comps.shape[1]
    w = np.zeros((k, n_classes))
    b = np.zeros(n_classes)
    targets = np.where(labels[None, :] == np.arange(n_classes)[:, None], 1.0, -1.0)  # [K, N]

    meta = {
        "kind": ModelKind.PCA_SVM.value,
        "case": case.value if case else None,
        "n_classes": n_classes,
        "input_shape": list(images.shape[1:]),
        "config": _config_dict(config),
        "arch": {"components": k},
    }
    model = TrainedModel(
        ModelKind.PCA_SVM,
        case,
        n_classes,
        images.shape[1:],
        {"pca_mean": mean, "pca_components": comps, "pca_scale": np.array([scale]),
         "svm_w": w, "svm_b": b},
        meta,
        [],
        [],
    )

    for it in range(1, config.iterations + 1):
        margins = scores @ w + b  # [N, K]
        viol = (targets.T * margins) < 1.0  # hinge active set
        coeff = np.where(viol, -targets.T, 0.0) / n  # dL/dmargin
        grad_w = scores.T @ coeff + config.weight_decay * w
        grad_b = coeff.sum(axis=0)
        w -= config.learning_rate * grad_w
        b -= config.learning_rate * grad_b
        hinge = float(np.mean(np.maximum(0.0, 1.0 - targets.T * margins)))
        model.train_log.append((it, it, hinge, None))

    model.params["svm_w"] = w
    model.params["svm_b"] = b
    return model


def train_autoencoder(
    images: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    config: AutoencoderConfig,
    case: InputCase | None = None,
) -> TrainedModel:
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _check_training_inputs(images, labels, n_classes)
    if config.recon_epochs < 1 or config.head_epochs < 1:
        raise ValueError("epochs must be >= 1")
    flat_all = _flatten(images)
    n, d = flat_all.shape
    hidden = math.ceil(d / 8)

    rng = np.random.default_rng(config.seed)
    params = {
        "enc_w": tnn.init_weights(rng, (d, hidden), config.init_std),
        "enc_b": tnn.init_biases((hidden,)),
        "dec_w": tnn.init_weights(rng, (hidden, d), config.init_std),
        "dec_b": tnn.init_biases((d,)),
        "head_w": tnn.init_weights(rng, (hidden, n_classes), config.init_std),
        "head_b": tnn.init_biases((n_classes,)),
    }
    meta = {
        "kind": ModelKind.AUTOENCODER.value,
        "case": case.value if case else None,
        "n_classes": n_classes,
        "input_shape": list(images.shape[1:]),
        "config": _config_dict(config),
        "arch": {"hidden": hidden},
    }
    model = TrainedModel(
        ModelKind.AUTOENCODER, case, n_classes, images.shape[1:], params, meta, [], []
    )

    # Phase 1: reconstruction. Loss is the mean squared error per element.
    recon = {k: params[k] for k in ("enc_w", "enc_b", "dec_w", "dec_b")}
    velocity = tnn.zero_velocity(recon)
    iteration = 0
    for epoch in range(1, config.recon_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            x = flat_all[order[start : start + config.batch_size]]
            z = tnn.dense_forward(x, recon["enc_w"], recon["enc_b"])
            code = tnn.sigmoid_forward(z)
            xhat = tnn.dense_forward(code, recon["dec_w"], recon["dec_b"])
            err = xhat - x
            loss = float(np.mean(err**2))
            # Batch-sum objective to match the other trainers: per-sample
            # mean squared error over features, summed over the batch.
            dxhat = 2.0 * err / err.shape[1]
            dcode, dw_dec, db_dec = tnn.dense_backward(code, recon["dec_w"], dxhat)
            dz = tnn.sigmoid_backward(code, dcode)
            _, dw_enc, db_enc = tnn.dense_backward(x, recon["enc_w"], dz)
            grads = {"enc_w": dw_enc, "enc_b": db_enc, "dec_w": dw_dec, "dec_b": db_dec}
            tnn.sgd_momentum_step(recon, grads, velocity, config.recon_lr, config.momentum)
            iteration += 1
            model.train_log.append((iteration, epoch, loss, None))
    params.update(recon)

    # Phase 2: frozen encoder, softmax head on the codes.
    codes_all = tnn.sigmoid_forward(
        tnn.dense_forward(flat_all, params["enc_w"], params["enc_b"])
    )
    head = {k: params[k] for k in ("head_w", "head_b")}
    velocity = tnn.zero_velocity(head)
    for epoch in range(1, config.head_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            x, y = codes_all[batch], labels[batch]
            logits = tnn.dense_forward(x, head["head_w"], head["head_b"])
            _, loss, dlogits = tnn.softmax_xent(logits, y)
            loss /= len(batch)
            _, dw, db = tnn.dense_backward(x, head["head_w"], dlogits)
            tnn.sgd_momentum_step(
                head, {"head_w": dw, "head_b": db}, velocity, config.head_lr, config.momentum
            )
            params.update(head)  # keep the live model current for predict below
            iteration += 1
            train_acc = None
            if start + config.batch_size >= n:
                pred, _ = predict(model, images)
                train_acc = float(np.mean(pred == labels))
            model.train_log.append(
                (iteration, config.recon_epochs + epoch, loss, train_acc)
            )
    params.update(head)
    return model


def predict(model: TrainedModel, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class indices and probabilities for a batch of images.

    Probabilities are softmax outputs; for the hinge classifier they are
    softmax-normalized margins, a ranking-preserving convenience rather
    than calibrated confidence. Ties go to the lowest class index.
    """
    images = np.asarray(images, dtype=np.float64)
    single = images.ndim == 3
    if single:
        images = images[None]
    if images.shape[1:] != tuple(model.input_shape):
        raise ValueError(
            f"image shape {images.shape[1:]} does not match model input {tuple(model.input_shape)}"
        )
    p = model.params
    if model.kind is ModelKind.CNN:
        conv = tnn.conv2d_forward(images, p["conv_w"], p["conv_b"])
        act = tnn.relu_forward(conv) if model.meta["config"].get("relu", True) else conv
        if model.meta["arch"]["pooled"]:
            act, _ = tnn.maxpool1x2_forward(act)
        logits = tnn.dense_forward(_flatten(act), p["dense_w"], p["dense_b"])
    elif model.kind is ModelKind.TMLP:
        a1 = tnn.relu_forward(tnn.dense_forward(_flatten(images), p["w1"], p["b1"]))
        a2 = tnn.relu_forward(tnn.dense_forward(a1, p["w2"], p["b2"]))
        logits = tnn.dense_forward(a2, p["w3"], p["b3"])
    elif model.kind is ModelKind.PCA_SVM:
        scores = (_flatten(images) - p["pca_mean"]) @ p["pca_components"] / p["pca_scale"][0]
        logits = scores @ p["svm_w"] + p["svm_b"]
    elif model.kind is ModelKind.AUTOENCODER:
        code = tnn.sigmoid_forward(tnn.dense_forward(_flatten(images), p["enc_w"], p["enc_b"]))
        logits = tnn.dense_forward(code, p["head_w"], p["head_b"])
    else:  # pragma: no cover
        raise ValueError(f"unknown model kind {model.kind!r}")
    probs = tnn.softmax(logits)
    classes = probs.argmax(axis=1)
    if single:
        return classes[0], probs[0]
    return classes, probs


def accuracy(model: TrainedModel, images: np.ndarray, labels: np.ndarray) -> float:
    pred, _ = predict(model, images)
    return float(np.mean(pred == np.asarray(labels)))


def _config_dict(config) -> dict:
    doc = asdict(config)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in doc.items()}


def save_model(model: TrainedModel, path: str | Path) -> None:
    tnn.save_checkpoint(path, model.meta, model.params)


def load_model(path: str | Path) -> TrainedModel:
    meta, params = tnn.load_checkpoint(path)
    try:
        kind = ModelKind(meta["kind"])
        case = InputCase(meta["case"]) if meta.get("case") else None
        n_classes = int(meta["n_classes"])
        input_shape = tuple(int(v) for v in meta["input_shape"])
    except (KeyError, ValueError) as e:
        raise DataError(f"{path}: malformed model metadata: {e}") from e
    return TrainedModel(kind, case, n_classes, input_shape, params, meta, [], [])


def train_log_csv(model: TrainedModel) -> str:
    lines = ["iteration,epoch,loss,train_acc"]
    for iteration, epoch, loss, acc in model.train_log:
        acc_txt = "" if acc is None else f"{acc:.12g}"
        lines.append(f"{iteration},{epoch},{loss:.12g},{acc_txt}")
    return "\n".join(lines) + "\n"


def eval_log_csv(model: TrainedModel) -> str:
    lines = ["iteration,holdout_acc"]
    for iteration, acc in model.eval_log:
        lines.append(f"{iteration},{acc:.12g}")
    return "\n".join(lines) + "\n"
