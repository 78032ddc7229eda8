"""Compact convolutional classifier over mel spectrograms.

Four convolution layers (a 1x4 frequency-axis filter, then three 3x3
layers widening 1 -> 2 -> 8 -> 32 channels, each 3x3 layer followed by a
2x2 max pool) feed a global max pool over time and frequency, so the
32-vector handed to the two dense layers is independent of clip length.
Convolution parameter counts are 5, 20, 152 and 2336.

Implemented directly in numpy with hand-written backpropagation: training
must be deterministic and the analytic gradients are themselves a tested
contract (checked against central finite differences).  The 1x4 first
layer is shared with the sampling controller's feature extractor.

Pools use ceil-mode (partial) 2x2 windows so short inputs survive the
stack; the minimum input is 15 frames x 18 mel bins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_core import Spectrogram, conv1d_freq
from .imputation import impute
from .modelio import load_arrays, save_arrays


@dataclass
class ClassifierModel:
    conv1_w: np.ndarray  # (4,)
    conv1_b: float
    conv2_w: np.ndarray  # (2, 1, 3, 3)
    conv2_b: np.ndarray
    conv3_w: np.ndarray  # (8, 2, 3, 3)
    conv3_b: np.ndarray
    conv4_w: np.ndarray  # (32, 8, 3, 3)
    conv4_b: np.ndarray
    dense1_w: np.ndarray  # (256, 32)
    dense1_b: np.ndarray
    dense2_w: np.ndarray  # (n_classes, 256)
    dense2_b: np.ndarray
    n_classes: int
    n_mel: int = 32

    def params(self) -> dict:
        return {
            "conv1_w": self.conv1_w,
            "conv1_b": self.conv1_b,
            "conv2_w": self.conv2_w,
            "conv2_b": self.conv2_b,
            "conv3_w": self.conv3_w,
            "conv3_b": self.conv3_b,
            "conv4_w": self.conv4_w,
            "conv4_b": self.conv4_b,
            "dense1_w": self.dense1_w,
            "dense1_b": self.dense1_b,
            "dense2_w": self.dense2_w,
            "dense2_b": self.dense2_b,
        }


@dataclass
class TrainConfig:
    epochs: int = 40
    lr: float = 0.01  # 0.05 with this momentum diverges into dead rectifiers
    batch: int = 16
    augment_prob: float = 0.5
    mask_keep_prob: float = 0.5
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.augment_prob <= 1.0:
            raise ValueError(f"augment_prob outside [0, 1]: {self.augment_prob}")
        if not 0.0 <= self.mask_keep_prob <= 1.0:
            raise ValueError(f"mask_keep_prob outside [0, 1]: {self.mask_keep_prob}")


def parameter_counts(model: ClassifierModel) -> dict:
    return {
        "conv1": model.conv1_w.size + 1,
        "conv2": model.conv2_w.size + model.conv2_b.size,
        "conv3": model.conv3_w.size + model.conv3_b.size,
        "conv4": model.conv4_w.size + model.conv4_b.size,
        "dense1": model.dense1_w.size + model.dense1_b.size,
        "dense2": model.dense2_w.size + model.dense2_b.size,
    }


def init_classifier(n_classes: int, n_mel: int = 32, seed=0) -> ClassifierModel:
    """He-initialised network; biases start at zero."""
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    rng = np.random.default_rng(seed)

    def he(shape, fan_in):
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)

    # small positive conv biases: the narrow early layers (1 and 2 filters)
    # see rectified, non-negative fields, and a filter whose response starts
    # negative everywhere is dead for good
    return ClassifierModel(
        conv1_w=he((4,), 4),
        conv1_b=0.05,
        conv2_w=he((2, 1, 3, 3), 9),
        conv2_b=np.full(2, 0.05),
        conv3_w=he((8, 2, 3, 3), 18),
        conv3_b=np.full(8, 0.05),
        conv4_w=he((32, 8, 3, 3), 72),
        conv4_b=np.full(32, 0.05),
        dense1_w=he((256, 32), 32),
        dense1_b=np.zeros(256),
        dense2_w=he((n_classes, 256), 256),
        dense2_b=np.zeros(n_classes),
        n_classes=n_classes,
        n_mel=n_mel,
    )


MIN_FRAMES = 15
MIN_BINS = 18


def _check_extent(n_frames: int, n_bins: int) -> None:
    if n_frames < MIN_FRAMES or n_bins < MIN_BINS:
        raise ValueError(
            f"input too short for the 4-layer stack: got {n_frames} frames x "
            f"{n_bins} bins, need at least {MIN_FRAMES} x {MIN_BINS}"
        )


def _conv2d(x, w, b):
    """Valid 3x3 convolution; returns (out, cols) with cols kept for backprop."""
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    ho, wo = h - kh + 1, wd - kw + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * ho * wo, ci * kh * kw
    )
    out = cols @ w.reshape(co, -1).T + b
    return out.reshape(n, ho, wo, co).transpose(0, 3, 1, 2), cols


def _conv2d_back(dout, cols, w, x_shape):
    n, ci, h, wd = x_shape
    co, _, kh, kw = w.shape
    ho, wo = h - kh + 1, wd - kw + 1
    dmat = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(-1, co)
    dw = (dmat.T @ cols).reshape(co, ci, kh, kw)
    db = dmat.sum(axis=0)
    dwin = (dmat @ w.reshape(co, -1)).reshape(n, ho, wo, ci, kh, kw).transpose(
        0, 3, 1, 2, 4, 5
    )
    dx = np.zeros(x_shape)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i : i + ho, j : j + wo] += dwin[:, :, :, :, i, j]
    return dx, dw, db


def _maxpool2(x):
    """Ceil-mode 2x2/stride-2 max pool; -inf padding never wins over relu output."""
    n, c, h, wd = x.shape
    hp, wp = -(-h // 2), -(-wd // 2)
    if 2 * hp != h or 2 * wp != wd:
        padded = np.full((n, c, 2 * hp, 2 * wp), -np.inf)
        padded[:, :, :h, :wd] = x
    else:
        padded = x
    xr = padded.reshape(n, c, hp, 2, wp, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, hp, wp, 4
    )
    idx = xr.argmax(-1)
    out = np.take_along_axis(xr, idx[..., None], -1)[..., 0]
    return out, idx, (h, wd)


def _maxpool2_back(dout, idx, orig_hw):
    n, c, hp, wp = dout.shape
    h, wd = orig_hw
    dxr = np.zeros((n, c, hp, wp, 4))
    np.put_along_axis(dxr, idx[..., None], dout[..., None], -1)
    dpad = dxr.reshape(n, c, hp, wp, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, 2 * hp, 2 * wp
    )
    return dpad[:, :, :h, :wd]


def _global_max(x):
    n, c = x.shape[:2]
    flat = x.reshape(n, c, -1)
    idx = flat.argmax(-1)
    return np.take_along_axis(flat, idx[..., None], -1)[..., 0], idx


def _global_max_back(dout, idx, x_shape):
    n, c = x_shape[:2]
    dflat = np.zeros((n, c, x_shape[2] * x_shape[3]))
    np.put_along_axis(dflat, idx[..., None], dout[..., None], -1)
    return dflat.reshape(x_shape)


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(model, x, keep_cache):
    _check_extent(x.shape[1], x.shape[2])
    # per-clip spectral mean normalisation: log-mel magnitudes are one-sided,
    # and on an uncentred non-negative field the 1-and-2-filter early layers
    # rectify to zero everywhere whenever a filter's tap sum draws negative
    x = x - x.mean(axis=(1, 2), keepdims=True)
    z1 = conv1d_freq(x, model.conv1_w, model.conv1_b)
    a1 = np.maximum(z1, 0.0)
    x2 = a1[:, None, :, :]
    z2, cols2 = _conv2d(x2, model.conv2_w, model.conv2_b)
    a2 = np.maximum(z2, 0.0)
    p2, idx2, hw2 = _maxpool2(a2)
    z3, cols3 = _conv2d(p2, model.conv3_w, model.conv3_b)
    a3 = np.maximum(z3, 0.0)
    p3, idx3, hw3 = _maxpool2(a3)
    z4, cols4 = _conv2d(p3, model.conv4_w, model.conv4_b)
    a4 = np.maximum(z4, 0.0)
    # the 2x2 pool after conv4 is absorbed by the global max (max of maxes)
    g, gidx = _global_max(a4)
    z5 = g @ model.dense1_w.T + model.dense1_b
    a5 = np.maximum(z5, 0.0)
    logits = a5 @ model.dense2_w.T + model.dense2_b
    probs = _softmax(logits)
    if not keep_cache:
        return probs, None
    cache = dict(
        x=x, z1=z1, x2=x2, z2=z2, cols2=cols2, idx2=idx2, hw2=hw2,
        p2=p2, z3=z3, cols3=cols3, idx3=idx3, hw3=hw3, p3=p3,
        z4=z4, a4=a4, cols4=cols4, gidx=gidx, g=g, z5=z5, a5=a5, probs=probs,
    )
    return probs, cache


def forward_batch(model: ClassifierModel, x) -> np.ndarray:
    """Class probabilities for a stack of equally shaped [T x F] inputs."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError("expected a batch shaped [n, frames, bins]")
    probs, _ = _forward(model, x, keep_cache=False)
    return probs


def forward(model: ClassifierModel, spec: Spectrogram) -> np.ndarray:
    """Softmax class probabilities for one mel spectrogram."""
    return forward_batch(model, spec.frames[None])[0]


def predict_label(model: ClassifierModel, spec: Spectrogram) -> int:
    return int(np.argmax(forward(model, spec)))


def true_class_score(model: ClassifierModel, spec: Spectrogram, label: int) -> float:
    """Probability the model assigns to the given label."""
    if not 0 <= label < model.n_classes:
        raise ValueError(f"label {label} out of range for {model.n_classes} classes")
    return float(forward(model, spec)[label])


def loss_and_grads(model: ClassifierModel, x, labels):
    """Mean cross-entropy over a batch plus analytic gradients for every tensor."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = x.shape[0]
    probs, c = _forward(model, x, keep_cache=True)
    eps = 1e-12
    loss = float(-np.mean(np.log(probs[np.arange(n), labels] + eps)))

    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grads = {}
    grads["dense2_w"] = dlogits.T @ c["a5"]
    grads["dense2_b"] = dlogits.sum(axis=0)
    da5 = dlogits @ model.dense2_w
    dz5 = da5 * (c["z5"] > 0)
    grads["dense1_w"] = dz5.T @ c["g"]
    grads["dense1_b"] = dz5.sum(axis=0)
    dg = dz5 @ model.dense1_w
    da4 = _global_max_back(dg, c["gidx"], c["a4"].shape)
    dz4 = da4 * (c["z4"] > 0)
    dp3, grads["conv4_w"], grads["conv4_b"] = _conv2d_back(
        dz4, c["cols4"], model.conv4_w, c["p3"].shape
    )
    da3 = _maxpool2_back(dp3, c["idx3"], c["hw3"])
    dz3 = da3 * (c["z3"] > 0)
    dp2, grads["conv3_w"], grads["conv3_b"] = _conv2d_back(
        dz3, c["cols3"], model.conv3_w, c["p2"].shape
    )
    da2 = _maxpool2_back(dp2, c["idx2"], c["hw2"])
    dz2 = da2 * (c["z2"] > 0)
    dx2, grads["conv2_w"], grads["conv2_b"] = _conv2d_back(
        dz2, c["cols2"], model.conv2_w, c["x2"].shape
    )
    da1 = dx2[:, 0]
    dz1 = da1 * (c["z1"] > 0)
    win = np.lib.stride_tricks.sliding_window_view(c["x"], 4, axis=2)
    grads["conv1_w"] = np.einsum("ntj,ntjk->k", dz1, win)
    grads["conv1_b"] = float(dz1.sum())
    return loss, grads, probs


def _random_keep_mask(n_segments, keep_prob, rng):
    mask = rng.random(n_segments) < keep_prob
    while not mask.any():
        mask = rng.random(n_segments) < keep_prob
    return mask


def _grouped(items):
    """Group (input, position) pairs by input shape, deterministically ordered."""
    groups = {}
    for pos, arr in items:
        groups.setdefault(arr.shape, []).append((pos, arr))
    return [groups[k] for k in sorted(groups)]


def predict_batch(model: ClassifierModel, specs) -> np.ndarray:
    """Argmax labels for a list of Spectrograms of possibly different lengths."""
    out = np.empty(len(specs), dtype=np.int64)
    items = [(i, spec.frames) for i, spec in enumerate(specs)]
    for group in _grouped(items):
        positions = [p for p, _ in group]
        probs = forward_batch(model, np.stack([a for _, a in group]))
        out[positions] = probs.argmax(axis=1)
    return out


def train_classifier(clips, cfg: TrainConfig, val_clips=None, n_mel: int = 32):
    """Cross-entropy SGD (momentum) with perforate-then-impute augmentation.

    Each epoch every clip is independently perforated with probability
    augment_prob (random keep-mask, then imputation) before entering its
    mini-batch.  Aborts on divergence.  Returns (model, stats) where stats
    carries final train and validation accuracy.
    """
    from .audio_core import analyze_clip

    clips = list(clips)
    labels = np.array([c.label for c in clips], dtype=np.int64)
    if any(c.label is None for c in clips):
        raise ValueError("all training clips need labels")
    n_classes = int(labels.max()) + 1
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    init_seed, flow_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    model = init_classifier(n_classes, n_mel=n_mel, seed=init_seed)
    rng = np.random.default_rng(flow_seed)
    prepared = [analyze_clip(c, n_mel) for c in clips]

    velocity = {k: np.zeros_like(np.asarray(v, dtype=np.float64)) for k, v in model.params().items()}
    params = model.params()
    last_loss = float("nan")
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(clips))
        for start in range(0, len(order), cfg.batch):
            batch_ids = order[start : start + cfg.batch]
            items = []
            for pos, ci in enumerate(batch_ids):
                mel, view = prepared[ci]
                if cfg.augment_prob > 0 and rng.random() < cfg.augment_prob:
                    mask = _random_keep_mask(view.n_segments, cfg.mask_keep_prob, rng)
                    mel = impute(mel, mask, view)
                items.append((pos, mel.frames))
            total = len(batch_ids)
            agg = {k: np.zeros_like(v) for k, v in velocity.items()}
            loss = 0.0
            for group in _grouped(items):
                positions = [p for p, _ in group]
                x = np.stack([a for _, a in group])
                share = len(group) / total
                g_loss, grads, _ = loss_and_grads(model, x, labels[batch_ids[positions]])
                loss += share * g_loss
                for k in agg:
                    agg[k] += share * np.asarray(grads[k])
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"training diverged (non-finite loss) at epoch {epoch}"
                )
            last_loss = loss
            for k in velocity:
                velocity[k] = cfg.momentum * velocity[k] - cfg.lr * agg[k]
                updated = np.asarray(params[k], dtype=np.float64) + velocity[k]
                setattr(model, k, updated if updated.ndim else float(updated))
                params = model.params()

    stats = {"final_loss": last_loss}
    train_pred = predict_batch(model, [mel for mel, _ in prepared])
    stats["train_accuracy"] = float(np.mean(train_pred == labels))
    if val_clips:
        val_prepared = [analyze_clip(c, n_mel)[0] for c in val_clips]
        val_labels = np.array([c.label for c in val_clips])
        val_pred = predict_batch(model, val_prepared)
        stats["val_accuracy"] = float(np.mean(val_pred == val_labels))
    return model, stats


def save_classifier(path, model: ClassifierModel) -> None:
    meta = {"n_classes": model.n_classes, "n_mel": model.n_mel}
    save_arrays(path, "classifier", meta, model.params())


def load_classifier(path) -> ClassifierModel:
    kind, meta, arrays = load_arrays(path)
    if kind != "classifier":
        raise ValueError(f"{path}: expected a classifier model, got {kind!r}")
    return ClassifierModel(
        conv1_w=arrays["conv1_w"],
        conv1_b=float(arrays["conv1_b"]),
        conv2_w=arrays["conv2_w"],
        conv2_b=arrays["conv2_b"],
        conv3_w=arrays["conv3_w"],
        conv3_b=arrays["conv3_b"],
        conv4_w=arrays["conv4_w"],
        conv4_b=arrays["conv4_b"],
        dense1_w=arrays["dense1_w"],
        dense1_b=arrays["dense1_b"],
        dense2_w=arrays["dense2_w"],
        dense2_b=arrays["dense2_b"],
        n_classes=int(meta["n_classes"]),
        n_mel=int(meta["n_mel"]),
    )
