"""Regression network predicting the importance of the next five segments.

Input is the just-read segment's spectral feature vector (the shared 1x4
convolution output) with the segment's normalised position appended; one
rectified hidden layer maps it to five scores, one per upcoming segment.
Trained offline on the explainer's output with plain mini-batch SGD so it
stays cheap enough for the sensing node itself.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .modelio import load_arrays, save_arrays

HORIZON = 5


@dataclass
class PredictorModel:
    w_hidden: np.ndarray  # (hidden, input_dim)
    b_hidden: np.ndarray
    w_out: np.ndarray  # (HORIZON, hidden)
    b_out: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w_hidden.shape[1]

    @property
    def horizon(self) -> int:
        return self.w_out.shape[0]


@dataclass
class PredictorDataset:
    inputs: np.ndarray  # (n, input_dim)
    targets: np.ndarray  # (n, HORIZON)

    def __len__(self) -> int:
        return self.inputs.shape[0]


def runtime_input(feature_vector, segment_index: int, n_segments: int) -> np.ndarray:
    """Feature vector with the normalised position appended (the model input)."""
    return np.append(np.asarray(feature_vector, dtype=np.float64),
                     segment_index / n_segments)


def build_dataset(clips, importances, features) -> PredictorDataset:
    """One example per (segment i, scores of segments i+1..i+5) pair.

    For an m-segment clip every i in [0, m-6] is used, i.e. m-5 examples;
    clips with fewer than 6 segments are skipped with a warning.  `clips`,
    `importances` and `features` are aligned sequences (features holds the
    per-segment vectors of each clip).
    """
    xs, ys = [], []
    for clip, iv, feats in zip(clips, importances, features):
        m = iv.scores.size
        if m < 6:
            warnings.warn(
                f"clip {clip.clip_id!r} has only {m} segments (< 6); skipped",
                stacklevel=2,
            )
            continue
        for i in range(m - 5):
            xs.append(runtime_input(feats[i], i, m))
            ys.append(iv.scores[i + 1 : i + 1 + HORIZON])
    if xs:
        return PredictorDataset(np.array(xs), np.array(ys))
    return PredictorDataset(np.zeros((0, 1)), np.zeros((0, HORIZON)))


def init_predictor(input_dim: int, hidden: int = 32, seed=0) -> PredictorModel:
    # zero output layer: the net starts as the constant-zero predictor and
    # grows structure from there, so the bias path is never fighting a
    # random readout (scores live in [-1, 1] around 0 anyway)
    rng = np.random.default_rng(seed)
    return PredictorModel(
        w_hidden=rng.normal(0.0, np.sqrt(2.0 / input_dim), (hidden, input_dim)),
        b_hidden=np.zeros(hidden),
        w_out=np.zeros((HORIZON, hidden)),
        b_out=np.zeros(HORIZON),
    )


def _forward(model, x):
    z = x @ model.w_hidden.T + model.b_hidden
    h = np.maximum(z, 0.0)
    return z, h, h @ model.w_out.T + model.b_out


def predict_next(model: PredictorModel, feature_vector) -> np.ndarray:
    """Deterministic forward pass; outputs clamped to [-1, 1]."""
    x = np.asarray(feature_vector, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ValueError(
            f"feature vector has dim {x.shape}, model expects ({model.input_dim},)"
        )
    _, _, out = _forward(model, x[None])
    return np.clip(out[0], -1.0, 1.0)


def loss_and_grads(model: PredictorModel, x, y):
    """Squared error summed over the horizon, averaged over the batch.

    Summing (not averaging) the five outputs keeps the gradient scale
    independent of the horizon, which is what lets the pinned defaults
    (50 epochs at lr 0.01) actually reach the bias-only optimum.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z, h, out = _forward(model, x)
    diff = out - y
    loss = float(np.mean(np.sum(diff**2, axis=1)))
    dout = 2.0 * diff / diff.shape[0]
    grads = {
        "w_out": dout.T @ h,
        "b_out": dout.sum(axis=0),
    }
    dh = dout @ model.w_out
    dz = dh * (z > 0)
    grads["w_hidden"] = dz.T @ x
    grads["b_hidden"] = dz.sum(axis=0)
    return loss, grads


def train_predictor(
    dataset: PredictorDataset,
    epochs: int = 50,
    lr: float = 0.01,
    batch: int = 32,
    hidden: int = 32,
    seed=0,
):
    """Mini-batch SGD on the MSE; returns (model, final_epoch_loss).

    Zero epochs returns the seeded initialisation untouched.  Aborts on a
    non-finite loss.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train a predictor on an empty dataset")
    init_seed, flow_seed = np.random.SeedSequence(seed).spawn(2)
    model = init_predictor(dataset.inputs.shape[1], hidden=hidden, seed=init_seed)
    # start the readout at the target mean so the early epochs shape the
    # hidden layer instead of re-deriving the dataset's baseline level
    model.b_out = dataset.targets.mean(axis=0)
    rng = np.random.default_rng(flow_seed)
    final_loss = float("nan")
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        epoch_loss = 0.0
        for start in range(0, len(order), batch):
            ids = order[start : start + batch]
            loss, grads = loss_and_grads(model, dataset.inputs[ids], dataset.targets[ids])
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"predictor training diverged (non-finite loss) at epoch {epoch}"
                )
            epoch_loss += loss * len(ids)
            model.w_hidden = model.w_hidden - lr * grads["w_hidden"]
            model.b_hidden = model.b_hidden - lr * grads["b_hidden"]
            model.w_out = model.w_out - lr * grads["w_out"]
            model.b_out = model.b_out - lr * grads["b_out"]
        final_loss = epoch_loss / len(dataset)
    return model, final_loss


def save_predictor(path, model: PredictorModel) -> None:
    save_arrays(
        path,
        "predictor",
        {"input_dim": model.input_dim, "hidden": model.w_hidden.shape[0]},
        {
            "w_hidden": model.w_hidden,
            "b_hidden": model.b_hidden,
            "w_out": model.w_out,
            "b_out": model.b_out,
        },
    )


def load_predictor(path) -> PredictorModel:
    kind, _, arrays = load_arrays(path)
    if kind != "predictor":
        raise ValueError(f"{path}: expected a predictor model, got {kind!r}")
    return PredictorModel(
        w_hidden=arrays["w_hidden"],
        b_hidden=arrays["b_hidden"],
        w_out=arrays["w_out"],
        b_out=arrays["b_out"],
    )
