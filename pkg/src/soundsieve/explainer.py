"""Per-segment importance scoring via a locality-weighted linear surrogate.

For one clip, many perforated variants are drawn by keeping or dropping
whole segments at random, each variant is imputed and scored by the
trained classifier (probability of the clip's true class), and a ridge
regressor from the 0/1 keep-masks to those scores is fit.  Rows are
weighted by how close a mask is to the fully observed clip, measured by
cosine similarity passed through a Gaussian kernel.  The regressor's
per-segment coefficients, normalised to [-1, 1], are the clip's local
importance scores; averaging normalised scores position-wise over a
dataset gives the global scores used for sampling plans.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .audio_core import AudioClip, analyze_clip
from .imputation import impute

KERNEL_SIGMA = 0.25
ZERO_SCORE_TOL = 1e-10  # below this the solver output is noise, not importance


@dataclass(frozen=True)
class ImportanceVector:
    """Per-segment local scores for one clip, normalised to [-1, 1]."""

    clip_id: str
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))

    @property
    def n_segments(self) -> int:
        return self.scores.size


@dataclass(frozen=True)
class GlobalImportance:
    """Position-wise mean of normalised local scores over a dataset."""

    mean_score: np.ndarray
    support_count: np.ndarray

    def scores_for(self, n_segments: int) -> np.ndarray:
        """Scores for positions 0..n-1; positions without support score 0."""
        out = np.zeros(n_segments)
        k = min(n_segments, self.mean_score.size)
        out[:k] = self.mean_score[:k]
        return out


def perturb(n_segments: int, n_aug: int, keep_prob: float, seed) -> np.ndarray:
    """Draw n_aug random keep-masks, each bit independently true w.p. keep_prob.

    All-missing masks are redrawn (they cannot be imputed).  Deterministic
    given the seed.
    """
    if n_aug < 1:
        raise ValueError(f"n_aug must be >= 1, got {n_aug}")
    if not 0.0 < keep_prob < 1.0:
        raise ValueError(f"keep_prob must lie in (0, 1), got {keep_prob}")
    rng = np.random.default_rng(seed)
    masks = rng.random((n_aug, n_segments)) < keep_prob
    for i in range(n_aug):
        while not masks[i].any():
            masks[i] = rng.random(n_segments) < keep_prob
    return masks


def locality_weight(mask, sigma: float = KERNEL_SIGMA) -> float:
    """Gaussian kernel on cosine distance between a mask and the all-ones mask.

    cos_sim of a k-of-n binary mask against all-ones is sqrt(k/n), so the
    weight rises monotonically with the number of kept segments and is
    exactly 1 for the fully observed clip.
    """
    bits = np.asarray(mask, dtype=bool)
    k = int(bits.sum())
    if k == 0:
        raise ValueError("locality weight undefined for an all-missing mask")
    cos_sim = np.sqrt(k / bits.size)
    return float(np.exp(-((1.0 - cos_sim) ** 2) / sigma**2))


def ridge_weights(masks, y, sample_weight, lam: float):
    """Solve the weighted ridge normal equations for masks -> y.

    Features are the 0/1 mask bits plus an intercept column; the intercept
    is not penalised (a constant target must be absorbed entirely by it).
    Returns (coef, intercept).  Raises ValueError when lam == 0 leaves the
    system singular.
    """
    X = np.asarray(masks, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(sample_weight, dtype=np.float64)
    n_feat = X.shape[1]
    A = np.hstack([X, np.ones((X.shape[0], 1))])
    G = A.T @ (A * w[:, None])
    G[np.arange(n_feat), np.arange(n_feat)] += lam
    b = A.T @ (w * y)
    try:
        theta = np.linalg.solve(G, b)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "singular normal equations; a positive ridge penalty guarantees solvability"
        ) from exc
    return theta[:n_feat], float(theta[n_feat])


def normalize_scores(coef) -> np.ndarray:
    """Scale so that max |score| is 1; an (effectively) all-zero vector stays zero."""
    coef = np.asarray(coef, dtype=np.float64)
    peak = np.max(np.abs(coef)) if coef.size else 0.0
    if peak <= ZERO_SCORE_TOL:
        return np.zeros_like(coef)
    return coef / peak


def fit_local(
    clip: AudioClip,
    classifier,
    n_aug: int = 256,
    keep_prob: float = 0.5,
    lam: float = 1.0,
    seed=0,
    n_mel: int = 32,
    prepared=None,
) -> ImportanceVector:
    """Local importance scores for one labelled clip.

    `classifier` is either a trained ClassifierModel or any callable
    (mel_spectrogram, label) -> true-class score.  `prepared` may carry a
    precomputed (mel, view) pair to avoid re-analysis.
    """
    if clip.label is None:
        raise ValueError(f"clip {clip.clip_id!r} has no label to explain against")
    mel, view = prepared if prepared is not None else analyze_clip(clip, n_mel)
    if view.n_segments < 2:
        raise ValueError("need at least 2 segments to attribute importance")
    masks = perturb(view.n_segments, n_aug, keep_prob, seed)
    imputed = [impute(mel, m, view) for m in masks]
    if callable(classifier):
        y = np.array([classifier(spec, clip.label) for spec in imputed])
    else:
        from .classifier import forward_batch

        batch = np.stack([spec.frames for spec in imputed])
        y = forward_batch(classifier, batch)[:, clip.label]
    weights = np.array([locality_weight(m) for m in masks])
    coef, _ = ridge_weights(masks, y, weights, lam)
    return ImportanceVector(clip_id=clip.clip_id, scores=normalize_scores(coef))


def aggregate_global(importances) -> GlobalImportance:
    """Position-wise mean over the clips that contain each position."""
    importances = list(importances)
    if not importances:
        raise ValueError("cannot aggregate an empty importance collection")
    longest = max(iv.n_segments for iv in importances)
    total = np.zeros(longest)
    count = np.zeros(longest, dtype=np.int64)
    for iv in importances:
        total[: iv.n_segments] += iv.scores
        count[: iv.n_segments] += 1
    return GlobalImportance(mean_score=total / count, support_count=count)


def write_importances_csv(path, importances) -> None:
    """Persist local scores as clip_id,position,score rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "position", "score"])
        for iv in importances:
            for pos, score in enumerate(iv.scores):
                writer.writerow([iv.clip_id, pos, repr(float(score))])


def read_importances_csv(path):
    """Inverse of write_importances_csv; preserves clip order of appearance."""
    rows = {}
    order = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for clip_id, pos, score in reader:
            if clip_id not in rows:
                rows[clip_id] = {}
                order.append(clip_id)
            rows[clip_id][int(pos)] = float(score)
    out = []
    for clip_id in order:
        by_pos = rows[clip_id]
        scores = np.array([by_pos[p] for p in range(len(by_pos))])
        out.append(ImportanceVector(clip_id=clip_id, scores=scores))
    return out


def write_global_csv(path, glob: GlobalImportance) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "position", "score"])
        for pos, score in enumerate(glob.mean_score):
            writer.writerow(["__global__", pos, repr(float(score))])


def read_global_csv(path) -> GlobalImportance:
    scores = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for _, pos, score in reader:
            scores.append((int(pos), float(score)))
    scores.sort()
    mean = np.array([s for _, s in scores])
    return GlobalImportance(mean_score=mean, support_count=np.ones(mean.size, dtype=np.int64))
