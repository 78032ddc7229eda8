"""Frequency-domain gap filling for perforated spectrograms.

Missing segments are reconstructed frame by frame by linearly blending the
two observed frames that bound each gap.  The gap is processed from both
ends inward: each pass fills the current first and last missing frames,
then the gap shrinks by one on each side and the just-imputed frames
become the anchors of the next pass.  A gap touching the start or end of
the clip has only one anchor and is filled by replicating it.

The iterative two-ended scheme is the contract here, not one-shot linear
interpolation; `impute_oracle` is a deliberately literal, loop-per-bin
transcription used to cross-check the vectorised `impute`.
"""

from __future__ import annotations

import numpy as np

from .audio_core import SegmentView, Spectrogram


def frame_mask(view: SegmentView, segment_mask) -> np.ndarray:
    """Expand a per-segment sensed mask to per-frame observed flags."""
    bits = np.asarray(segment_mask, dtype=bool)
    if bits.shape != (view.n_segments,):
        raise ValueError(
            f"mask length {bits.shape} does not match {view.n_segments} segments"
        )
    observed = np.zeros(view.n_frames, dtype=bool)
    for s in range(view.n_segments):
        start, stop = view.frame_slices[s]
        observed[start:stop] = bits[s]
    return observed


def _gaps(observed: np.ndarray):
    """Maximal runs of missing frames as (first, last) index pairs."""
    gaps = []
    start = None
    for t, obs in enumerate(observed):
        if not obs and start is None:
            start = t
        elif obs and start is not None:
            gaps.append((start, t - 1))
            start = None
    if start is not None:
        gaps.append((start, observed.size - 1))
    return gaps


def impute(spec: Spectrogram, segment_mask, view: SegmentView) -> Spectrogram:
    """Fill every frame of every missing segment; observed frames unchanged.

    Interior gaps use the two-ended interpolation described above; a
    missing prefix or suffix replicates its single anchor frame.  Raises
    if the mask observes nothing (there is no anchor to interpolate from).
    """
    observed = frame_mask(view, segment_mask)
    if not observed.any():
        raise ValueError("all segments missing; nothing anchors the imputation")
    out = spec.frames.copy()
    n = out.shape[0]
    for first, last in _gaps(observed):
        if first == 0:
            out[first:last + 1] = out[last + 1]
        elif last == n - 1:
            out[first:last + 1] = out[first - 1]
        else:
            t_s, t_e = first, last
            while t_s <= t_e:
                denom = float((t_e + 1) - (t_s - 1))
                r = (t_s - (t_s - 1)) / denom
                out[t_s] = (1.0 - r) * out[t_s - 1] + r * out[t_e + 1]
                if t_e != t_s:
                    r = (t_e - (t_s - 1)) / denom
                    out[t_e] = (1.0 - r) * out[t_s - 1] + r * out[t_e + 1]
                t_s += 1
                t_e -= 1
    return Spectrogram(out, spec.window_ms, spec.hop_ms)


def impute_oracle(spec: Spectrogram, segment_mask, view: SegmentView) -> Spectrogram:
    """Literal, per-bin transcription of the imputation procedure (test oracle)."""
    observed = frame_mask(view, segment_mask)
    if not observed.any():
        raise ValueError("all segments missing; nothing anchors the imputation")
    out = spec.frames.copy()
    n_frames, n_bins = out.shape
    for first, last in _gaps(observed):
        if first == 0:
            for t in range(first, last + 1):
                for f in range(n_bins):
                    out[t, f] = out[last + 1, f]
            continue
        if last == n_frames - 1:
            for t in range(first, last + 1):
                for f in range(n_bins):
                    out[t, f] = out[first - 1, f]
            continue
        t_s, t_e = first, last
        while not t_s > t_e:
            ends = [t_s] if t_s == t_e else [t_s, t_e]
            for t in ends:
                for f in range(n_bins):
                    r = (t - (t_s - 1)) / ((t_e + 1) - (t_s - 1))
                    out[t, f] = (1.0 - r) * out[t_s - 1, f] + r * out[t_e + 1, f]
            t_s += 1
            t_e -= 1
    return Spectrogram(out, spec.window_ms, spec.hop_ms)


def zero_fill(spec: Spectrogram, segment_mask, view: SegmentView) -> Spectrogram:
    """Do-nothing baseline: missing frames are simply set to zero."""
    observed = frame_mask(view, segment_mask)
    out = spec.frames.copy()
    out[~observed] = 0.0
    return Spectrogram(out, spec.window_ms, spec.hop_ms)
