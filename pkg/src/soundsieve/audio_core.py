"""Waveform ingestion and the spectral front end.

The chain mirrors what the sensing node itself runs: audio is captured at
5 kHz, cut into non-overlapping 100 ms segments, and analysed with a 50 ms
Hann window hopped every 25 ms, so a full segment owns exactly four frames
(the last frame of a segment reads 25 ms into the next one).  Magnitude
spectra can be projected onto a small triangular mel filterbank
(0-2500 Hz, log1p compressed) and a 1x4 frequency-axis convolution turns
one segment's frames into the compact feature vector that is shared
between the sampling controller and the classifier's first layer.

All functions are pure; clips and spectrograms are treated as immutable.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE = 5000  # Hz; everything downstream assumes this rate
SEGMENT_MS = 100
WINDOW_MS = 50
HOP_MS = 25
FFT_SIZE = 256  # 250-sample window zero-padded to a power of two
N_BINS = FFT_SIZE // 2 + 1
MEL_FMAX = 2500.0  # Nyquist at 5 kHz
DEFAULT_N_MEL = 32

SAMPLES_PER_SEGMENT = SAMPLE_RATE * SEGMENT_MS // 1000  # 500
WINDOW_SAMPLES = SAMPLE_RATE * WINDOW_MS // 1000  # 250
HOP_SAMPLES = SAMPLE_RATE * HOP_MS // 1000  # 125
FRAMES_PER_SEGMENT = SEGMENT_MS // HOP_MS  # 4


class AudioFormatError(ValueError):
    """Raised for WAV files this pipeline cannot ingest."""


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform with amplitudes in [-1, 1] and an optional class label."""

    sample_rate: int
    samples: np.ndarray
    label: int | None = None
    clip_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")

    @property
    def duration_ms(self) -> float:
        return 1000.0 * self.samples.size / self.sample_rate

    @property
    def n_segments(self) -> int:
        """Number of whole 100 ms segments (a shorter tail is dropped)."""
        return int(self.samples.size // (self.sample_rate * SEGMENT_MS // 1000))


@dataclass(frozen=True)
class Spectrogram:
    """Non-negative time-frequency magnitudes, one row per analysis frame."""

    frames: np.ndarray
    window_ms: int = WINDOW_MS
    hop_ms: int = HOP_MS

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 2:
            raise ValueError("frames must be a 2-D [n_frames x n_bins] matrix")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_bins(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class SegmentView:
    """Maps each 100 ms segment to the contiguous frames whose window starts in it."""

    n_segments: int
    frame_slices: tuple = ()
    segment_ms: int = SEGMENT_MS

    def frames_of(self, segment: int) -> range:
        start, stop = self.frame_slices[segment]
        return range(start, stop)

    @property
    def n_frames(self) -> int:
        return self.frame_slices[-1][1] if self.frame_slices else 0


def load_wav(path) -> AudioClip:
    """Read a 16-bit PCM mono RIFF WAV and resample it to 5 kHz.

    Amplitudes are scaled by 1/32768; resampling is linear interpolation.
    Stereo, non-16-bit, or malformed files are rejected.
    """
    try:
        with wave.open(str(path), "rb") as wav:
            n_channels = wav.getnchannels()
            sampwidth = wav.getsampwidth()
            framerate = wav.getframerate()
            raw = wav.readframes(wav.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: malformed RIFF/WAV file ({exc})") from exc
    if n_channels != 1:
        raise AudioFormatError(f"{path}: expected mono audio, got {n_channels} channels")
    if sampwidth != 2:
        raise AudioFormatError(f"{path}: expected 16-bit PCM, got {8 * sampwidth}-bit")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if samples.size == 0:
        raise AudioFormatError(f"{path}: file contains no samples")
    samples = resample(samples, framerate, SAMPLE_RATE)
    return AudioClip(SAMPLE_RATE, samples, clip_id=str(path))


def save_wav(path, clip: AudioClip) -> None:
    """Write a clip as 16-bit PCM mono WAV at its own sample rate."""
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(clip.sample_rate)
        wav.writeframes(pcm.tobytes())


def resample(samples: np.ndarray, src_rate: int, dst_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Linear-interpolation resampling; preserves duration within one sample."""
    samples = np.asarray(samples, dtype=np.float64)
    if src_rate == dst_rate:
        return samples.copy()
    n_out = int(round(samples.size * dst_rate / src_rate))
    t_out = np.arange(n_out) / dst_rate
    t_in = np.arange(samples.size) / src_rate
    return np.interp(t_out, t_in, samples)


def hann_window(n: int) -> np.ndarray:
    # periodic Hann, the conventional STFT analysis taper
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(clip: AudioClip) -> Spectrogram:
    """Hann-windowed magnitude STFT (50 ms window, 25 ms hop, 256-point FFT)."""
    if clip.sample_rate != SAMPLE_RATE:
        raise ValueError(f"clip must be at {SAMPLE_RATE} Hz; resample first")
    x = clip.samples
    if x.size < WINDOW_SAMPLES:
        raise ValueError(
            f"clip too short for one {WINDOW_MS} ms analysis window "
            f"({x.size} < {WINDOW_SAMPLES} samples)"
        )
    n_frames = (x.size - WINDOW_SAMPLES) // HOP_SAMPLES + 1
    starts = np.arange(n_frames) * HOP_SAMPLES
    windows = x[starts[:, None] + np.arange(WINDOW_SAMPLES)[None, :]]
    mags = np.abs(np.fft.rfft(windows * hann_window(WINDOW_SAMPLES), n=FFT_SIZE, axis=1))
    return Spectrogram(mags)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mel: int, n_bins: int = N_BINS) -> np.ndarray:
    """Triangular mel filters over 0-2500 Hz as an [n_mel x n_bins] matrix.

    Unit-peak triangles (no area normalisation): a filter's response to a
    flat spectrum is simply its weight sum.
    """
    if n_mel < 1:
        raise ValueError(f"n_mel must be >= 1, got {n_mel}")
    if n_mel > n_bins:
        raise ValueError(f"n_mel ({n_mel}) cannot exceed n_bins ({n_bins})")
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(MEL_FMAX), n_mel + 2))
    bin_hz = np.arange(n_bins) * SAMPLE_RATE / FFT_SIZE
    fb = np.zeros((n_mel, n_bins))
    for m in range(n_mel):
        lo, ctr, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        rising = (bin_hz - lo) / (ctr - lo)
        falling = (hi - bin_hz) / (hi - ctr)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def mel_project(spec: Spectrogram, n_mel: int = DEFAULT_N_MEL) -> Spectrogram:
    """Project magnitudes onto the mel filterbank and log1p-compress.

    log(1+x) rather than log(x) so exact zeros (silence, imputed gaps)
    stay finite.
    """
    fb = mel_filterbank(n_mel, spec.n_bins)
    return Spectrogram(np.log1p(spec.frames @ fb.T), spec.window_ms, spec.hop_ms)


def segment_view(clip: AudioClip) -> SegmentView:
    """Partition a clip's frames into whole 100 ms segments.

    Frames are assigned to the segment containing their window start, so a
    full interior segment owns 4 frames and the final segment owns 3 (its
    fourth window would need samples past the clip's end).  A tail shorter
    than one segment is dropped entirely.
    """
    n_segments = clip.samples.size // SAMPLES_PER_SEGMENT
    if n_segments < 1:
        raise ValueError("clip shorter than one 100 ms segment")
    n_frames = FRAMES_PER_SEGMENT * n_segments - 1
    slices = tuple(
        (FRAMES_PER_SEGMENT * s, min(FRAMES_PER_SEGMENT * (s + 1), n_frames))
        for s in range(n_segments)
    )
    return SegmentView(n_segments=n_segments, frame_slices=slices)


def truncate_to_segments(clip: AudioClip) -> AudioClip:
    """Drop any tail shorter than a whole segment."""
    n_keep = (clip.samples.size // SAMPLES_PER_SEGMENT) * SAMPLES_PER_SEGMENT
    if n_keep == clip.samples.size:
        return clip
    return AudioClip(clip.sample_rate, clip.samples[:n_keep], clip.label, clip.clip_id)


def analyze_clip(clip: AudioClip, n_mel: int = DEFAULT_N_MEL):
    """Whole-segment mel spectrogram plus its segment view.

    Returns (mel: Spectrogram, view: SegmentView); the view's frames
    exactly partition the spectrogram's rows.
    """
    clip = truncate_to_segments(clip)
    view = segment_view(clip)
    mel = mel_project(stft(clip), n_mel)
    return mel, view


def segment_features(spec: Spectrogram, view: SegmentView, weights, bias: float = 0.0):
    """Per-segment feature vectors from a 1x4 frequency-axis convolution.

    `weights` is the shared 4-tap filter of the classifier's first layer.
    Each segment yields the flattened valid convolution of its frames,
    length n_frames_in_segment * (n_bins - 3).  Deterministic given the
    weights; no activation is applied.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (4,):
        raise ValueError(f"expected a 4-tap filter, got shape {w.shape}")
    conv = conv1d_freq(spec.frames, w, bias)
    return [conv[view.frame_slices[s][0]:view.frame_slices[s][1]].ravel()
            for s in range(view.n_segments)]


def conv1d_freq(frames: np.ndarray, weights: np.ndarray, bias: float = 0.0) -> np.ndarray:
    """Valid 1x4 convolution along the frequency axis of [.., n_bins] rows."""
    win = np.lib.stride_tricks.sliding_window_view(frames, weights.size, axis=-1)
    return win @ weights + bias


def write_spectrogram_csv(spec: Spectrogram, path) -> None:
    """Debug dump: one CSV row per frame."""
    np.savetxt(path, spec.frames, delimiter=",", fmt="%.17g")
