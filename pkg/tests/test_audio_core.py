import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soundsieve.audio_core import (
    FFT_SIZE,
    SAMPLE_RATE,
    AudioClip,
    AudioFormatError,
    analyze_clip,
    hann_window,
    load_wav,
    mel_filterbank,
    mel_project,
    resample,
    segment_features,
    segment_view,
    stft,
    truncate_to_segments,
)


def tone(freq, seconds=1.5, rate=SAMPLE_RATE, amp=1.0):
    t = np.arange(int(seconds * rate)) / rate
    return amp * np.sin(2 * np.pi * freq * t)


def write_pcm16(path, samples, rate, channels=1, width=2):
    pcm = np.asarray(samples)
    if width == 2:
        raw = (pcm * 32767).astype("<i2").tobytes()
    else:
        raw = ((pcm * 127) + 128).astype("u1").tobytes()
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(width)
        w.setframerate(rate)
        w.writeframes(raw)


def dft_magnitude(frame, bin_index, n=FFT_SIZE):
    """Independent single-bin DFT: literal sum, no FFT library."""
    total = 0.0 + 0.0j
    for t, x in enumerate(frame):
        total += x * np.exp(-2j * np.pi * bin_index * t / n)
    return abs(total)


class TestLoadWav:
    def test_silence_survives_resampling(self, tmp_path):
        path = tmp_path / "silence.wav"
        write_pcm16(path, np.zeros(16000), 16000)
        clip = load_wav(path)
        assert clip.sample_rate == SAMPLE_RATE
        assert clip.samples.size == 5000
        assert np.all(clip.samples == 0.0)

    def test_full_scale_amplitude(self, tmp_path):
        path = tmp_path / "full.wav"
        with wave.open(str(path), "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(5000)
            w.writeframes(np.full(5000, 32767, dtype="<i2").tobytes())
        clip = load_wav(path)
        assert np.allclose(clip.samples, 32767 / 32768)

    def test_sine_dominant_frequency_preserved(self, tmp_path):
        path = tmp_path / "sine.wav"
        write_pcm16(path, 0.8 * np.sin(2 * np.pi * 440 * np.arange(16000) / 16000), 16000)
        clip = load_wav(path)
        spectrum = np.abs(np.fft.rfft(clip.samples))
        peak_hz = spectrum.argmax() * SAMPLE_RATE / clip.samples.size
        assert abs(peak_hz - 440) < 2.0

    def test_rejects_stereo(self, tmp_path):
        path = tmp_path / "stereo.wav"
        write_pcm16(path, np.zeros(2000), 8000, channels=2)
        with pytest.raises(AudioFormatError, match="mono"):
            load_wav(path)

    def test_rejects_8_bit(self, tmp_path):
        path = tmp_path / "eight.wav"
        write_pcm16(path, np.zeros(1000), 8000, width=1)
        with pytest.raises(AudioFormatError, match="16-bit"):
            load_wav(path)

    def test_rejects_malformed_riff(self, tmp_path):
        path = tmp_path / "garbage.wav"
        path.write_bytes(b"not a riff header at all")
        with pytest.raises(AudioFormatError, match="malformed"):
            load_wav(path)


class TestResample:
    def test_duration_preserved_within_one_sample(self):
        for n, rate in [(16000, 16000), (44100, 44100), (12345, 11025)]:
            out = resample(np.zeros(n), rate)
            assert abs(out.size / SAMPLE_RATE - n / rate) <= 1.0 / SAMPLE_RATE


class TestStft:
    def test_zero_clip_zero_spectrogram(self):
        clip = AudioClip(SAMPLE_RATE, np.zeros(5000))
        assert np.all(stft(clip).frames == 0.0)

    def test_frame_count_formula(self):
        clip = AudioClip(SAMPLE_RATE, np.zeros(7500))  # 1.5 s
        assert stft(clip).n_frames == 59

    def test_pure_tone_argmax_bin(self):
        clip = AudioClip(SAMPLE_RATE, tone(500))
        spec = stft(clip)
        expected_bin = round(500 * FFT_SIZE / SAMPLE_RATE)
        assert expected_bin == 26
        assert np.all(spec.frames.argmax(axis=1) == expected_bin)

    def test_matches_literal_dft(self):
        clip = AudioClip(SAMPLE_RATE, tone(500, seconds=0.2))
        spec = stft(clip)
        frame = clip.samples[:250] * hann_window(250)
        padded = np.concatenate([frame, np.zeros(FFT_SIZE - 250)])
        for k in (0, 10, 26, 64, 128):
            assert spec.frames[0, k] == pytest.approx(dft_magnitude(padded, k), rel=1e-9, abs=1e-9)

    def test_too_short_clip_rejected(self):
        with pytest.raises(ValueError, match="too short"):
            stft(AudioClip(SAMPLE_RATE, np.zeros(249)))

    def test_homogeneity(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=2500)
        base = stft(AudioClip(SAMPLE_RATE, x)).frames
        scaled = stft(AudioClip(SAMPLE_RATE, 3.5 * x)).frames
        assert np.allclose(scaled, 3.5 * base, rtol=1e-9)


class TestMelProject:
    def test_zero_in_zero_out(self):
        clip = AudioClip(SAMPLE_RATE, np.zeros(5000))
        mel = mel_project(stft(clip), 32)
        assert np.all(mel.frames == 0.0)

    def test_classifier_input_shape(self):
        clip = AudioClip(SAMPLE_RATE, tone(440, seconds=1.5))
        mel = mel_project(stft(clip), 32)
        assert mel.frames.shape == (59, 32)

    def test_flat_spectrum_gives_weight_sums(self):
        # independent filterbank oracle: literal triangle formula per bin
        from soundsieve.audio_core import MEL_FMAX, hz_to_mel, mel_to_hz

        n_mel, n_bins = 32, 129
        edges = [float(mel_to_hz(m)) for m in np.linspace(0, hz_to_mel(MEL_FMAX), n_mel + 2)]
        oracle = np.zeros((n_mel, n_bins))
        for m in range(n_mel):
            lo, ctr, hi = edges[m], edges[m + 1], edges[m + 2]
            for k in range(n_bins):
                f = k * SAMPLE_RATE / FFT_SIZE
                if lo < f < ctr:
                    oracle[m, k] = (f - lo) / (ctr - lo)
                elif ctr <= f < hi:
                    oracle[m, k] = (hi - f) / (hi - ctr)
        fb = mel_filterbank(n_mel, n_bins)
        assert np.allclose(fb, oracle, atol=1e-12)
        from soundsieve.audio_core import Spectrogram

        flat = Spectrogram(np.ones((3, n_bins)))
        projected = mel_project(flat, n_mel)
        assert np.allclose(projected.frames, np.log1p(oracle.sum(axis=1))[None, :])

    def test_invalid_n_mel(self):
        clip = AudioClip(SAMPLE_RATE, np.zeros(5000))
        with pytest.raises(ValueError, match="n_mel"):
            mel_project(stft(clip), 0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 58), st.integers(0, 128), st.floats(0.01, 5.0))
    def test_monotone_in_magnitudes(self, t, k, bump):
        clip = AudioClip(SAMPLE_RATE, tone(700, seconds=1.5, amp=0.3))
        spec = stft(clip)
        base = mel_project(spec, 32).frames
        frames = spec.frames.copy()
        frames[t, k] += bump
        from soundsieve.audio_core import Spectrogram

        bumped = mel_project(Spectrogram(frames), 32).frames
        assert np.all(bumped >= base - 1e-12)


class TestSegmentView:
    def test_partition_and_interior_ownership(self):
        clip = AudioClip(SAMPLE_RATE, np.zeros(10000))  # 2.0 s
        view = segment_view(clip)
        mel, _ = analyze_clip(clip)
        assert view.n_segments == 20
        owned = sum(len(view.frames_of(s)) for s in range(view.n_segments))
        assert owned == mel.n_frames  # partition: every frame owned once
        for s in range(view.n_segments - 1):
            assert len(view.frames_of(s)) == 4
        assert len(view.frames_of(view.n_segments - 1)) == 3

    def test_no_frame_shared(self):
        clip = AudioClip(SAMPLE_RATE, np.zeros(7500))
        view = segment_view(clip)
        seen = set()
        for s in range(view.n_segments):
            for f in view.frames_of(s):
                assert f not in seen
                seen.add(f)

    def test_tail_shorter_than_segment_dropped(self):
        clip = AudioClip(SAMPLE_RATE, np.ones(10499))  # 2.0998 s
        assert truncate_to_segments(clip).samples.size == 10000
        assert segment_view(clip).n_segments == 20


class TestSegmentFeatures:
    def test_zero_filter_zero_features(self):
        clip = AudioClip(SAMPLE_RATE, tone(440))
        mel, view = analyze_clip(clip)
        feats = segment_features(mel, view, [0.0, 0.0, 0.0, 0.0], 0.0)
        assert all(np.all(fv == 0.0) for fv in feats)

    def test_identity_tap(self):
        clip = AudioClip(SAMPLE_RATE, tone(440))
        mel, view = analyze_clip(clip)
        feats = segment_features(mel, view, [1.0, 0.0, 0.0, 0.0], 0.0)
        first = feats[0].reshape(4, -1)
        assert np.array_equal(first, mel.frames[0:4, : mel.n_bins - 3])

    def test_feature_length(self):
        clip = AudioClip(SAMPLE_RATE, tone(440))
        mel, view = analyze_clip(clip)
        rng = np.random.default_rng(3)
        feats = segment_features(mel, view, rng.normal(size=4), 0.1)
        assert feats[0].size == 4 * (32 - 4 + 1) * 1  # 116
