"""Tests for waveform I/O, spectrograms, pitch tracking, and Griffin-Lim."""

import math
import struct

import numpy as np
import pytest

from prosohmm.audio import (
    AudioBuffer,
    F0Config,
    MelConfig,
    MelSpectrogram,
    energy_contour,
    estimate_f0,
    frame_count,
    griffin_lim,
    hann_window,
    hz_to_mel,
    istft,
    load_wav,
    mel_filter_centers_hz,
    mel_filterbank,
    mel_spectrogram,
    mel_to_hz,
    mel_to_linear_magnitude,
    save_wav,
    stft,
)
from prosohmm.errors import (
    MalformedWavError,
    UnsupportedCodecError,
    ValidationError,
)

SR = 22050


def sine(hz, seconds=1.0, sr=SR, amp=0.5):
    t = np.arange(int(seconds * sr)) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * hz * t), sr)


# ---------------------------------------------------------------------------
# Framing and windows
# ---------------------------------------------------------------------------


def test_frame_count_formula():
    # 1 + floor((22050 - 1024) / 256) = 1 + 82, worked by hand
    assert frame_count(22050, 1024, 256) == 83
    assert frame_count(1024, 1024, 256) == 1
    assert frame_count(1023, 1024, 256) == 0
    assert frame_count(1024 + 255, 1024, 256) == 1
    assert frame_count(1024 + 256, 1024, 256) == 2


def test_hann_window_periodic():
    # periodic Hann of length 4: 0.5 - 0.5 cos(2 pi k / 4)
    np.testing.assert_allclose(hann_window(4), [0.0, 0.5, 1.0, 0.5], atol=1e-15)
    w = hann_window(1024)
    assert w[0] == 0.0 and len(w) == 1024
    assert abs(np.mean(w**2) - 3.0 / 8.0) < 1e-4  # periodic Hann power


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------


def test_wav_round_trip_pcm16(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.99, 0.99, 4000)
    path = tmp_path / "rt.wav"
    save_wav(path, AudioBuffer(x, SR))
    back = load_wav(path)
    assert back.sample_rate == SR
    assert len(back.samples) == len(x)
    # 16-bit quantization error is at most half a step of 1/32767
    assert np.max(np.abs(back.samples - x)) <= 0.5 / 32767 + 1e-12


def test_wav_round_trip_exact_on_grid(tmp_path):
    # values already on the int16 grid survive a double round trip bit-exactly
    x = np.array([0, 1, -1, 16383, -16384, 32767, -32767]) / 32767.0
    path = tmp_path / "grid.wav"
    save_wav(path, AudioBuffer(x, 8000))
    once = load_wav(path)
    save_wav(path, once)
    twice = load_wav(path)
    np.testing.assert_array_equal(once.samples, twice.samples)


def test_save_wav_clips(tmp_path):
    path = tmp_path / "clip.wav"
    save_wav(path, AudioBuffer(np.array([2.0, -2.0]), 8000))
    back = load_wav(path)
    np.testing.assert_allclose(back.samples, [1.0, -1.0])


def test_load_missing_file_raises_file_not_found(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_wav(tmp_path / "nope.wav")


def test_load_garbage_raises_malformed(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"this is not a riff container at all")
    with pytest.raises(MalformedWavError):
        load_wav(path)


def test_load_truncated_data_raises_malformed(tmp_path):
    path = tmp_path / "trunc.wav"
    save_wav(path, AudioBuffer(np.zeros(1000), 8000))
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 500])  # cut into the data chunk
    with pytest.raises(MalformedWavError):
        load_wav(path)


def test_load_unsupported_codec_raises(tmp_path):
    # hand-built 8-bit PCM header: readable container, unreadable codec
    payload = bytes(range(64))
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 1, 8000, 8000, 1, 8,
        b"data", len(payload),
    )
    path = tmp_path / "u8.wav"
    path.write_bytes(header + payload)
    with pytest.raises(UnsupportedCodecError):
        load_wav(path)


def test_load_float32_wav(tmp_path):
    x = np.array([0.25, -0.75, 0.5, 0.0], dtype=np.float32)
    payload = x.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 3, 1, 16000, 16000 * 4, 4, 32,
        b"data", len(payload),
    )
    path = tmp_path / "f32.wav"
    path.write_bytes(header + payload)
    back = load_wav(path)
    assert back.sample_rate == 16000
    np.testing.assert_allclose(back.samples, x.astype(np.float64), atol=1e-7)


def test_load_stereo_downmixes(tmp_path):
    left = np.array([0.5, 0.5, 0.5])
    right = np.array([-0.5, 0.0, 0.5])
    inter = np.empty(6)
    inter[0::2], inter[1::2] = left, right
    pcm = np.round(inter * 32767).astype("<i2").tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(pcm), b"WAVE",
        b"fmt ", 16, 1, 2, 8000, 8000 * 4, 4, 16,
        b"data", len(pcm),
    )
    path = tmp_path / "st.wav"
    path.write_bytes(header + pcm)
    back = load_wav(path)
    np.testing.assert_allclose(back.samples, (left + right) / 2, atol=1e-4)


# ---------------------------------------------------------------------------
# STFT / mel
# ---------------------------------------------------------------------------


def test_stft_istft_interior_round_trip():
    rng = np.random.default_rng(3)
    x = rng.uniform(-0.5, 0.5, 22050)
    spec = stft(x, 1024, 256)
    assert spec.shape == (83, 513)
    y = istft(spec, 1024, 256, length=len(x))
    assert len(y) == len(x)
    # weighted OLA is exact away from the unwindowed edges
    covered = (83 - 1) * 256 + 1024
    assert np.max(np.abs(x[1024 : covered - 1024] - y[1024 : covered - 1024])) < 1e-10


def test_mel_scale_round_trip():
    f = np.array([0.0, 100.0, 700.0, 1000.0, 8000.0])
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, rtol=1e-12, atol=1e-9)
    # 2595 * log10(2) at the scale's 700 Hz knee, worked by hand
    assert abs(hz_to_mel(700.0) - 2595.0 * math.log10(2.0)) < 1e-9


def test_mel_filterbank_shape_and_normalization():
    cfg = MelConfig()
    fb = mel_filterbank(cfg)
    assert fb.shape == (80, 513)
    assert np.all(fb >= 0.0)
    assert np.all(fb.sum(axis=1) > 0.0)
    # area normalization: each triangle integrates to ~1 over frequency
    bin_hz = cfg.sample_rate / cfg.frame_length
    areas = fb.sum(axis=1) * bin_hz
    mid = areas[20:70]  # low filters are too narrow for the bin grid
    assert np.all(np.abs(mid - 1.0) < 0.15)


def test_mel_spectrogram_shape_and_silence_floor():
    cfg = MelConfig()
    mel = mel_spectrogram(AudioBuffer(np.zeros(SR), SR), cfg)
    assert mel.frames.shape == (83, 80)
    # silence hits the floor exactly: log(max(0, 1e-5)) = log(1e-5)
    np.testing.assert_array_equal(mel.frames, np.log(1e-5))


def test_mel_spectrogram_tone_band():
    cfg = MelConfig()
    mel = mel_spectrogram(sine(1000.0), cfg)
    mean_energy = mel.frames.mean(axis=0)
    band = int(np.argmax(mean_energy))
    centers = mel_filter_centers_hz(cfg)
    # the strongest band's center sits within one band spacing of the tone
    assert abs(centers[band] - 1000.0) < 40.0
    # far-off bands carry only window leakage
    assert mean_energy[band] - np.max(mean_energy[50:]) > 3.0


def test_mel_spectrogram_rejects_rate_mismatch():
    cfg = MelConfig(sample_rate=22050)
    with pytest.raises(ValidationError):
        mel_spectrogram(AudioBuffer(np.zeros(16000), 16000), cfg)


def test_mel_config_validation():
    with pytest.raises(ValidationError):
        MelConfig(sample_rate=16000, fmax=9000.0)  # above Nyquist
    with pytest.raises(ValidationError):
        MelConfig(fmin=500.0, fmax=100.0)
    with pytest.raises(ValidationError):
        MelConfig(log_floor=0.0)


def test_mel_to_linear_magnitude_peak_location():
    cfg = MelConfig()
    mel = mel_spectrogram(sine(1000.0), cfg)
    lin = mel_to_linear_magnitude(mel)
    assert lin.shape == (83, 513)
    assert np.all(lin >= 0.0)
    peak_bin = int(np.argmax(lin.mean(axis=0)))
    true_bin = 1000.0 * cfg.frame_length / cfg.sample_rate  # 46.44
    assert abs(peak_bin - true_bin) <= 2.0


# ---------------------------------------------------------------------------
# Energy
# ---------------------------------------------------------------------------


def test_energy_contour_sine_level():
    times, rms = energy_contour(sine(220.0), 0.025, 0.010)
    # windowed RMS of a 0.5-amp sine: 0.5 * sqrt(mean(w^2) / 2)
    #                               = 0.5 * sqrt(3/16) = 0.21650635
    assert abs(np.median(rms) - 0.21650635) < 0.005
    assert len(times) == len(rms)
    hop_s = round(0.010 * SR) / SR  # hop rounds to whole samples
    assert times[1] - times[0] == pytest.approx(hop_s, abs=1e-9)


def test_energy_contour_silence():
    _, rms = energy_contour(AudioBuffer(np.zeros(SR), SR))
    np.testing.assert_array_equal(rms, 0.0)


# ---------------------------------------------------------------------------
# Pitch
# ---------------------------------------------------------------------------


def test_f0_sine_grid():
    # every tone recovered within 1 percent, fully voiced
    for hz in [60.0, 100.0, 150.0, 220.0, 300.0, 400.0]:
        track = estimate_f0(sine(hz))
        assert track.voiced.mean() > 0.9, hz
        med = float(np.median(track.f0_hz[track.voiced]))
        assert abs(med - hz) / hz < 0.01, (hz, med)


def test_f0_impulse_train_exact_period():
    # 40 Hz at 16 kHz: period exactly 400 samples, no interpolation ambiguity
    sr = 16000
    x = np.zeros(2 * sr)
    x[::400] = 0.9
    track = estimate_f0(AudioBuffer(x, sr))
    assert track.voiced.mean() > 0.9
    med = float(np.median(track.f0_hz[track.voiced]))
    assert abs(med - 40.0) <= 1.0


def test_f0_harmonic_complex_no_octave_error():
    t = np.arange(SR) / SR
    for hz in [120.0, 180.0, 240.0]:
        x = sum((0.6**k) * np.sin(2 * np.pi * hz * k * t) for k in range(1, 7))
        x = 0.5 * x / np.max(np.abs(x))
        track = estimate_f0(AudioBuffer(x, SR))
        med = float(np.median(track.f0_hz[track.voiced]))
        assert abs(med - hz) / hz < 0.01, (hz, med)


def test_f0_noise_unvoiced():
    rng = np.random.default_rng(7)
    track = estimate_f0(AudioBuffer(0.3 * rng.standard_normal(SR), SR))
    assert track.voiced.mean() <= 0.10
    np.testing.assert_array_equal(track.f0_hz[~track.voiced], 0.0)


def test_f0_silence_unvoiced():
    track = estimate_f0(AudioBuffer(np.zeros(SR), SR))
    assert not track.voiced.any()
    np.testing.assert_array_equal(track.f0_hz, 0.0)


def test_f0_unvoiced_frames_are_zero_and_clamped():
    track = estimate_f0(sine(220.0))
    v = track.f0_hz[track.voiced]
    assert np.all((v >= 40.0) & (v <= 500.0))


def test_f0_config_validation():
    with pytest.raises(ValidationError):
        F0Config(fmin=40.0, frame_s=0.03)  # cannot hold two 40 Hz periods
    with pytest.raises(ValidationError):
        F0Config(fmin=100.0, fmax=50.0)


# ---------------------------------------------------------------------------
# Griffin-Lim
# ---------------------------------------------------------------------------


def test_griffin_lim_recovers_tone():
    cfg = MelConfig()
    mel = mel_spectrogram(sine(220.0), cfg)
    out = griffin_lim(mel, iterations=40, seed=0)
    assert out.sample_rate == SR
    track = estimate_f0(out)
    med = float(np.median(track.f0_hz[track.voiced]))
    assert abs(med - 220.0) <= 5.0
    assert np.max(np.abs(out.samples)) == pytest.approx(0.95, abs=1e-6)


def test_griffin_lim_deterministic():
    mel = mel_spectrogram(sine(150.0, seconds=0.5), MelConfig())
    a = griffin_lim(mel, iterations=15, seed=4)
    b = griffin_lim(mel, iterations=15, seed=4)
    np.testing.assert_array_equal(a.samples, b.samples)
    c = griffin_lim(mel, iterations=15, seed=5)
    assert not np.array_equal(a.samples, c.samples)


def test_griffin_lim_error_trace_monotone():
    mel = mel_spectrogram(sine(220.0, seconds=0.5), MelConfig())
    _, trace = griffin_lim(mel, iterations=25, seed=0, return_trace=True)
    assert len(trace) == 26  # one entry after init plus one per iteration
    diffs = np.diff(trace)
    assert np.all(diffs <= 1e-9)  # projections never increase the error
    assert trace[-1] < 0.8 * trace[0]  # and make real progress


def test_griffin_lim_all_floor_mel_is_quiet():
    cfg = MelConfig()
    floor = MelSpectrogram(np.full((20, 80), np.log(1e-5)), cfg)
    out = griffin_lim(floor, iterations=5, seed=0, normalize=False)
    # the pseudo-inverse amplifies the floor through narrow low filters,
    # but the result still sits far below speech level
    assert np.max(np.abs(out.samples)) < 0.1


def test_griffin_lim_skips_normalizing_true_silence():
    cfg = MelConfig()
    zero = MelSpectrogram(np.full((20, 80), -800.0), cfg)  # exp underflows to 0
    out = griffin_lim(zero, iterations=3, seed=0, normalize=True)
    np.testing.assert_array_equal(out.samples, 0.0)


def test_audio_buffer_validation():
    with pytest.raises(ValidationError):
        AudioBuffer(np.zeros((2, 100)), SR)
    with pytest.raises(ValidationError):
        AudioBuffer(np.zeros(100), 0)
    assert AudioBuffer(np.zeros(SR), SR).duration_s == pytest.approx(1.0)
