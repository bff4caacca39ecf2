"""Waveform I/O, spectrograms, pitch tracking, and Griffin-Lim inversion.

All audio is mono float64 in [-1, 1]. Spectrogram framing uses
T = 1 + floor((n_samples - frame_length) / hop_length) with no padding,
so partial trailing frames are dropped.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MalformedWavError, UnsupportedCodecError, ValidationError

_TWO_PI = 2.0 * math.pi

# WAVE format tags we understand.
_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3


@dataclass
class AudioBuffer:
    """Mono samples in [-1, 1] plus their sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValidationError("AudioBuffer samples must be 1-D mono")
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MelConfig:
    """Mel analysis settings. fmax must not exceed Nyquist."""

    sample_rate: int = 22050
    frame_length: int = 1024
    hop_length: int = 256
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-5

    def __post_init__(self) -> None:
        if self.frame_length <= 0 or self.hop_length <= 0 or self.n_mels <= 0:
            raise ValidationError("frame_length, hop_length, n_mels must be positive")
        if self.fmax > self.sample_rate / 2:
            raise ValidationError(
                f"fmax {self.fmax} exceeds Nyquist {self.sample_rate / 2}"
            )
        if self.fmin < 0 or self.fmin >= self.fmax:
            raise ValidationError("need 0 <= fmin < fmax")
        if self.log_floor <= 0:
            raise ValidationError("log_floor must be positive")


@dataclass
class MelSpectrogram:
    """Log mel energies, shape (T, n_mels); entries >= log(log_floor)."""

    frames: np.ndarray
    config: MelConfig

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != self.config.n_mels:
            raise ValidationError(
                f"mel frames must be (T, {self.config.n_mels}), got {self.frames.shape}"
            )

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class F0Config:
    """Autocorrelation pitch tracker settings.

    frame_s must cover at least two periods of fmin so the correlation
    window (frame minus the longest candidate lag) stays one period long.
    """

    fmin: float = 40.0
    fmax: float = 500.0
    frame_s: float = 0.05
    hop_s: float = 0.01
    voicing_threshold: float = 0.45
    silence_rms: float = 1e-4

    def __post_init__(self) -> None:
        if not (0 < self.fmin < self.fmax):
            raise ValidationError("need 0 < fmin < fmax")
        if self.frame_s < 2.0 / self.fmin:
            raise ValidationError(
                f"frame_s {self.frame_s} shorter than two periods of fmin "
                f"({2.0 / self.fmin:.4f} s)"
            )
        if self.hop_s <= 0:
            raise ValidationError("hop_s must be positive")


@dataclass
class F0Track:
    """Per-frame pitch estimates; f0_hz is 0 where unvoiced."""

    times: np.ndarray
    f0_hz: np.ndarray
    voiced: np.ndarray
    periodicity: np.ndarray


def frame_count(n_samples: int, frame_length: int, hop_length: int) -> int:
    """Number of full analysis frames; 0 if the signal is too short."""
    if n_samples < frame_length:
        return 0
    return 1 + (n_samples - frame_length) // hop_length


def hann_window(n: int) -> np.ndarray:
    # Periodic Hann, the DFT-analysis convention.
    return 0.5 - 0.5 * np.cos(_TWO_PI * np.arange(n) / n)


def _frame_signal(x: np.ndarray, frame_length: int, hop_length: int) -> np.ndarray:
    n_frames = frame_count(len(x), frame_length, hop_length)
    if n_frames == 0:
        raise ValidationError(
            f"signal of {len(x)} samples is shorter than one frame ({frame_length})"
        )
    idx = hop_length * np.arange(n_frames)[:, None] + np.arange(frame_length)[None, :]
    return x[idx]


# ---------------------------------------------------------------------------
# WAV I/O (RIFF/WAVE, PCM16 read/write, float32 read)
# ---------------------------------------------------------------------------


def load_wav(path: str | Path) -> AudioBuffer:
    """Read a RIFF/WAVE file (16-bit PCM or 32-bit float, any channel count).

    Multi-channel audio is averaged down to mono. Raises FileNotFoundError,
    MalformedWavError, or UnsupportedCodecError as appropriate.
    """
    path = Path(path)
    data = path.read_bytes()  # raises FileNotFoundError if missing
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise MalformedWavError(f"{path}: fmt chunk truncated")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise MalformedWavError(f"{path}: data chunk truncated")
            payload = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None or payload is None:
        raise MalformedWavError(f"{path}: missing fmt or data chunk")

    audio_format, channels, sample_rate, _, _, bits = fmt
    if channels < 1:
        raise MalformedWavError(f"{path}: zero channels")
    if audio_format == _WAVE_FORMAT_PCM and bits == 16:
        raw = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32767.0
    elif audio_format == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedCodecError(
            f"{path}: unsupported codec (format tag {audio_format}, {bits}-bit); "
            "only 16-bit PCM and 32-bit float are readable"
        )

    if channels > 1:
        raw = raw[: len(raw) - len(raw) % channels]
        raw = raw.reshape(-1, channels).mean(axis=1)
    return AudioBuffer(np.clip(raw, -1.0, 1.0), sample_rate)


def save_wav(path: str | Path, buffer: AudioBuffer) -> None:
    """Write 16-bit PCM mono. Samples are clipped to [-1, 1] first."""
    x = np.clip(buffer.samples, -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2")
    payload = pcm.tobytes()
    sr = buffer.sample_rate
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        _WAVE_FORMAT_PCM,
        1,
        sr,
        sr * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    Path(path).write_bytes(header + payload)


# ---------------------------------------------------------------------------
# STFT / mel
# ---------------------------------------------------------------------------


def stft(x: np.ndarray, frame_length: int, hop_length: int) -> np.ndarray:
    """Hann-windowed STFT, shape (T, frame_length // 2 + 1), complex."""
    frames = _frame_signal(np.asarray(x, dtype=np.float64), frame_length, hop_length)
    return np.fft.rfft(frames * hann_window(frame_length), axis=1)


def istft(
    spec: np.ndarray, frame_length: int, hop_length: int, length: int | None = None
) -> np.ndarray:
    """Weighted overlap-add inverse of stft (least-squares, Hann synthesis)."""
    frames = np.fft.irfft(spec, n=frame_length, axis=1)
    w = hann_window(frame_length)
    n_frames = frames.shape[0]
    out_len = (n_frames - 1) * hop_length + frame_length
    num = np.zeros(out_len)
    den = np.zeros(out_len)
    for k in range(n_frames):
        lo = k * hop_length
        num[lo : lo + frame_length] += w * frames[k]
        den[lo : lo + frame_length] += w * w
    out = np.where(den > 1e-10, num / np.maximum(den, 1e-10), 0.0)
    if length is not None:
        if length <= out_len:
            out = out[:length]
        else:  # analysis dropped a partial trailing frame; pad it back as silence
            out = np.concatenate([out, np.zeros(length - out_len)])
    return out


def hz_to_mel(f: np.ndarray | float) -> np.ndarray | float:
    # HTK mel scale.
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular filters on the HTK mel scale, area-normalized (2 / width).

    Returns (n_mels, frame_length // 2 + 1).
    """
    n_bins = cfg.frame_length // 2 + 1
    bin_hz = np.arange(n_bins) * cfg.sample_rate / cfg.frame_length
    mel_pts = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        lo, ctr, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (bin_hz - lo) / (ctr - lo)
        down = (hi - bin_hz) / (hi - ctr)
        fb[m] = np.maximum(0.0, np.minimum(up, down)) * (2.0 / (hi - lo))
    return fb


def mel_filter_centers_hz(cfg: MelConfig) -> np.ndarray:
    """Center frequency of each mel band in Hz."""
    mel_pts = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return np.asarray(mel_to_hz(mel_pts[1:-1]))


def mel_spectrogram(buffer: AudioBuffer, cfg: MelConfig) -> MelSpectrogram:
    """Log mel magnitudes: log(max(filterbank @ |STFT|, log_floor))."""
    if buffer.sample_rate != cfg.sample_rate:
        raise ValidationError(
            f"buffer sample rate {buffer.sample_rate} != config {cfg.sample_rate}"
        )
    if len(buffer.samples) == 0:
        raise ValidationError("empty signal")
    mag = np.abs(stft(buffer.samples, cfg.frame_length, cfg.hop_length))
    mel_energy = mag @ mel_filterbank(cfg).T
    return MelSpectrogram(np.log(np.maximum(mel_energy, cfg.log_floor)), cfg)


def mel_to_linear_magnitude(mel: MelSpectrogram) -> np.ndarray:
    """Approximate linear magnitude spectrum via filterbank pseudo-inverse."""
    energy = np.exp(mel.frames)
    inv = np.linalg.pinv(mel_filterbank(mel.config))  # (n_bins, n_mels)
    return np.maximum(energy @ inv.T, 0.0)


# ---------------------------------------------------------------------------
# Energy and pitch
# ---------------------------------------------------------------------------


def energy_contour(
    buffer: AudioBuffer, frame_s: float = 0.025, hop_s: float = 0.010
) -> tuple[np.ndarray, np.ndarray]:
    """Hann-windowed RMS per frame. Returns (frame center times, rms)."""
    frame_length = int(round(frame_s * buffer.sample_rate))
    hop_length = int(round(hop_s * buffer.sample_rate))
    if frame_length <= 0 or hop_length <= 0:
        raise ValidationError("frame_s and hop_s must be positive")
    frames = _frame_signal(buffer.samples, frame_length, hop_length)
    w = hann_window(frame_length)
    rms = np.sqrt(np.mean((frames * w) ** 2, axis=1))
    times = (hop_length * np.arange(len(rms)) + frame_length / 2) / buffer.sample_rate
    return times, rms


def estimate_f0(buffer: AudioBuffer, cfg: F0Config | None = None) -> F0Track:
    """Normalized-autocorrelation pitch tracker with parabolic interpolation.

    A frame is voiced when its best normalized correlation reaches the
    voicing threshold and its RMS exceeds the silence gate. Candidate lags
    cover [sr/fmax, sr/fmin]. Among local correlation maxima the smallest
    lag within a small tolerance of the global best wins, so signals whose
    true period falls between sample lags resolve to the fundamental and
    not to a subharmonic that happens to land on the integer grid.
    """
    cfg = cfg or F0Config()
    sr = buffer.sample_rate
    frame_length = int(round(cfg.frame_s * sr))
    hop_length = int(round(cfg.hop_s * sr))
    lag_min = max(1, int(math.ceil(sr / cfg.fmax)))
    lag_max = int(math.floor(sr / cfg.fmin))
    if frame_length < 2 * lag_max:
        raise ValidationError(
            f"frame of {frame_length} samples cannot hold two periods of "
            f"fmin={cfg.fmin} Hz at {sr} Hz"
        )
    frames = _frame_signal(buffer.samples, frame_length, hop_length)
    n_frames = frames.shape[0]
    win = frame_length - lag_max  # correlation window, >= one fmin period

    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    periodicity = np.zeros(n_frames)
    octave_tol = 0.02  # peaks this close to the best count as equivalent

    for k in range(n_frames):
        x = frames[k]
        rms = math.sqrt(float(np.mean(x * x)))
        # Pearson correlation per lag: each window loses its own mean, so a
        # flat stretch (leading or trailing silence) cannot correlate with a
        # voice onset inside the same frame.
        num_raw = np.correlate(x, x[:win], mode="valid")  # tau in [0, lag_max]
        csum1 = np.concatenate(([0.0], np.cumsum(x)))
        csum2 = np.concatenate(([0.0], np.cumsum(x * x)))
        s1 = csum1[win:] - csum1[:-win]  # window sums per lag
        s2 = csum2[win:] - csum2[:-win]
        num = num_raw - s1[0] * s1 / win
        var = np.maximum(s2 - s1 * s1 / win, 0.0)
        denom = np.sqrt(np.maximum(var[0] * var, 1e-300))
        r = np.where(denom > 1e-150, num / denom, 0.0)

        valid = r.copy()
        valid[:lag_min] = -np.inf
        best = int(np.argmax(valid))
        is_peak = np.zeros(lag_max + 1, dtype=bool)
        is_peak[1:-1] = (r[1:-1] >= r[:-2]) & (r[1:-1] >= r[2:])
        is_peak[:lag_min] = False
        is_peak &= r >= r[best] - octave_tol
        peaks = np.flatnonzero(is_peak)
        tau = int(peaks[0]) if len(peaks) else best
        peak = float(r[tau])

        # Parabolic refinement on the unpenalized correlation.
        delta = 0.0
        if lag_min < tau < lag_max:
            left, mid, right = r[tau - 1], r[tau], r[tau + 1]
            curve = left - 2.0 * mid + right
            if abs(curve) > 1e-12:
                delta = float(np.clip(0.5 * (left - right) / curve, -0.5, 0.5))
        hz = sr / (tau + delta) if tau > 0 else 0.0
        f0[k] = min(max(hz, cfg.fmin), cfg.fmax)
        periodicity[k] = peak
        voiced[k] = peak >= cfg.voicing_threshold and rms >= cfg.silence_rms

    f0[~voiced] = 0.0
    times = (hop_length * np.arange(n_frames) + frame_length / 2) / sr
    return F0Track(times, f0, voiced, periodicity)


# ---------------------------------------------------------------------------
# Griffin-Lim
# ---------------------------------------------------------------------------


def griffin_lim(
    mel: MelSpectrogram,
    iterations: int = 60,
    seed: int = 0,
    normalize: bool = True,
    return_trace: bool = False,
) -> AudioBuffer | tuple[AudioBuffer, list[float]]:
    """Invert a log mel spectrogram to a waveform.

    Mel energies are mapped back to a linear magnitude spectrum through the
    filterbank pseudo-inverse, then phase is recovered by Griffin-Lim
    iterations from a seeded random initialization. The output is peak
    normalized to 0.95 unless its peak is below 1e-6 (degenerate silence),
    in which case it is returned as-is.

    With return_trace=True also returns the spectral convergence error
    ||(|STFT(x)| - target)|| / ||target|| after init and each iteration.
    """
    if iterations < 0:
        raise ValidationError("iterations must be >= 0")
    cfg = mel.config
    target = mel_to_linear_magnitude(mel)  # (T, n_bins)
    rng = np.random.default_rng(seed)
    phase = rng.uniform(-math.pi, math.pi, size=target.shape)
    spec = target * np.exp(1j * phase)

    target_norm = float(np.linalg.norm(target))
    trace: list[float] = []

    def convergence(s: np.ndarray) -> float:
        if target_norm == 0.0:
            return 0.0
        return float(np.linalg.norm(np.abs(s) - target) / target_norm)

    x = istft(spec, cfg.frame_length, cfg.hop_length)
    if return_trace:
        # trace[k] is the error of the estimate after k iterations
        trace.append(convergence(stft(x, cfg.frame_length, cfg.hop_length)))
    for _ in range(iterations):
        rebuilt = stft(x, cfg.frame_length, cfg.hop_length)
        mag = np.abs(rebuilt)
        spec = target * np.where(mag > 1e-300, rebuilt / np.maximum(mag, 1e-300), 1.0)
        x = istft(spec, cfg.frame_length, cfg.hop_length)
        if return_trace:
            trace.append(convergence(stft(x, cfg.frame_length, cfg.hop_length)))

    peak = float(np.max(np.abs(x))) if len(x) else 0.0
    if normalize and peak >= 1e-6:
        x = x * (0.95 / peak)
    buf = AudioBuffer(np.clip(x, -1.0, 1.0), cfg.sample_rate)
    return (buf, trace) if return_trace else buf
