"""Utterance-level prosodic controls and their z-standardization.

Three controls per utterance: mean log f0, log f0 standard deviation, and
speech rate in syllables per second. Pitch statistics use the natural-log
Hz scale over voiced frames and population (not sample) standard deviation,
matching the standardizer. A creak proxy reports the share of voiced frames
whose f0 falls below a ceiling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .audio import AudioBuffer, F0Config, energy_contour, estimate_f0
from .errors import DegenerateFeatureError, UnvoicedUtteranceError, ValidationError

FEATURE_NAMES = ("mean_log_f0", "f0_std", "speech_rate")

_STANDARDIZER_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ProsodyFeatures:
    """Raw utterance controls: ln-Hz pitch stats plus syllables per second."""

    mean_log_f0: float
    f0_std: float
    speech_rate: float

    def __post_init__(self) -> None:
        vals = (self.mean_log_f0, self.f0_std, self.speech_rate)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite prosody features: {vals}")
        if self.f0_std < 0 or self.speech_rate < 0:
            raise ValidationError("f0_std and speech_rate must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.mean_log_f0, self.f0_std, self.speech_rate])


@dataclass(frozen=True)
class StandardizedFeatures:
    """Controls in corpus standard-deviation units."""

    z_pitch: float
    z_f0_std: float
    z_rate: float

    def __post_init__(self) -> None:
        vals = (self.z_pitch, self.z_f0_std, self.z_rate)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite standardized features: {vals}")

    def as_array(self) -> np.ndarray:
        return np.array([self.z_pitch, self.z_f0_std, self.z_rate])


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension corpus mean and population std for the three controls."""

    means: tuple[float, float, float]
    stds: tuple[float, float, float]
    corpus_id: str

    def __post_init__(self) -> None:
        if len(self.means) != 3 or len(self.stds) != 3:
            raise ValidationError("standardizer needs 3 means and 3 stds")
        if not all(s > 0 for s in self.stds):
            raise ValidationError("standardizer stds must be strictly positive")

    def to_json(self) -> str:
        return json.dumps(
            {
                "corpus_id": self.corpus_id,
                "means": list(self.means),
                "stds": list(self.stds),
                "version": _STANDARDIZER_FORMAT_VERSION,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Standardizer":
        try:
            doc = json.loads(text)
            if doc["version"] != _STANDARDIZER_FORMAT_VERSION:
                raise ValidationError(
                    f"unsupported standardizer version {doc['version']}"
                )
            return cls(tuple(doc["means"]), tuple(doc["stds"]), doc["corpus_id"])
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"malformed standardizer document: {exc}") from exc


@dataclass(frozen=True)
class CreakReport:
    """Creaky share of voiced frames, as a percentage, plus the raw counts."""

    creak_fraction: float
    creaky_frames: int
    voiced_frames: int

    def __post_init__(self) -> None:
        if self.creaky_frames > self.voiced_frames:
            raise ValidationError("creaky frame count exceeds voiced count")


@dataclass(frozen=True)
class SpeechRateConfig:
    """Syllable-nuclei detection settings for estimate_speech_rate."""

    smoothing_s: float = 0.100
    prominence_ratio: float = 0.3
    min_spacing_s: float = 0.120
    silence_rms: float = 1e-4
    silence_run_s: float = 0.300
    frame_s: float = 0.025
    hop_s: float = 0.010


def estimate_speech_rate(
    buffer: AudioBuffer, cfg: SpeechRateConfig | None = None
) -> float:
    """Syllables per second from the smoothed energy envelope.

    Nuclei are peaks of the moving-average-smoothed RMS contour with
    prominence at least prominence_ratio times the contour maximum and
    spacing at least min_spacing_s, counted only where the contour exceeds
    the silence gate. The denominator is the buffer duration minus silent
    runs of at least silence_run_s. All-silent audio has rate 0.
    """
    cfg = cfg or SpeechRateConfig()
    if len(buffer.samples) == 0:
        raise ValidationError("empty buffer")
    try:
        _, rms = energy_contour(buffer, cfg.frame_s, cfg.hop_s)
    except ValidationError:  # shorter than one analysis frame
        return 0.0
    hop_s = round(cfg.hop_s * buffer.sample_rate) / buffer.sample_rate

    smooth_frames = max(1, int(round(cfg.smoothing_s / hop_s)))
    kernel = np.ones(smooth_frames) / smooth_frames
    smoothed = np.convolve(rms, kernel, mode="same")

    peak = float(np.max(smoothed))
    if peak <= cfg.silence_rms:
        return 0.0
    spacing = max(1, int(math.ceil(cfg.min_spacing_s / hop_s)))
    nuclei, _ = find_peaks(
        smoothed, prominence=cfg.prominence_ratio * peak, distance=spacing
    )
    nuclei = nuclei[smoothed[nuclei] > cfg.silence_rms]
    # broad envelopes can be plateau-shaped with no interior local maximum;
    # audible audio still carries at least one nucleus
    n_nuclei = max(len(nuclei), 1)

    silent = rms < cfg.silence_rms
    min_run = int(math.ceil(cfg.silence_run_s / hop_s))
    silent_time = 0.0
    run = 0
    for flag in np.concatenate([silent, [False]]):
        if flag:
            run += 1
        else:
            if run >= min_run:
                silent_time += run * hop_s
            run = 0
    speech_s = max(buffer.duration_s - silent_time, 0.0)
    if speech_s <= 0.0:
        return 0.0
    return n_nuclei / speech_s


def extract_features(
    buffer: AudioBuffer,
    f0cfg: F0Config | None = None,
    rate_cfg: SpeechRateConfig | None = None,
) -> ProsodyFeatures:
    """Measure the three controls. Needs at least 3 voiced frames."""
    f0cfg = f0cfg or F0Config()
    track = estimate_f0(buffer, f0cfg)
    voiced_f0 = track.f0_hz[track.voiced]
    if len(voiced_f0) < 3:
        raise UnvoicedUtteranceError(
            f"only {len(voiced_f0)} voiced frames; need at least 3"
        )
    log_f0 = np.log(voiced_f0)
    return ProsodyFeatures(
        mean_log_f0=float(np.mean(log_f0)),
        f0_std=float(np.std(log_f0)),  # population std
        speech_rate=estimate_speech_rate(buffer, rate_cfg),
    )


def measure_creak(
    buffer: AudioBuffer,
    f0cfg: F0Config | None = None,
    creak_f0_ceiling: float = 70.0,
) -> CreakReport:
    """Share of voiced frames with f0 below the ceiling, as a percentage."""
    f0cfg = f0cfg or F0Config()
    track = estimate_f0(buffer, f0cfg)
    voiced = int(np.count_nonzero(track.voiced))
    creaky = int(np.count_nonzero(track.voiced & (track.f0_hz < creak_f0_ceiling)))
    return CreakReport(
        creak_fraction=100.0 * creaky / max(voiced, 1),
        creaky_frames=creaky,
        voiced_frames=voiced,
    )


def fit_standardizer(
    features: list[ProsodyFeatures], corpus_id: str
) -> Standardizer:
    """Per-dimension mean and population std over a feature list."""
    if len(features) < 2:
        raise ValidationError("need at least 2 feature vectors to standardize")
    mat = np.stack([f.as_array() for f in features])
    means = mat.mean(axis=0)
    stds = mat.std(axis=0)  # population std
    for name, s in zip(FEATURE_NAMES, stds):
        if s < 1e-9:
            raise DegenerateFeatureError(
                f"feature dimension '{name}' has (near-)zero variance "
                f"(std {s:.3e}); cannot standardize"
            )
    return Standardizer(tuple(means), tuple(stds), corpus_id)


def standardize(features: ProsodyFeatures, s: Standardizer) -> StandardizedFeatures:
    z = (features.as_array() - np.array(s.means)) / np.array(s.stds)
    return StandardizedFeatures(*z)


def destandardize(z: StandardizedFeatures, s: Standardizer) -> ProsodyFeatures:
    x = z.as_array() * np.array(s.stds) + np.array(s.means)
    return ProsodyFeatures(*x)
