"""Desk-scale experiment harness.

Covers four jobs around the acoustic model: generating a fully synthetic
training corpus whose prosody is known by construction, summarizing corpus
feature distributions, sweeping one standardized control across a grid
while re-measuring the synthesized audio, and comparing creak across
utterance styles with the statistics kit.

The toy corpus exists so the whole control loop (generate, train, sweep,
measure) can run in minutes with no external data. Each utterance is a
string of syllable-like harmonic bursts: the latent controls (p, v, r)
set the pitch level, the vibrato depth, and the syllable rate, and the
manifest features are re-measured from the rendered audio rather than
copied from the latents, so extractor bias is part of the loop exactly as
it would be with real recordings.
"""

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import spearmanr

from .audio import (
    AudioBuffer,
    F0Config,
    MelConfig,
    estimate_f0,
    griffin_lim,
    load_wav,
    mel_spectrogram,
    save_wav,
)
from .corpus import (
    MANIFEST_NAME,
    STANDARDIZER_NAME,
    VOCABULARY_NAME,
    UtteranceRecord,
    Vocabulary,
    read_manifest,
    text_to_tokens,
    tokenize,
    write_manifest,
)
from .errors import ValidationError, UnvoicedUtteranceError
from .model import NeuralHmmModel, TrainingExample, synthesize
from .prosody import (
    CreakReport,
    ProsodyFeatures,
    Standardizer,
    StandardizedFeatures,
    extract_features,
    fit_standardizer,
    measure_creak,
    standardize,
)
from .stats import GroupSamples, mean_ci, one_way_anova, tukey_hsd

CONTROL_FEATURES = ("pitch", "f0_std", "rate")
# which measured quantity each control is supposed to move
MEASURED_ATTR = {"pitch": "mean_log_f0", "f0_std": "f0_std", "rate": "speech_rate"}
_CONTROL_INDEX = {"pitch": 0, "f0_std": 1, "rate": 2}

DEFAULT_GRID = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0)
EOT_TAIL_FRACTION = 0.3  # share of symbols rendered with the tail preset

_VIBRATO_HZ = 5.5
# short pads: the edge states see only a couple of frames each, so a
# deterministic decoder that advances at probability >= 0.5 can leave them
_PAD_S = 0.035
_ENV_FLOOR = 0.12  # inter-syllable amplitude dip; keeps voicing continuous
_EDGE_FADE_S = 0.020
# bright-onset to dark-coda tilt of the upper harmonics inside each syllable;
# gives every frame a distinct position cue so the frame-to-frame dynamics are
# single-valued (a symmetric envelope makes rising and falling frames
# identical, which collapses an autoregressive decoder to a fixed point)
_TILT_DEPTH = 0.85
_N_HARMONICS = 6
_WAVE_GAIN = 0.4
_SYLLABLES_RANGE = (4, 7)  # inclusive
_MIN_RATE = 0.5  # floor against extreme rate latents

_DEFAULT_TEMPLATES = {"a": 0, "e": 1, "i": 2, "o": 3, "u": 4, "m": 5}


# ---------------------------------------------------------------------------
# Toy corpus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ToyCorpusConfig:
    """Settings for the synthetic corpus generator."""

    n_utterances: int
    seed: int = 0
    base_f0: float = 120.0
    pitch_span: float = 0.15  # octaves per pitch-control sd
    rate_base: float = 4.0  # syllables per second at r = 0
    vibrato_per_sd: float = 0.05  # log-f0 modulation depth per |v| sd
    symbol_templates: Mapping[str, int] = field(
        default_factory=lambda: dict(_DEFAULT_TEMPLATES)
    )
    sample_rate: int = 22050

    def __post_init__(self) -> None:
        if self.n_utterances < 20:
            raise ValidationError(
                f"n_utterances must be >= 20, got {self.n_utterances}"
            )
        if self.base_f0 <= 0 or self.pitch_span <= 0:
            raise ValidationError("base_f0 and pitch_span must be positive")
        if self.rate_base <= 0 or self.vibrato_per_sd <= 0:
            raise ValidationError("rate_base and vibrato_per_sd must be positive")
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")
        if not self.symbol_templates:
            raise ValidationError("symbol_templates must be non-empty")
        for sym, idx in self.symbol_templates.items():
            if len(sym) != 1 or not ("a" <= sym <= "z"):
                raise ValidationError(
                    f"template symbol {sym!r} is not a single lowercase letter"
                )
            if not (0 <= idx < _N_HARMONICS):
                raise ValidationError(
                    f"timbre index {idx} outside [0, {_N_HARMONICS})"
                )


def _timbre_profile(index: int) -> np.ndarray:
    """Unit-norm harmonic amplitudes peaking at harmonic index + 1."""
    h = np.arange(1, _N_HARMONICS + 1, dtype=np.float64)
    amp = 0.1 + np.exp(-0.5 * (h - (index + 1)) ** 2)
    return amp / np.linalg.norm(amp)


def render_toy_utterance(
    cfg: ToyCorpusConfig, p: float, v: float, r: float, symbols: str
) -> AudioBuffer:
    """Render one utterance from its latent controls and symbol string.

    The voiced span is len(symbols) syllables at rate_base*(1 + 0.15*r)
    syllables per second, padded with short silence on each side. Log
    f0 is base plus a fixed-phase sinusoid of depth vibrato_per_sd*|v|;
    the amplitude envelope dips to a nonzero floor between syllables so
    the pitch tracker stays locked while the rate counter still sees one
    peak per syllable. Upper harmonics fade from onset to coda inside
    each syllable; the fundamental keeps full weight so pitch tracking
    is unaffected.
    """
    if not symbols:
        raise ValidationError("empty symbol string")
    for sym in symbols:
        if sym not in cfg.symbol_templates:
            raise ValidationError(f"symbol {sym!r} has no timbre template")
    sr = cfg.sample_rate
    rate = max(cfg.rate_base * (1.0 + 0.15 * r), _MIN_RATE)
    n_speech = int(round(len(symbols) / rate * sr))
    t = np.arange(n_speech) / sr

    log_f0 = (
        math.log(cfg.base_f0)
        + cfg.pitch_span * p * math.log(2.0)
        + cfg.vibrato_per_sd * abs(v) * np.sin(2.0 * math.pi * _VIBRATO_HZ * t)
    )
    phase_cycles = np.cumsum(np.exp(log_f0)) / sr

    pos = t * rate  # syllable coordinate: integer part selects the symbol
    env = _ENV_FLOOR + (1.0 - _ENV_FLOOR) * np.sin(math.pi * pos) ** 2
    profiles = np.stack(
        [_timbre_profile(cfg.symbol_templates[s]) for s in symbols]
    )
    sym_index = np.minimum(pos.astype(np.int64), len(symbols) - 1)
    amps = profiles[sym_index]  # (n, H)

    phi = pos - np.floor(pos)  # position inside the current syllable
    tilt = _TILT_DEPTH * np.linspace(0.0, 1.0, _N_HARMONICS)
    amps = amps * (1.0 - tilt[None, :] * phi[:, None])

    harmonics = np.arange(1, _N_HARMONICS + 1)
    wave = np.sum(
        amps * np.sin(2.0 * math.pi * phase_cycles[:, None] * harmonics), axis=1
    )
    wave *= env * _WAVE_GAIN

    fade = min(int(round(_EDGE_FADE_S * sr)), n_speech // 2)
    if fade > 0:
        ramp = np.linspace(0.0, 1.0, fade)
        wave[:fade] *= ramp
        wave[-fade:] *= ramp[::-1]

    pad = np.zeros(int(round(_PAD_S * sr)))
    return AudioBuffer(np.concatenate([pad, wave, pad]), sr)


def generate_toy_corpus(
    cfg: ToyCorpusConfig,
    out_dir: str | Path,
    f0_config: F0Config | None = None,
) -> tuple[Path, Standardizer]:
    """Render the corpus and write it in the standard corpus layout.

    Produces audio/*.wav, manifest.jsonl, standardizer.json, and
    vocabulary.json under out_dir. Features are measured back from the
    rendered audio, then standardized. Fully deterministic in cfg.
    """
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    alphabet = sorted(cfg.symbol_templates)
    lo, hi = _SYLLABLES_RANGE

    rows = []
    texts = []
    for i in range(cfg.n_utterances):
        p, v, r = rng.standard_normal(3)
        n_syll = int(rng.integers(lo, hi + 1))
        text = "".join(alphabet[j] for j in rng.integers(0, len(alphabet), n_syll))
        buffer = render_toy_utterance(cfg, p, v, r, text)
        utt_id = f"toy_{i:04d}"
        rel_path = f"audio/{utt_id}.wav"
        save_wav(out_dir / rel_path, buffer)
        feats = extract_features(buffer, f0_config)
        texts.append(text)
        rows.append((utt_id, rel_path, text, buffer.duration_s, feats))

    standardizer = fit_standardizer(
        [row[4] for row in rows], corpus_id=f"toy-seed{cfg.seed}"
    )
    records = [
        UtteranceRecord(
            id=utt_id,
            audio_path=rel_path,
            text=text,
            duration_s=duration,
            features=feats,
            z=standardize(feats, standardizer),
        )
        for utt_id, rel_path, text, duration, feats in rows
    ]
    manifest_path = out_dir / MANIFEST_NAME
    write_manifest(manifest_path, records)
    (out_dir / STANDARDIZER_NAME).write_text(
        standardizer.to_json(), encoding="utf-8"
    )
    vocab = Vocabulary.from_texts(texts)
    (out_dir / VOCABULARY_NAME).write_text(vocab.to_json(), encoding="utf-8")
    return manifest_path, standardizer


def load_training_examples(
    manifest_path: str | Path,
    vocabulary: Vocabulary | None = None,
    mel_config: MelConfig | None = None,
) -> list[TrainingExample]:
    """Read a manifest and cache (symbol ids, controls, mel frames) per row."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    if vocabulary is None:
        vocabulary = Vocabulary.from_json(
            (root / VOCABULARY_NAME).read_text(encoding="utf-8")
        )
    mel_config = mel_config or MelConfig()
    examples = []
    for record in read_manifest(manifest_path):
        buffer = load_wav(root / record.audio_path)
        mel = mel_spectrogram(buffer, mel_config)
        seq = tokenize(record.text, vocabulary)
        examples.append(
            TrainingExample(record.id, seq.symbols, record.z, mel.frames)
        )
    return examples


# ---------------------------------------------------------------------------
# Corpus statistics
# ---------------------------------------------------------------------------


def corpus_stats(manifest: str | Path | list[UtteranceRecord]) -> dict:
    """Per-utterance centered pitch/rate table plus per-dimension summary.

    The table centers mean_log_f0 and speech_rate on their corpus means;
    the summary reports mean, population std, and quartiles for all three
    measured dimensions.
    """
    records = manifest if isinstance(manifest, list) else read_manifest(manifest)
    if not records:
        raise ValidationError("empty manifest")
    mat = np.stack([r.features.as_array() for r in records])  # (n, 3)
    means = mat.mean(axis=0)

    rows = [
        {
            "id": r.id,
            "centered_mean_log_f0": float(r.features.mean_log_f0 - means[0]),
            "centered_speech_rate": float(r.features.speech_rate - means[2]),
        }
        for r in records
    ]
    names = ("mean_log_f0", "f0_std", "speech_rate")
    summary = {"n": len(records)}
    for k, name in enumerate(names):
        col = mat[:, k]
        summary[name] = {
            "mean": float(col.mean()),
            "std": float(col.std()),  # population std, matches the standardizer
            "min": float(col.min()),
            "q25": float(np.quantile(col, 0.25)),
            "median": float(np.median(col)),
            "q75": float(np.quantile(col, 0.75)),
            "max": float(col.max()),
        }
    return {"rows": rows, "summary": summary}


# ---------------------------------------------------------------------------
# Control sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    """One synthesized and re-measured utterance at one grid point."""

    control: float
    text_index: int
    truncated: bool
    features: ProsodyFeatures | None  # None when measurement failed
    creak: CreakReport | None


@dataclass(frozen=True)
class SweepReport:
    """All measurements for one control swept across a grid."""

    feature_name: str
    grid: tuple[float, ...]
    n_texts: int
    rows: tuple[SweepRow, ...]
    standardizer: Standardizer

    def __post_init__(self) -> None:
        if self.feature_name not in CONTROL_FEATURES:
            raise ValidationError(
                f"unknown control {self.feature_name!r}; "
                f"expected one of {CONTROL_FEATURES}"
            )
        if len(self.grid) < 1 or self.n_texts < 1:
            raise ValidationError("grid and texts must be non-empty")
        if any(a >= b for a, b in zip(self.grid, self.grid[1:])):
            raise ValidationError("grid must be strictly increasing")
        if len(self.rows) != len(self.grid) * self.n_texts:
            raise ValidationError(
                f"{len(self.rows)} rows for {len(self.grid)} grid points "
                f"x {self.n_texts} texts"
            )

    def rows_at(self, control: float) -> list[SweepRow]:
        return [r for r in self.rows if r.control == control]


def _control_vector(feature_name: str, value: float) -> StandardizedFeatures:
    z = [0.0, 0.0, 0.0]
    z[_CONTROL_INDEX[feature_name]] = value
    return StandardizedFeatures(*z)


def run_feature_sweep(
    model: NeuralHmmModel,
    texts: Sequence[str],
    standardizer: Standardizer,
    feature_name: str,
    vocabulary: Vocabulary,
    grid: Sequence[float] = DEFAULT_GRID,
    mel_config: MelConfig | None = None,
    f0_config: F0Config | None = None,
    max_frames: int = 600,
    gl_iterations: int = 60,
    jobs: int = 1,
) -> SweepReport:
    """Sweep one control across the grid, re-measuring synthesized audio.

    At each grid value the named control is set and the other two held at
    zero; every text is synthesized, inverted to a waveform, and measured.
    Truncated synthesis and unmeasurable audio are recorded per row rather
    than aborting the sweep. Rows are ordered by grid point then text, and
    the report is identical for any jobs count since every row is a pure
    function of its own (grid value, text) pair.
    """
    if feature_name not in CONTROL_FEATURES:
        raise ValidationError(
            f"unknown control {feature_name!r}; expected one of {CONTROL_FEATURES}"
        )
    if not texts:
        raise ValidationError("no texts to synthesize")
    if jobs < 1:
        raise ValidationError("jobs must be >= 1")
    mel_config = mel_config or MelConfig(n_mels=model.config.n_mels)
    sequences = [tokenize(t, vocabulary) for t in texts]

    def measure_one(task: tuple[float, int]) -> SweepRow:
        g, k = task
        z = _control_vector(feature_name, g)
        result = synthesize(model, sequences[k], z, max_frames, mel_config)
        # endpoint before measuring: a model that idles in its final state
        # pads the output with near-silence that is not speech material
        buffer = _trim_trailing_silence(griffin_lim(result.mel, iterations=gl_iterations))
        try:
            if _too_short_for_f0(buffer, f0_config):
                raise UnvoicedUtteranceError("audio shorter than one pitch frame")
            feats = extract_features(buffer, f0_config)
            creak = measure_creak(buffer, f0_config)
        except UnvoicedUtteranceError:
            feats = None
            creak = None
        return SweepRow(
            control=g,
            text_index=k,
            truncated=result.truncated,
            features=feats,
            creak=creak,
        )

    tasks = [(float(g), k) for g in grid for k in range(len(sequences))]
    if jobs == 1:
        rows = [measure_one(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(measure_one, tasks))
    return SweepReport(
        feature_name=feature_name,
        grid=tuple(float(g) for g in grid),
        n_texts=len(texts),
        rows=tuple(rows),
        standardizer=standardizer,
    )


def _too_short_for_f0(buffer: AudioBuffer, f0_config: F0Config | None) -> bool:
    cfg = f0_config or F0Config()
    return len(buffer.samples) < int(round(cfg.frame_s * buffer.sample_rate))


def _measured_values(report: SweepReport, control: float) -> np.ndarray:
    attr = MEASURED_ATTR[report.feature_name]
    vals = [
        getattr(r.features, attr)
        for r in report.rows_at(control)
        if r.features is not None
    ]
    return np.asarray(vals, dtype=np.float64)


def control_accuracy(report: SweepReport) -> dict:
    """Spearman rho of grid vs per-point median, plus per-interval slopes.

    The rho quantifies monotone control predictability; the ordinary
    least-squares slope inside each adjacent grid interval localizes where
    control gain changes. Constant medians are reported as rho 0 with the
    degenerate flag set.
    """
    if len(report.grid) < 3:
        raise ValidationError("need at least 3 grid points")
    medians = []
    for g in report.grid:
        vals = _measured_values(report, g)
        if len(vals) == 0:
            raise ValidationError(f"no measurable utterances at control {g}")
        medians.append(float(np.median(vals)))

    degenerate = len(set(medians)) == 1
    if degenerate:
        rho = 0.0
    else:
        rho = float(spearmanr(report.grid, medians).statistic)

    slopes = []
    for lo, hi in zip(report.grid, report.grid[1:]):
        xs, ys = [], []
        for g in (lo, hi):
            vals = _measured_values(report, g)
            xs.extend([g] * len(vals))
            ys.extend(vals)
        xs = np.asarray(xs)
        ys = np.asarray(ys)
        # two x-levels, so this equals the difference of level means over dx
        slope = float(
            np.sum((xs - xs.mean()) * (ys - ys.mean())) / np.sum((xs - xs.mean()) ** 2)
        )
        slopes.append({"lo": float(lo), "hi": float(hi), "slope": slope})

    return {
        "feature_name": report.feature_name,
        "spearman_rho": rho,
        "degenerate": degenerate,
        "medians": medians,
        "slopes": slopes,
    }


# ---------------------------------------------------------------------------
# Sweep serialization
# ---------------------------------------------------------------------------


def sweep_point_summary(report: SweepReport) -> list[dict]:
    """Plot-ready per-grid-point rows: control, median, q25, q75."""
    out = []
    for g in report.grid:
        vals = _measured_values(report, g)
        point = {"control": float(g)}
        if len(vals) > 0:
            point["median"] = float(np.median(vals))
            point["q25"] = float(np.quantile(vals, 0.25))
            point["q75"] = float(np.quantile(vals, 0.75))
        else:
            point["median"] = point["q25"] = point["q75"] = math.nan
        point["n_measured"] = int(len(vals))
        point["n_truncated"] = sum(1 for r in report.rows_at(g) if r.truncated)
        out.append(point)
    return out


def write_sweep_csv(report: SweepReport, path: str | Path) -> None:
    """CSV with header control,median,q25,q75 and one row per grid point."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["control", "median", "q25", "q75"])
        for point in sweep_point_summary(report):
            writer.writerow(
                [
                    repr(point["control"]),
                    repr(point["median"]),
                    repr(point["q25"]),
                    repr(point["q75"]),
                ]
            )


def sweep_summary(report: SweepReport, accuracy: dict | None = None) -> dict:
    """JSON-ready summary: feature, grid, per-point stats, optional accuracy."""
    doc = {
        "feature_name": report.feature_name,
        "grid": list(report.grid),
        "n_texts": report.n_texts,
        "points": sweep_point_summary(report),
    }
    if accuracy is not None:
        doc["accuracy"] = accuracy
    return doc


def write_sweep_json(
    report: SweepReport, path: str | Path, accuracy: dict | None = None
) -> None:
    Path(path).write_text(
        json.dumps(sweep_summary(report, accuracy), indent=2) + "\n",
        encoding="utf-8",
    )


# ---------------------------------------------------------------------------
# Creak style evaluation
# ---------------------------------------------------------------------------


def _parse_preset(name: str, preset) -> tuple[np.ndarray, np.ndarray | None]:
    """A preset is a 3-vector (constant z) or a pair of 3-vectors (schedule)."""
    arr = np.asarray(preset, dtype=np.float64)
    if arr.shape == (3,):
        return arr, None
    if arr.shape == (2, 3):
        return arr[0], arr[1]
    raise ValidationError(
        f"preset {name!r} must be a 3-vector or a (head, tail) pair of "
        f"3-vectors, got shape {arr.shape}"
    )


def split_schedule_text(text: str) -> tuple[str, str]:
    """Split off the final 30% of symbols (rounded up) as the tail."""
    tokens = text_to_tokens(text)
    if not tokens:
        raise ValidationError("empty symbol sequence")
    n_tail = int(math.ceil(EOT_TAIL_FRACTION * len(tokens)))
    return "".join(tokens[:-n_tail]), "".join(tokens[-n_tail:])


def _trim_trailing_silence(
    buffer: AudioBuffer, rel_threshold: float = 0.05, keep_s: float = 0.020
) -> AudioBuffer:
    """Cut trailing samples whose local RMS falls below a share of the peak."""
    frame = max(1, int(round(0.025 * buffer.sample_rate)))
    hop = max(1, int(round(0.010 * buffer.sample_rate)))
    x = buffer.samples
    if len(x) <= frame:
        return buffer
    n_frames = 1 + (len(x) - frame) // hop
    starts = np.arange(n_frames) * hop
    rms = np.sqrt(
        np.mean(
            np.stack([x[s : s + frame] ** 2 for s in starts]), axis=1
        )
    )
    peak = float(rms.max())
    if peak <= 0.0:
        return buffer
    live = np.nonzero(rms >= rel_threshold * peak)[0]
    end = int(starts[live[-1]] + frame + round(keep_s * buffer.sample_rate))
    return AudioBuffer(x[: min(end, len(x))], buffer.sample_rate)


def render_styled_utterance(
    model: NeuralHmmModel,
    text: str,
    vocabulary: Vocabulary,
    preset,
    mel_config: MelConfig | None = None,
    max_frames: int = 600,
    gl_iterations: int = 60,
) -> tuple[AudioBuffer, bool]:
    """Synthesize one text under a style preset; returns (audio, truncated).

    A scheduled preset renders the head and tail symbol spans as two
    separate utterances with their own controls and concatenates the
    waveforms, trimming each segment's trailing silence first.
    """
    mel_config = mel_config or MelConfig(n_mels=model.config.n_mels)
    head_z, tail_z = _parse_preset("preset", preset)
    if tail_z is None:
        spans = [(text, head_z)]
    else:
        head_text, tail_text = split_schedule_text(text)
        spans = [(tail_text, tail_z)] if not head_text else [
            (head_text, head_z),
            (tail_text, tail_z),
        ]
    pieces = []
    truncated = False
    for span_text, zvec in spans:
        seq = tokenize(span_text, vocabulary)
        result = synthesize(
            model, seq, StandardizedFeatures(*zvec), max_frames, mel_config
        )
        truncated = truncated or result.truncated
        buffer = griffin_lim(result.mel, iterations=gl_iterations)
        pieces.append(_trim_trailing_silence(buffer))
    samples = np.concatenate([b.samples for b in pieces])
    return AudioBuffer(samples, pieces[0].sample_rate), truncated


def creak_concentration(
    buffer: AudioBuffer,
    f0_config: F0Config | None = None,
    final_fraction: float = 0.4,
    creak_f0_ceiling: float = 70.0,
) -> float:
    """Share of creaky frames that fall in the final fraction of the audio."""
    if not (0.0 < final_fraction <= 1.0):
        raise ValidationError("final_fraction must be in (0, 1]")
    track = estimate_f0(buffer, f0_config or F0Config())
    creaky = track.voiced & (track.f0_hz < creak_f0_ceiling)
    total = int(np.count_nonzero(creaky))
    if total == 0:
        return 0.0
    boundary = buffer.duration_s * (1.0 - final_fraction)
    late = int(np.count_nonzero(creaky & (track.times >= boundary)))
    return late / total


def creak_style_eval(
    model: NeuralHmmModel,
    texts: Sequence[str],
    style_presets: Mapping[str, object],
    vocabulary: Vocabulary,
    mel_config: MelConfig | None = None,
    f0_config: F0Config | None = None,
    max_frames: int = 600,
    gl_iterations: int = 60,
    alpha: float = 0.05,
    ci_level: float = 0.95,
    jobs: int = 1,
) -> dict:
    """Synthesize every text in every style and compare creak fractions.

    Per style: the per-utterance creak fractions, their mean with a
    normal-approximation interval, and the truncation count. Across
    styles: one-way ANOVA and Tukey-Kramer pairwise comparisons over the
    per-utterance fractions.
    """
    if len(style_presets) < 2:
        raise ValidationError("need at least 2 styles to compare")
    if len(texts) < 2:
        raise ValidationError("need at least 2 texts per style")
    if jobs < 1:
        raise ValidationError("jobs must be >= 1")
    for name, preset in style_presets.items():
        _parse_preset(name, preset)  # fail fast before synthesis

    def measure_one(task: tuple[object, str]) -> tuple[float, bool]:
        preset, text = task
        buffer, truncated = render_styled_utterance(
            model, text, vocabulary, preset, mel_config, max_frames,
            gl_iterations,
        )
        if _too_short_for_f0(buffer, f0_config):
            return 0.0, truncated  # nothing measurable counts as no creak
        return measure_creak(buffer, f0_config).creak_fraction, truncated

    styles = {}
    groups = {}
    for name, preset in style_presets.items():
        tasks = [(preset, text) for text in texts]
        if jobs == 1:
            measured = [measure_one(t) for t in tasks]
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                measured = list(pool.map(measure_one, tasks))
        fractions = [m[0] for m in measured]
        n_truncated = sum(int(m[1]) for m in measured)
        ci = mean_ci(fractions, ci_level)
        styles[name] = {
            "fractions": fractions,
            "mean": ci["mean"],
            "ci_lo": ci["lo"],
            "ci_hi": ci["hi"],
            "n_truncated": n_truncated,
        }
        groups[name] = fractions

    samples = GroupSamples(groups)
    return {
        "styles": styles,
        "anova": one_way_anova(samples),
        "tukey": tukey_hsd(samples, alpha),
    }
