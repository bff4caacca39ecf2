"""Recording-to-manifest pipeline.

Long recordings are cut into breath-group utterances at silent pauses,
paired into overlapping two-group utterances under a duration cap, sliced
to per-utterance WAV files, and described in a JSON Lines manifest together
with a fitted feature standardizer. Transcripts arrive as sidecar files
with one line per detected group.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, F0Config, energy_contour, load_wav, save_wav
from .errors import (
    TranscriptMismatchError,
    UnknownSymbolError,
    UnvoicedUtteranceError,
    ValidationError,
)
from .prosody import (
    ProsodyFeatures,
    StandardizedFeatures,
    Standardizer,
    extract_features,
    fit_standardizer,
    standardize,
)

logger = logging.getLogger(__name__)

BOS_ID = 0
EOS_ID = 1
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"

# character inventory; bracketed disfluency tokens extend it per corpus
_BASE_CHARS = tuple("abcdefghijklmnopqrstuvwxyz") + (" ", "'", ",", ".", "?")
_BRACKET_RE = re.compile(r"\[[a-z]+\]")
_BRACKET_SPLIT_RE = re.compile(r"(\[[a-z]+\])")  # group keeps the separators

MANIFEST_NAME = "manifest.jsonl"
STANDARDIZER_NAME = "standardizer.json"
VOCABULARY_NAME = "vocabulary.json"


@dataclass(frozen=True)
class BreathGroup:
    """A stretch of speech between two pauses, in source-recording seconds."""

    start_s: float
    end_s: float
    text: str = ""

    def __post_init__(self) -> None:
        if not (0 <= self.start_s < self.end_s):
            raise ValidationError(
                f"breath group needs 0 <= start < end, got [{self.start_s}, {self.end_s}]"
            )

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class SegConfig:
    """Pause-based segmentation settings."""

    pause_threshold_s: float = 0.25
    silence_rms: float = 1e-3
    min_group_s: float = 0.4
    max_duration_s: float = 11.0
    frame_s: float = 0.025
    hop_s: float = 0.010

    def __post_init__(self) -> None:
        vals = (
            self.pause_threshold_s,
            self.silence_rms,
            self.min_group_s,
            self.max_duration_s,
            self.frame_s,
            self.hop_s,
        )
        if not all(v > 0 for v in vals):
            raise ValidationError("segmentation settings must all be positive")
        if self.min_group_s >= self.max_duration_s:
            raise ValidationError("min_group_s must be below max_duration_s")


@dataclass
class Vocabulary:
    """Token string to id table with fixed sentinel ids 0 and 1."""

    tokens: list[str]

    def __post_init__(self) -> None:
        if self.tokens[:2] != [BOS_TOKEN, EOS_TOKEN]:
            raise ValidationError("vocabulary must start with the BOS/EOS sentinels")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValidationError("vocabulary contains duplicate tokens")
        self._ids = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id_of(self, token: str) -> int:
        return self._ids[token]

    def token_of(self, idx: int) -> str:
        return self.tokens[idx]

    @classmethod
    def base(cls) -> "Vocabulary":
        return cls([BOS_TOKEN, EOS_TOKEN, *_BASE_CHARS])

    @classmethod
    def from_texts(cls, texts: list[str]) -> "Vocabulary":
        extra = sorted({m for t in texts for m in _BRACKET_RE.findall(t.lower())})
        return cls([BOS_TOKEN, EOS_TOKEN, *_BASE_CHARS, *extra])

    def to_json(self) -> str:
        return json.dumps({"tokens": self.tokens, "version": 1})

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        try:
            doc = json.loads(text)
            return cls(list(doc["tokens"]))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"malformed vocabulary document: {exc}") from exc


@dataclass(frozen=True)
class SymbolSequence:
    """Token ids for one utterance, bracketed by the sentinels."""

    symbols: tuple[int, ...]
    vocabulary: Vocabulary

    def __post_init__(self) -> None:
        if len(self.symbols) == 0:
            raise ValidationError("empty symbol sequence")
        n = len(self.vocabulary)
        if any(not (0 <= s < n) for s in self.symbols):
            raise ValidationError("symbol id outside vocabulary")

    def __len__(self) -> int:
        return len(self.symbols)


@dataclass
class UtteranceRecord:
    """One manifest row."""

    id: str
    audio_path: str
    text: str
    duration_s: float
    features: ProsodyFeatures
    z: StandardizedFeatures
    split: str = "train"

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "audio_path": self.audio_path,
            "text": self.text,
            "duration_s": self.duration_s,
            "features": {
                "mean_log_f0": self.features.mean_log_f0,
                "f0_std": self.features.f0_std,
                "speech_rate": self.features.speech_rate,
            },
            "z": {
                "pitch": self.z.z_pitch,
                "f0_std": self.z.z_f0_std,
                "rate": self.z.z_rate,
            },
            "split": self.split,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "UtteranceRecord":
        try:
            return cls(
                id=doc["id"],
                audio_path=doc["audio_path"],
                text=doc["text"],
                duration_s=doc["duration_s"],
                features=ProsodyFeatures(
                    doc["features"]["mean_log_f0"],
                    doc["features"]["f0_std"],
                    doc["features"]["speech_rate"],
                ),
                z=StandardizedFeatures(
                    doc["z"]["pitch"], doc["z"]["f0_std"], doc["z"]["rate"]
                ),
                split=doc["split"],
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed manifest row: {exc}") from exc


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------


def _silent_runs(silent: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True, as (first, last) inclusive frame indices."""
    padded = np.concatenate([[False], silent, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def segment_breath_groups(
    buffer: AudioBuffer, cfg: SegConfig | None = None
) -> list[BreathGroup]:
    """Cut a recording at silent pauses of at least pause_threshold_s.

    Interior qualifying pauses become boundaries at the pause midpoint.
    Qualifying leading and trailing silence is trimmed at the speech edge.
    Groups holding less than min_group_s of speech (pause halves inside a
    group's span do not count) merge into the following group; a short
    final group merges backward. An entirely silent recording yields [].
    """
    cfg = cfg or SegConfig()
    times, rms = energy_contour(buffer, cfg.frame_s, cfg.hop_s)
    hop_s = round(cfg.hop_s * buffer.sample_rate) / buffer.sample_rate
    silent = rms < cfg.silence_rms
    if silent.all():
        return []

    speech_idx = np.flatnonzero(~silent)
    first_speech, last_speech = int(speech_idx[0]), int(speech_idx[-1])
    min_run = int(math.ceil(cfg.pause_threshold_s / hop_s))

    cuts: list[float] = []
    start = 0.0
    end = buffer.duration_s
    for a, b in _silent_runs(silent):
        if b - a + 1 < min_run:
            continue
        if b < first_speech:  # leading silence: trim to the speech edge
            start = max(0.0, times[first_speech] - cfg.frame_s / 2)
        elif a > last_speech:  # trailing silence
            end = min(end, times[last_speech] + cfg.frame_s / 2)
        else:
            cuts.append(float((times[a] + times[b]) / 2))

    bounds = [start, *cuts, end]
    regions = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    speech_times = times[~silent]

    def speech_s(lo: float, hi: float) -> float:
        return float(np.count_nonzero((speech_times >= lo) & (speech_times < hi))) * hop_s

    # forward merge of speech-poor groups; a short final group merges backward
    merged: list[tuple[float, float, float]] = []
    carry_lo: float | None = None
    carry_s = 0.0
    for k, (lo, hi) in enumerate(regions):
        lo_eff = carry_lo if carry_lo is not None else lo
        dur = carry_s + speech_s(lo, hi)
        if dur < cfg.min_group_s and k < len(regions) - 1:
            carry_lo, carry_s = lo_eff, dur
            continue
        merged.append((lo_eff, hi, dur))
        carry_lo, carry_s = None, 0.0
    if len(merged) >= 2 and merged[-1][2] < cfg.min_group_s:
        lo1, hi1, d1 = merged.pop()
        lo0, _, d0 = merged.pop()
        merged.append((lo0, hi1, d0 + d1))
    return [BreathGroup(lo, hi) for lo, hi, _ in merged]


def attach_transcripts(
    groups: list[BreathGroup], transcript_lines: list[str]
) -> list[BreathGroup]:
    """Pair sidecar lines with detected groups, one line per group."""
    if len(transcript_lines) != len(groups):
        raise TranscriptMismatchError(
            f"transcript has {len(transcript_lines)} lines but "
            f"{len(groups)} breath groups were detected"
        )
    return [
        BreathGroup(g.start_s, g.end_s, line.strip())
        for g, line in zip(groups, transcript_lines)
    ]


# ---------------------------------------------------------------------------
# Bigrams
# ---------------------------------------------------------------------------


def build_bigrams(
    groups: list[BreathGroup], cfg: SegConfig | None = None
) -> list[tuple[float, float, str]]:
    """Overlapping two-group spans under the duration cap.

    Consecutive pairs within max_duration_s are emitted as one span with
    concatenated text; an over-long pair falls back to its first group as
    a singleton. Every group ends up inside at least one span.
    """
    cfg = cfg or SegConfig()
    for a, b in zip(groups[:-1], groups[1:]):
        if b.start_s < a.end_s:
            raise ValidationError("breath groups must be ordered and non-overlapping")
    n = len(groups)
    if n == 0:
        return []
    if n == 1:
        g = groups[0]
        return [(g.start_s, g.end_s, g.text)]

    def join(*texts: str) -> str:
        return " ".join(t for t in texts if t)

    spans: list[tuple[float, float, str]] = []
    covered = [False] * n
    for i in range(n - 1):
        a, b = groups[i], groups[i + 1]
        if b.end_s - a.start_s <= cfg.max_duration_s:
            spans.append((a.start_s, b.end_s, join(a.text, b.text)))
            covered[i] = covered[i + 1] = True
    for i in range(n):
        if not covered[i]:
            g = groups[i]
            spans.append((g.start_s, g.end_s, g.text))
    spans.sort(key=lambda s: (s[0], s[1]))
    return spans


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------


def text_to_tokens(text: str) -> list[str]:
    """Filter and split raw text into token strings (no sentinels)."""
    raw: list[str] = []
    for part in _BRACKET_SPLIT_RE.split(text.lower()):
        if _BRACKET_RE.fullmatch(part):
            raw.append(part)
            continue
        for ch in part:
            if ch in _BASE_CHARS and ch != " ":
                raw.append(ch)
            elif ch.isspace():
                raw.append(" ")
    out: list[str] = []
    for tok in raw:
        if tok == " " and (not out or out[-1] == " "):
            continue
        out.append(tok)
    while out and out[-1] == " ":
        out.pop()
    return out


def tokenize(text: str, vocabulary: Vocabulary) -> SymbolSequence:
    """Lowercase, filter to the vocabulary alphabet, add sentinels."""
    tokens = text_to_tokens(text)
    if not tokens:
        raise ValidationError("empty symbol sequence")
    unknown = sorted({t for t in tokens if t not in vocabulary})
    if unknown:
        raise UnknownSymbolError(unknown)
    ids = (BOS_ID, *(vocabulary.id_of(t) for t in tokens), EOS_ID)
    return SymbolSequence(ids, vocabulary)


def detokenize(seq: SymbolSequence) -> str:
    """Token ids back to text, sentinels dropped."""
    return "".join(
        seq.vocabulary.token_of(s) for s in seq.symbols if s not in (BOS_ID, EOS_ID)
    )


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


def build_manifest(
    recordings: list[tuple[str | Path, str | Path]],
    out_dir: str | Path,
    seg_cfg: SegConfig | None = None,
    f0_cfg: F0Config | None = None,
    corpus_id: str = "corpus",
) -> tuple[Path, Standardizer]:
    """Run the full pipeline over (wav, transcript) pairs.

    Writes one WAV per utterance into out_dir/audio, a JSONL manifest, a
    standardizer JSON, and a vocabulary JSON. Utterances whose features
    cannot be measured are logged and dropped. Returns the manifest path
    and the fitted standardizer.
    """
    seg_cfg = seg_cfg or SegConfig()
    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)

    rows: list[dict] = []
    texts: list[str] = []
    for wav_path, transcript_path in recordings:
        wav_path = Path(wav_path)
        buffer = load_wav(wav_path)
        lines = Path(transcript_path).read_text(encoding="utf-8").splitlines()
        groups = attach_transcripts(segment_breath_groups(buffer, seg_cfg), lines)
        for k, (start_s, end_s, text) in enumerate(build_bigrams(groups, seg_cfg)):
            utt_id = f"{wav_path.stem}_{k:04d}"
            lo = int(round(start_s * buffer.sample_rate))
            hi = int(round(end_s * buffer.sample_rate))
            clip = AudioBuffer(buffer.samples[lo:hi], buffer.sample_rate)
            try:
                feats = extract_features(clip, f0_cfg)
            except UnvoicedUtteranceError as exc:
                logger.warning("dropping %s: %s", utt_id, exc)
                continue
            rel_path = f"audio/{utt_id}.wav"
            save_wav(out_dir / rel_path, clip)
            texts.append(text)
            rows.append(
                {
                    "id": utt_id,
                    "audio_path": rel_path,
                    "text": text,
                    "duration_s": clip.duration_s,
                    "features": feats,
                }
            )

    if not rows:
        raise ValidationError("zero surviving utterances")
    standardizer = fit_standardizer([r["features"] for r in rows], corpus_id)
    records = [
        UtteranceRecord(
            id=r["id"],
            audio_path=r["audio_path"],
            text=r["text"],
            duration_s=r["duration_s"],
            features=r["features"],
            z=standardize(r["features"], standardizer),
        )
        for r in rows
    ]
    manifest_path = out_dir / MANIFEST_NAME
    write_manifest(manifest_path, records)
    (out_dir / STANDARDIZER_NAME).write_text(standardizer.to_json(), encoding="utf-8")
    vocab = Vocabulary.from_texts(texts)
    (out_dir / VOCABULARY_NAME).write_text(vocab.to_json(), encoding="utf-8")
    return manifest_path, standardizer


def write_manifest(path: str | Path, records: list[UtteranceRecord]) -> None:
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate utterance ids in manifest")
    lines = [json.dumps(r.to_json_dict()) for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> list[UtteranceRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(UtteranceRecord.from_json_dict(json.loads(line)))
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate utterance ids in manifest")
    return records


def split_train_heldout(
    records: list[UtteranceRecord], heldout_fraction: float, seed: int
) -> list[UtteranceRecord]:
    """Deterministically relabel records into train and heldout splits."""
    if not (0 < heldout_fraction < 1):
        raise ValidationError("heldout_fraction must be in (0, 1)")
    n = len(records)
    n_heldout = int(math.floor(n * heldout_fraction))
    if n_heldout == 0 or n_heldout == n:
        raise ValidationError(
            f"fraction {heldout_fraction} leaves an empty split for {n} items"
        )
    perm = np.random.default_rng(seed).permutation(n)
    heldout = set(int(i) for i in perm[:n_heldout])
    out = []
    for k, r in enumerate(records):
        split = "heldout" if k in heldout else "train"
        out.append(
            UtteranceRecord(
                r.id, r.audio_path, r.text, r.duration_s, r.features, r.z, split
            )
        )
    return out
