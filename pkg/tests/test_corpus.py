"""Tests for segmentation, bigram spans, tokenization, and the manifest."""

import json
import math

import numpy as np
import pytest

from prosohmm.audio import AudioBuffer, load_wav, save_wav
from prosohmm.corpus import (
    BOS_ID,
    EOS_ID,
    BreathGroup,
    SegConfig,
    SymbolSequence,
    UtteranceRecord,
    Vocabulary,
    attach_transcripts,
    build_bigrams,
    build_manifest,
    detokenize,
    read_manifest,
    segment_breath_groups,
    split_train_heldout,
    text_to_tokens,
    tokenize,
    write_manifest,
)
from prosohmm.errors import (
    TranscriptMismatchError,
    UnknownSymbolError,
    ValidationError,
)
from prosohmm.prosody import ProsodyFeatures, StandardizedFeatures

SR = 22050


def tone(hz, seconds, amp=0.5, bumps=0):
    t = np.arange(int(seconds * SR)) / SR
    env = 1.0 if bumps == 0 else 0.55 - 0.45 * np.cos(2 * np.pi * (bumps / seconds) * t)
    return env * amp * np.sin(2 * np.pi * hz * t)


def silence(seconds):
    return np.zeros(int(seconds * SR))


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------


def test_segment_two_tones_boundary_at_pause_midpoint():
    x = np.concatenate([tone(220, 1.0), silence(0.5), tone(220, 1.0)])
    groups = segment_breath_groups(AudioBuffer(x, SR))
    assert len(groups) == 2
    assert abs(groups[0].end_s - 1.25) <= 0.011  # one hop
    assert groups[0].end_s == groups[1].start_s
    assert groups[0].start_s == 0.0
    assert groups[1].end_s == pytest.approx(2.5, abs=1e-9)


def test_segment_continuous_tone_single_group():
    groups = segment_breath_groups(AudioBuffer(tone(220, 3.0), SR))
    assert len(groups) == 1
    assert groups[0].start_s == 0.0
    assert groups[0].end_s == pytest.approx(3.0, abs=1e-9)


def test_segment_short_group_merges_forward():
    x = np.concatenate([tone(220, 0.2), silence(0.5), tone(220, 1.0)])
    groups = segment_breath_groups(AudioBuffer(x, SR))
    assert len(groups) == 1
    assert groups[0].start_s == 0.0
    assert groups[0].end_s == pytest.approx(1.7, abs=1e-9)


def test_segment_short_last_group_merges_backward():
    x = np.concatenate([tone(220, 1.0), silence(0.5), tone(220, 0.2)])
    groups = segment_breath_groups(AudioBuffer(x, SR))
    assert len(groups) == 1
    assert groups[0].start_s == 0.0
    assert groups[0].end_s == pytest.approx(1.7, abs=1e-9)


def test_segment_silence_yields_empty():
    assert segment_breath_groups(AudioBuffer(silence(2.0), SR)) == []


def test_segment_trims_edge_silence():
    x = np.concatenate([silence(0.6), tone(220, 1.0), silence(0.6)])
    groups = segment_breath_groups(AudioBuffer(x, SR))
    assert len(groups) == 1
    assert 0.55 <= groups[0].start_s <= 0.62
    assert 1.58 <= groups[0].end_s <= 1.65


def test_segment_short_pause_not_a_boundary():
    x = np.concatenate([tone(220, 1.0), silence(0.15), tone(220, 1.0)])
    groups = segment_breath_groups(AudioBuffer(x, SR))
    assert len(groups) == 1


def test_segment_covers_all_speech():
    # every above-threshold frame center must land inside some group
    from prosohmm.audio import energy_contour

    x = np.concatenate(
        [silence(0.4), tone(220, 0.7), silence(0.3), tone(180, 1.2), silence(0.5)]
    )
    buf = AudioBuffer(x, SR)
    cfg = SegConfig()
    groups = segment_breath_groups(buf, cfg)
    times, rms = energy_contour(buf, cfg.frame_s, cfg.hop_s)
    for t, r in zip(times, rms):
        if r >= cfg.silence_rms:
            assert any(g.start_s <= t <= g.end_s for g in groups), t


def test_breath_group_validation():
    with pytest.raises(ValidationError):
        BreathGroup(2.0, 1.0)
    with pytest.raises(ValidationError):
        BreathGroup(-0.5, 1.0)


def test_seg_config_validation():
    with pytest.raises(ValidationError):
        SegConfig(min_group_s=12.0, max_duration_s=11.0)
    with pytest.raises(ValidationError):
        SegConfig(pause_threshold_s=0.0)


# ---------------------------------------------------------------------------
# Bigrams
# ---------------------------------------------------------------------------


def test_bigrams_pairing_rule():
    groups = [
        BreathGroup(0.0, 3.0, "a"),
        BreathGroup(3.0, 7.0, "b"),
        BreathGroup(7.0, 10.0, "c"),
    ]
    spans = build_bigrams(groups)
    assert spans == [(0.0, 7.0, "a b"), (3.0, 10.0, "b c")]


def test_bigrams_cap_falls_back_to_singletons():
    groups = [BreathGroup(0.0, 6.0, "a"), BreathGroup(6.0, 12.0, "b")]
    spans = build_bigrams(groups)
    assert spans == [(0.0, 6.0, "a"), (6.0, 12.0, "b")]


def test_bigrams_four_groups_middle_twice():
    groups = [BreathGroup(2.0 * i, 2.0 * i + 2.0, f"g{i}") for i in range(4)]
    spans = build_bigrams(groups)
    assert len(spans) == 3
    appearances = {i: 0 for i in range(4)}
    for lo, hi, _ in spans:
        for i, g in enumerate(groups):
            if lo <= g.start_s and g.end_s <= hi:
                appearances[i] += 1
    assert appearances == {0: 1, 1: 2, 2: 2, 3: 1}


def test_bigrams_single_group_and_empty():
    g = BreathGroup(1.0, 3.0, "x")
    assert build_bigrams([g]) == [(1.0, 3.0, "x")]
    assert build_bigrams([]) == []


def test_bigrams_coverage_with_mixed_caps():
    # middle pair overflows: g1 emitted alone, g2 covered by the last pair
    groups = [
        BreathGroup(0.0, 5.0, "a"),
        BreathGroup(5.0, 10.9, "b"),
        BreathGroup(11.0, 16.5, "c"),
        BreathGroup(17.0, 19.0, "d"),
    ]
    spans = build_bigrams(groups)
    for g in groups:
        assert any(lo <= g.start_s and g.end_s <= hi for lo, hi, _ in spans), g
    assert all(hi - lo <= 11.0 for lo, hi, _ in spans)


def test_bigrams_reject_unordered():
    with pytest.raises(ValidationError):
        build_bigrams([BreathGroup(0.0, 3.0), BreathGroup(2.0, 4.0)])


def test_attach_transcripts_mismatch_lists_counts():
    groups = [BreathGroup(0.0, 1.0), BreathGroup(1.0, 2.0), BreathGroup(2.0, 3.0)]
    with pytest.raises(TranscriptMismatchError, match="2.*3|3.*2"):
        attach_transcripts(groups, ["one", "two"])


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------


def test_tokenize_drops_punctuation():
    vocab = Vocabulary.base()
    seq = tokenize("Hi!", vocab)
    assert [vocab.token_of(s) for s in seq.symbols] == ["<bos>", "h", "i", "<eos>"]
    assert seq.symbols[0] == BOS_ID and seq.symbols[-1] == EOS_ID


def test_tokenize_bracketed_token_and_spacing():
    vocab = Vocabulary.from_texts(["[uh]"])
    seq = tokenize("um, [uh] yes", vocab)
    toks = [vocab.token_of(s) for s in seq.symbols]
    assert toks == [
        "<bos>", "u", "m", ",", " ", "[uh]", " ", "y", "e", "s", "<eos>",
    ]


def test_tokenize_question_marks():
    vocab = Vocabulary.base()
    seq = tokenize("???", vocab)
    toks = [vocab.token_of(s) for s in seq.symbols]
    assert toks == ["<bos>", "?", "?", "?", "<eos>"]


def test_tokenize_collapses_whitespace_and_case():
    vocab = Vocabulary.base()
    a = tokenize("  A   b\tC \n", vocab)
    b = tokenize("a b c", vocab)
    assert a.symbols == b.symbols


def test_tokenize_empty_after_filter_errors():
    vocab = Vocabulary.base()
    with pytest.raises(ValidationError, match="empty symbol sequence"):
        tokenize("1234 @#$%", vocab)
    with pytest.raises(ValidationError, match="empty symbol sequence"):
        tokenize("", vocab)


def test_tokenize_unknown_bracket_token_listed():
    vocab = Vocabulary.base()  # no bracket tokens registered
    with pytest.raises(UnknownSymbolError) as err:
        tokenize("well [cough] then [uh] so", vocab)
    assert err.value.symbols == ["[cough]", "[uh]"]


def test_detokenize_round_trip_idempotent():
    vocab = Vocabulary.from_texts(["[uh]", "[breath]"])
    for text in ["um, [uh] yes?", "Hello there.", "a [breath] b", "it's fine"]:
        once = detokenize(tokenize(text, vocab))
        twice = detokenize(tokenize(once, vocab))
        assert once == twice
        assert tokenize(once, vocab).symbols == tokenize(twice, vocab).symbols


def test_vocabulary_sentinels_and_size():
    vocab = Vocabulary.base()
    assert vocab.token_of(0) == "<bos>" and vocab.token_of(1) == "<eos>"
    assert len(vocab) == 33  # 26 letters + space + ' , . ? + 2 sentinels


def test_vocabulary_json_round_trip():
    vocab = Vocabulary.from_texts(["[uh] [um]"])
    back = Vocabulary.from_json(vocab.to_json())
    assert back.tokens == vocab.tokens
    with pytest.raises(ValidationError):
        Vocabulary.from_json("{broken")


def test_symbol_sequence_validation():
    vocab = Vocabulary.base()
    with pytest.raises(ValidationError):
        SymbolSequence((), vocab)
    with pytest.raises(ValidationError):
        SymbolSequence((0, 999, 1), vocab)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


def three_group_recording():
    # three tones with distinct pitch, spread, and bump rate so the fitted
    # standardizer sees variance in every dimension across the two bigrams
    x = np.concatenate(
        [
            tone(150, 1.2, bumps=3),
            silence(0.28),
            tone(220, 1.4, bumps=5),
            silence(0.28),
            tone(300, 1.2, bumps=4),
        ]
    )
    return AudioBuffer(x, SR)


def write_recording(tmp_path, name="rec", lines=("hello there", "how are you", "fine")):
    wav = tmp_path / f"{name}.wav"
    save_wav(wav, three_group_recording())
    txt = tmp_path / f"{name}.txt"
    txt.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return wav, txt


def test_build_manifest_three_groups(tmp_path):
    wav, txt = write_recording(tmp_path)
    out = tmp_path / "out"
    manifest_path, standardizer = build_manifest([(wav, txt)], out)
    records = read_manifest(manifest_path)
    assert len(records) == 2  # two overlapping bigrams from three groups
    assert (out / "standardizer.json").exists()
    assert (out / "vocabulary.json").exists()
    texts = {r.text for r in records}
    assert texts == {"hello there how are you", "how are you fine"}
    for r in records:
        clip = load_wav(out / r.audio_path)
        assert abs(clip.duration_s - r.duration_s) <= 0.011  # one hop
        assert r.duration_s <= 11.0
        assert r.split == "train"
    assert len({r.id for r in records}) == 2


def test_build_manifest_rerun_byte_identical(tmp_path):
    wav, txt = write_recording(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    build_manifest([(wav, txt)], out_a)
    build_manifest([(wav, txt)], out_b)
    assert (out_a / "manifest.jsonl").read_bytes() == (out_b / "manifest.jsonl").read_bytes()
    assert (out_a / "standardizer.json").read_bytes() == (out_b / "standardizer.json").read_bytes()
    wavs = sorted(p.name for p in (out_a / "audio").iterdir())
    assert wavs == sorted(p.name for p in (out_b / "audio").iterdir())
    for name in wavs:
        assert (out_a / "audio" / name).read_bytes() == (out_b / "audio" / name).read_bytes()


def test_build_manifest_silence_errors(tmp_path):
    wav = tmp_path / "quiet.wav"
    save_wav(wav, AudioBuffer(silence(2.0), SR))
    txt = tmp_path / "quiet.txt"
    txt.write_text("", encoding="utf-8")
    with pytest.raises(ValidationError, match="zero surviving utterances"):
        build_manifest([(wav, txt)], tmp_path / "out")


def test_build_manifest_unvoiced_dropped(tmp_path):
    # noise segments survive segmentation but fail pitch measurement
    rng = np.random.default_rng(5)
    wav = tmp_path / "noise.wav"
    save_wav(wav, AudioBuffer(0.4 * rng.standard_normal(2 * SR), SR))
    txt = tmp_path / "noise.txt"
    txt.write_text("ssss\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="zero surviving utterances"):
        build_manifest([(wav, txt)], tmp_path / "out")


def test_build_manifest_transcript_mismatch(tmp_path):
    wav, _ = write_recording(tmp_path)
    txt = tmp_path / "short.txt"
    txt.write_text("only one line\n", encoding="utf-8")
    with pytest.raises(TranscriptMismatchError, match="1.*3|3.*1"):
        build_manifest([(wav, txt)], tmp_path / "out")


def test_manifest_read_write_round_trip(tmp_path):
    records = [
        UtteranceRecord(
            id=f"u{i}",
            audio_path=f"audio/u{i}.wav",
            text="hello",
            duration_s=2.5 + i,
            features=ProsodyFeatures(5.0 + 0.1 * i, 0.2, 3.0),
            z=StandardizedFeatures(0.1 * i, -0.2, 0.5),
        )
        for i in range(4)
    ]
    path = tmp_path / "m.jsonl"
    write_manifest(path, records)
    back = read_manifest(path)
    assert back == records


def test_manifest_duplicate_ids_rejected(tmp_path):
    r = UtteranceRecord(
        id="dup",
        audio_path="a.wav",
        text="x",
        duration_s=1.0,
        features=ProsodyFeatures(5.0, 0.2, 3.0),
        z=StandardizedFeatures(0.0, 0.0, 0.0),
    )
    with pytest.raises(ValidationError, match="duplicate"):
        write_manifest(tmp_path / "m.jsonl", [r, r])


# ---------------------------------------------------------------------------
# Split
# ---------------------------------------------------------------------------


def make_records(n):
    return [
        UtteranceRecord(
            id=f"u{i}",
            audio_path=f"u{i}.wav",
            text="x",
            duration_s=2.0,
            features=ProsodyFeatures(5.0, 0.2, 3.0),
            z=StandardizedFeatures(0.0, 0.0, 0.0),
        )
        for i in range(n)
    ]


def test_split_floor_rule():
    out = split_train_heldout(make_records(10), 0.2, seed=7)
    assert sum(r.split == "heldout" for r in out) == 2
    assert sum(r.split == "train" for r in out) == 8


def test_split_deterministic():
    a = split_train_heldout(make_records(20), 0.25, seed=3)
    b = split_train_heldout(make_records(20), 0.25, seed=3)
    assert [r.split for r in a] == [r.split for r in b]


def test_split_seeds_differ():
    base = [r.split for r in split_train_heldout(make_records(12), 0.25, seed=0)]
    assert any(
        [r.split for r in split_train_heldout(make_records(12), 0.25, seed=s)] != base
        for s in range(1, 101)
    )


def test_split_empty_side_errors():
    with pytest.raises(ValidationError):
        split_train_heldout(make_records(3), 0.01, seed=0)  # floor -> 0 heldout
    with pytest.raises(ValidationError):
        split_train_heldout(make_records(1), 0.5, seed=0)
    with pytest.raises(ValidationError):
        split_train_heldout(make_records(10), 1.5, seed=0)
