"""Command line interface.

One executable with subcommands covering the whole workflow: corpus
preparation, toy corpus generation, training, synthesis, control sweeps,
statistics, and creak style evaluation. Every run is deterministic given
identical inputs and flags, writes a resolved-config echo that can be fed
back through --config to reproduce it, and uses stable exit codes:
0 success, 2 usage or validation failure, 3 numerical failure.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # stdlib from 3.11 on
    import tomli as tomllib

import numpy as np

from .audio import MelConfig, griffin_lim, load_wav, save_wav
from .corpus import (
    SegConfig,
    VOCABULARY_NAME,
    Vocabulary,
    attach_transcripts,
    build_bigrams,
    build_manifest,
    read_manifest,
    segment_breath_groups,
    split_train_heldout,
    tokenize,
    write_manifest,
)
from .errors import NumericalError, ValidationError
from .harness import (
    CONTROL_FEATURES,
    ToyCorpusConfig,
    control_accuracy,
    corpus_stats,
    creak_style_eval,
    generate_toy_corpus,
    load_training_examples,
    run_feature_sweep,
    write_sweep_csv,
    write_sweep_json,
)
from .model import (
    ModelConfig,
    TrainConfig,
    init_model,
    load_checkpoint,
    synthesize,
    train,
)
from .prosody import StandardizedFeatures, Standardizer
from .stats import GroupSamples, mean_ci, one_way_anova, tukey_hsd

DEFAULT_PRESETS = {
    "modal": (0.0, 0.0, 0.0),
    "stylistic": (-3.0, -1.0, 0.0),
    "end_of_turn": ((0.0, 0.0, 0.0), (-3.0, -1.0, 0.0)),
}

# checked after the config merge, so a config file can stand in for any flag
# (argparse required=True would reject runs driven purely by --config)
_REQUIRED = {
    "prepare": ("recordings", "out_dir"),
    "gen-toy": ("out_dir",),
    "train": ("manifest", "out_dir"),
    "synth": ("checkpoint", "vocabulary", "text", "out"),
    "sweep": ("checkpoint", "vocabulary", "standardizer", "texts", "feature",
              "out_dir"),
    "creak-eval": ("checkpoint", "vocabulary", "texts", "out_dir"),
    "stats": ("stats_mode",),
}


# ---------------------------------------------------------------------------
# Config echo and loading
# ---------------------------------------------------------------------------


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    # json string syntax is a valid TOML basic string
    return json.dumps(str(value))


def _write_config_echo(path: Path, command: str, args: argparse.Namespace) -> None:
    skip = {"config", "func", "command"}
    lines = [f"[{command}]"]
    for key, value in sorted(vars(args).items()):
        if key in skip or value is None:
            continue
        lines.append(f"{key} = {_toml_value(value)}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_config_section(path: str, command: str) -> dict:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: not valid TOML: {exc}") from exc
    section = doc.get(command, {})
    if not isinstance(section, dict):
        raise ValidationError(f"{path}: [{command}] must be a table")
    return section


# ---------------------------------------------------------------------------
# Small shared helpers
# ---------------------------------------------------------------------------


def _read_texts_file(path: str) -> list[str]:
    texts = [
        line.strip()
        for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    if not texts:
        raise ValidationError(f"{path}: no texts found")
    return texts


def _load_vocabulary(path: str) -> Vocabulary:
    return Vocabulary.from_json(Path(path).read_text(encoding="utf-8"))


def _load_standardizer(path: str) -> Standardizer:
    return Standardizer.from_json(Path(path).read_text(encoding="utf-8"))


def _parse_grid(text: str) -> tuple[float, ...]:
    try:
        grid = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ValidationError(f"bad grid {text!r}: {exc}") from exc
    if not grid:
        raise ValidationError("empty grid")
    return grid


def _format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [
        max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
        for i, h in enumerate(headers)
    ]
    def line(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(r) for r in rows)
    return "\n".join(out)


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _read_groups_csv(path: str) -> GroupSamples:
    """CSV with header group,value; one observation per row."""
    groups: dict[str, list[float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["group", "value"]:
            raise ValidationError(f"{path}: expected header 'group,value'")
        for lineno, row in enumerate(reader, start=2):
            if not any(cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise ValidationError(
                    f"{path} row {lineno}: expected 2 columns, got {len(row)}"
                )
            try:
                value = float(row[1])
            except ValueError as exc:
                raise ValidationError(
                    f"{path} row {lineno}: bad number {row[1]!r}"
                ) from exc
            groups.setdefault(row[0].strip(), []).append(value)
    if not groups:
        raise ValidationError(f"{path}: no data rows")
    return GroupSamples(groups)


def _read_ratings_csv(path: str) -> dict[str, list[float]]:
    """CSV with header system,rater_id,item_id,score; scores in [1, 5]."""
    expected = ["system", "rater_id", "item_id", "score"]
    scores: dict[str, list[float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != expected:
            raise ValidationError(
                f"{path}: expected header '{','.join(expected)}'"
            )
        for lineno, row in enumerate(reader, start=2):
            if not any(cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise ValidationError(
                    f"{path} row {lineno}: expected 4 columns, got {len(row)}"
                )
            try:
                score = float(row[3])
            except ValueError as exc:
                raise ValidationError(
                    f"{path} row {lineno}: bad score {row[3]!r}"
                ) from exc
            if not (1.0 <= score <= 5.0):
                raise ValidationError(
                    f"{path} row {lineno}: score {score} outside [1, 5]"
                )
            scores.setdefault(row[0].strip(), []).append(score)
    if not scores:
        raise ValidationError(f"{path}: no data rows")
    return scores


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_prepare(args: argparse.Namespace) -> int:
    recordings = []
    for wav in args.recordings:
        sidecar = Path(wav).with_suffix(".txt")
        if not Path(wav).exists():
            raise FileNotFoundError(f"missing recording: {wav}")
        if not sidecar.exists():
            raise FileNotFoundError(f"missing transcript sidecar: {sidecar}")
        recordings.append((wav, str(sidecar)))

    seg_cfg = SegConfig()
    n_groups = 0
    n_bigrams = 0
    for wav, transcript in recordings:
        try:
            buffer = load_wav(wav)
            groups = segment_breath_groups(buffer, seg_cfg)
            lines = Path(transcript).read_text(encoding="utf-8").splitlines()
            n_groups += len(groups)
            n_bigrams += len(build_bigrams(attach_transcripts(groups, lines), seg_cfg))
        except ValidationError as exc:
            raise ValidationError(f"{wav}: {exc}") from exc

    out_dir = Path(args.out_dir)
    manifest_path, _ = build_manifest(
        recordings, out_dir, seg_cfg, corpus_id=args.corpus_id
    )
    records = read_manifest(manifest_path)
    if args.heldout_fraction > 0.0:
        records = split_train_heldout(records, args.heldout_fraction, args.seed)
        write_manifest(manifest_path, records)

    _write_config_echo(out_dir / "prepare.config.toml", "prepare", args)
    print(f"breath groups: {n_groups}")
    print(f"bigram utterances: {n_bigrams}")
    print(f"dropped: {n_bigrams - len(records)}")
    print(f"manifest rows: {len(records)}")
    print(f"manifest: {manifest_path}")
    return 0


def cmd_gen_toy(args: argparse.Namespace) -> int:
    cfg = ToyCorpusConfig(
        n_utterances=args.n_utterances,
        seed=args.seed,
        base_f0=args.base_f0,
        pitch_span=args.pitch_span,
        rate_base=args.rate_base,
        vibrato_per_sd=args.vibrato_per_sd,
        sample_rate=args.sample_rate,
    )
    out_dir = Path(args.out_dir)
    manifest_path, _ = generate_toy_corpus(cfg, out_dir)
    _write_config_echo(out_dir / "gen-toy.config.toml", "gen-toy", args)

    st = corpus_stats(manifest_path)
    print(f"utterances: {st['summary']['n']}")
    for name in ("mean_log_f0", "f0_std", "speech_rate"):
        s = st["summary"][name]
        print(f"{name}: mean {s['mean']:.4f}  std {s['std']:.4f}")
    print(f"manifest: {manifest_path}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise FileNotFoundError(f"missing manifest: {manifest_path}")
    vocabulary = _load_vocabulary(str(manifest_path.parent / VOCABULARY_NAME))
    examples = load_training_examples(manifest_path, vocabulary, MelConfig())

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / "model.ckpt"
    model = init_model(ModelConfig(vocab_size=len(vocabulary), seed=args.seed))
    train_cfg = TrainConfig(
        iterations=args.iterations,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        grad_clip=args.grad_clip,
        seed=args.seed,
        init_from=args.init_from,
        checkpoint_path=str(checkpoint_path),
        checkpoint_interval=args.checkpoint_interval,
    )
    trained, trace = train(model, examples, train_cfg)

    loss_path = out_dir / "loss.csv"
    with open(loss_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss"])
        start = trained.iteration - len(trace)
        for k, loss in enumerate(trace):
            writer.writerow([start + k + 1, repr(loss)])

    _write_config_echo(out_dir / "train.config.toml", "train", args)
    print(f"iterations: {len(trace)} (model at {trained.iteration})")
    if trace:
        print(f"first loss: {trace[0]:.6f}")
        print(f"final loss: {trace[-1]:.6f}")
    print(f"checkpoint: {checkpoint_path}")
    print(f"loss trace: {loss_path}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    vocabulary = _load_vocabulary(args.vocabulary)
    seq = tokenize(args.text, vocabulary)
    z = StandardizedFeatures(args.pitch, args.f0_std, args.rate)
    mel_config = MelConfig(n_mels=model.config.n_mels)
    result = synthesize(model, seq, z, args.max_frames, mel_config)
    buffer = griffin_lim(result.mel, iterations=args.gl_iterations)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_wav(out, buffer)
    np.save(out.with_suffix(".mel.npy"), result.mel.frames)
    with open(out.with_suffix(".align.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "state"])
        for t, state in enumerate(result.path.states):
            writer.writerow([t, int(state)])
    _write_config_echo(out.with_suffix(".config.toml"), "synth", args)

    print(f"frames: {result.mel.n_frames}")
    print(f"truncated: {result.truncated}")
    print(f"wav: {out}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    vocabulary = _load_vocabulary(args.vocabulary)
    standardizer = _load_standardizer(args.standardizer)
    texts = _read_texts_file(args.texts)
    grid = _parse_grid(args.grid)

    report = run_feature_sweep(
        model,
        texts,
        standardizer,
        args.feature,
        vocabulary,
        grid=grid,
        max_frames=args.max_frames,
        gl_iterations=args.gl_iterations,
        jobs=args.jobs,
    )
    accuracy = control_accuracy(report)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"sweep_{args.feature}.csv"
    json_path = out_dir / f"sweep_{args.feature}.json"
    write_sweep_csv(report, csv_path)
    write_sweep_json(report, json_path, accuracy)
    _write_config_echo(out_dir / "sweep.config.toml", "sweep", args)

    print(f"rows: {len(report.rows)}")
    print(f"spearman rho: {accuracy['spearman_rho']:.4f}")
    print(f"csv: {csv_path}")
    print(f"json: {json_path}")
    return 0


def cmd_creak_eval(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    vocabulary = _load_vocabulary(args.vocabulary)
    texts = _read_texts_file(args.texts)
    if args.presets:
        doc = json.loads(Path(args.presets).read_text(encoding="utf-8"))
        presets = {name: value for name, value in doc.items()}
    else:
        presets = DEFAULT_PRESETS

    result = creak_style_eval(
        model,
        texts,
        presets,
        vocabulary,
        max_frames=args.max_frames,
        gl_iterations=args.gl_iterations,
        alpha=args.alpha,
        jobs=args.jobs,
    )

    out_dir = Path(args.out_dir)
    _write_json(out_dir / "creak_eval.json", result)
    _write_config_echo(out_dir / "creak-eval.config.toml", "creak-eval", args)

    rows = [
        [name, f"{e['mean']:.1f} [{e['ci_lo']:.1f}, {e['ci_hi']:.1f}]"]
        for name, e in result["styles"].items()
    ]
    print(_format_table(["style", "creak % (mean [ci])"], rows))
    anova = result["anova"]
    print(
        f"ANOVA F({anova['df_between']}, {anova['df_within']}) = "
        f"{anova['F']:.4g}  p = {anova['p']:.4g}"
    )
    for pair in result["tukey"]:
        marker = "significant" if pair["significant"] else "ns"
        print(
            f"tukey {pair['group_a']} vs {pair['group_b']}: "
            f"diff = {pair['difference']:.2f}  p = {pair['p']:.4g}  {marker}"
        )
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir) if args.out_dir else None
    if args.stats_mode == "anova":
        res = one_way_anova(_read_groups_csv(args.groups))
        print(
            f"F({res['df_between']}, {res['df_within']}) = {res['F']:.6g}  "
            f"p = {res['p']:.6g}"
            + ("  (degenerate: zero within-group variance)" if res["degenerate"] else "")
        )
        doc = res
    elif args.stats_mode == "tukey":
        samples = _read_groups_csv(args.groups)
        pairs = tukey_hsd(samples, args.alpha)
        rows = [
            [
                p["group_a"],
                p["group_b"],
                f"{p['difference']:.6g}",
                f"{p['q']:.4g}",
                f"{p['p']:.4g}",
                "significant" if p["significant"] else "ns",
            ]
            for p in pairs
        ]
        print(_format_table(["group_a", "group_b", "diff", "q", "p", ""], rows))
        doc = {"alpha": args.alpha, "pairs": pairs}
    elif args.stats_mode == "ci":
        ratings = _read_ratings_csv(args.ratings)
        doc = {}
        rows = []
        for system in sorted(ratings):
            ci = mean_ci(ratings[system], args.level)
            doc[system] = {**ci, "n": len(ratings[system])}
            rows.append(
                [
                    system,
                    str(len(ratings[system])),
                    f"{ci['mean']:.2f} [{ci['lo']:.2f}, {ci['hi']:.2f}]",
                ]
            )
        print(_format_table(["system", "n", "mean [ci]"], rows))
    else:  # corpus
        st = corpus_stats(args.manifest)
        rows = [
            [
                name,
                f"{s['mean']:.4f}",
                f"{s['std']:.4f}",
                f"{s['q25']:.4f}",
                f"{s['median']:.4f}",
                f"{s['q75']:.4f}",
            ]
            for name, s in st["summary"].items()
            if name != "n"
        ]
        print(f"utterances: {st['summary']['n']}")
        print(_format_table(["feature", "mean", "std", "q25", "median", "q75"], rows))
        doc = st

    if out_dir is not None:
        _write_json(out_dir / f"stats_{args.stats_mode}.json", doc)
        _write_config_echo(out_dir / "stats.config.toml", "stats", args)
        print(f"json: {out_dir / f'stats_{args.stats_mode}.json'}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="prosohmm",
        description="Prosody-controllable neural HMM speech synthesis toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    registry = {}

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", help="TOML file; a [NAME] table supplies defaults")
        p.set_defaults(func=func, command=name)
        registry[name] = p
        return p

    p = add("prepare", cmd_prepare, help="segment recordings into a training manifest")
    p.add_argument("--recordings", nargs="+",
                   help="WAV paths; each needs a <stem>.txt transcript sidecar")
    p.add_argument("--out-dir")
    p.add_argument("--heldout-fraction", type=float, default=0.0,
                   help="0 keeps everything in the train split")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corpus-id", default="corpus")

    p = add("gen-toy", cmd_gen_toy, help="generate the synthetic toy corpus")
    p.add_argument("--out-dir")
    p.add_argument("--n-utterances", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--base-f0", type=float, default=120.0)
    p.add_argument("--pitch-span", type=float, default=0.15)
    p.add_argument("--rate-base", type=float, default=4.0)
    p.add_argument("--vibrato-per-sd", type=float, default=0.05)
    p.add_argument("--sample-rate", type=int, default=22050)

    p = add("train", cmd_train, help="train the acoustic model on a manifest")
    p.add_argument("--manifest")
    p.add_argument("--out-dir")
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--grad-clip", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-from", help="checkpoint to resume from")
    p.add_argument("--checkpoint-interval", type=int, default=0)

    p = add("synth", cmd_synth, help="synthesize one utterance to a WAV")
    p.add_argument("--checkpoint")
    p.add_argument("--vocabulary")
    p.add_argument("--text")
    p.add_argument("--pitch", type=float, default=0.0)
    p.add_argument("--f0-std", type=float, default=0.0)
    p.add_argument("--rate", type=float, default=0.0)
    p.add_argument("--out")
    p.add_argument("--max-frames", type=int, default=600)
    p.add_argument("--gl-iterations", type=int, default=60)

    p = add("sweep", cmd_sweep, help="sweep one control and re-measure the audio")
    p.add_argument("--checkpoint")
    p.add_argument("--vocabulary")
    p.add_argument("--standardizer")
    p.add_argument("--texts", help="file with one text per line")
    p.add_argument("--feature", choices=CONTROL_FEATURES)
    p.add_argument("--grid", default="-3,-2,-1,0,1,2,3")
    p.add_argument("--out-dir")
    p.add_argument("--max-frames", type=int, default=600)
    p.add_argument("--gl-iterations", type=int, default=60)
    p.add_argument("--jobs", type=int, default=1)

    p = add("creak-eval", cmd_creak_eval, help="compare creak across style presets")
    p.add_argument("--checkpoint")
    p.add_argument("--vocabulary")
    p.add_argument("--texts")
    p.add_argument("--out-dir")
    p.add_argument("--presets", help="JSON file: style name to z-vector or pair")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--max-frames", type=int, default=600)
    p.add_argument("--gl-iterations", type=int, default=60)
    p.add_argument("--jobs", type=int, default=1)

    p = add("stats", cmd_stats, help="ANOVA, Tukey, rating CIs, corpus summaries")
    p.add_argument("stats_mode", nargs="?", choices=("anova", "tukey", "ci", "corpus"))
    p.add_argument("--groups", help="CSV with header group,value")
    p.add_argument("--ratings", help="CSV with header system,rater_id,item_id,score")
    p.add_argument("--manifest", help="manifest for corpus summaries")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out-dir", help="where to write the JSON document")

    return parser, registry


def _required_input(args: argparse.Namespace) -> None:
    for name in _REQUIRED[args.command]:
        if getattr(args, name) in (None, []):
            flag = name.replace("_", "-")
            raise ValidationError(
                f"{args.command} requires --{flag} (flag or config)"
                if name != "stats_mode"
                else "stats requires a mode: anova, tukey, ci, or corpus"
            )
    if args.command == "stats":
        if args.stats_mode not in ("anova", "tukey", "ci", "corpus"):
            raise ValidationError(f"unknown stats mode {args.stats_mode!r}")
        needed = {"anova": "groups", "tukey": "groups", "ci": "ratings",
                  "corpus": "manifest"}[args.stats_mode]
        if getattr(args, needed) is None:
            raise ValidationError(f"stats {args.stats_mode} requires --{needed}")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, registry = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        if args.config:
            section = _load_config_section(args.config, args.command)
            known = {a.dest for a in registry[args.command]._actions}
            unknown = sorted(set(section) - known)
            if unknown:
                raise ValidationError(
                    f"{args.config}: unknown keys {unknown} for {args.command}"
                )
            registry[args.command].set_defaults(**section)
            try:
                args = parser.parse_args(argv)  # explicit flags still win
            except SystemExit as exc:
                return int(exc.code or 0)
        _required_input(args)
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
