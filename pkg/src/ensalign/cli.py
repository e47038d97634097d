"""Command-line orchestration: align, evaluate, train-ensemble, ci-table.

Per-file failures never abort a batch: the run continues, failures are
summarized, and the exit code is nonzero when anything failed. Outputs are
written atomically (temp file, then rename) and are byte-identical for
identical inputs, seeds, and flags regardless of the worker count.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import glob
import io
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import acoustic, aligner, ensemble, evaluation, lexicon, synth, textgrid
from .features import AudioBuffer, FeatureConfig, mfcc, read_wav

log = logging.getLogger("ensalign")


class CliError(ValueError):
    """Configuration problem that prevents the command from starting."""


@dataclass
class JobConfig:
    command: str = ""
    audio_dir: str | None = None
    text_dir: str | None = None
    dict: str | None = None
    models: str | None = None
    out_dir: str | None = None
    ref_dir: str | None = None
    hyp_dir: str | None = None
    in_dir: str | None = None
    rank: int = 2
    frame_advance_ms: float = 10.0
    workers: int = 1
    method: str = "auto"
    seed: int = 0
    variant_policy: str = "first"
    tier: str = "phones"
    members: int = 10
    epochs: int = 30
    learning_rate: float = 0.1
    batch_size: int = 32
    classes: str = "c0,c1,c2"
    frames_per_class: int = 200
    feature_dim: int = 39
    train_source: str = "gaussian"
    train_files: int = 20
    data_label: str = ""
    transcription_label: str = ""

    def validate(self) -> None:
        if self.rank < 1:
            raise CliError(f"--rank must be >= 1, got {self.rank}")
        if self.workers < 1:
            raise CliError(f"--workers must be >= 1, got {self.workers}")
        if self.frame_advance_ms <= 0:
            raise CliError("--frame-advance-ms must be positive")
        if self.method not in ("auto", "paired", "dtw"):
            raise CliError(f"--method must be paired|dtw|auto, got {self.method!r}")
        required = {
            "align": ["audio_dir", "text_dir", "dict", "models", "out_dir"],
            "evaluate": ["ref_dir", "hyp_dir", "out_dir"],
            "train-ensemble": ["out_dir"],
            "ci-table": ["in_dir", "out_dir"],
        }[self.command]
        for name in required:
            if getattr(self, name) is None:
                raise CliError(f"--{name.replace('_', '-')} is required for {self.command}")
        for name in ("audio_dir", "text_dir", "dict", "ref_dir", "hyp_dir", "in_dir"):
            value = getattr(self, name)
            if value is not None and not os.path.exists(value):
                raise CliError(f"--{name.replace('_', '-')}: no such path: {value}")
        if self.command == "train-ensemble" and self.members < 1:
            raise CliError(f"--members must be >= 1, got {self.members}")


def load_config_file(path: str) -> dict[str, str]:
    """Line-oriented `key = value` pairs; `#` starts a comment line."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise CliError(f"{path}:{lineno}: expected `key = value`, got {stripped!r}")
            key, value = stripped.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def build_job_config(args: argparse.Namespace) -> JobConfig:
    """Merge precedence: flags > config file > defaults."""
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    cfg = JobConfig(command=args.command)
    for field in dataclasses.fields(JobConfig):
        if field.name == "command":
            continue
        flag_value = getattr(args, field.name, None)
        if flag_value is not None:
            setattr(cfg, field.name, flag_value)
        elif field.name in file_values:
            raw = file_values[field.name]
            if field.name in ("rank", "workers", "seed", "members", "epochs", "batch_size",
                              "frames_per_class", "feature_dim", "train_files"):
                setattr(cfg, field.name, int(raw))
            elif field.name in ("frame_advance_ms", "learning_rate"):
                setattr(cfg, field.name, float(raw))
            else:
                setattr(cfg, field.name, raw)
    cfg.validate()
    return cfg


def _atomic_write(path: str, content: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _map_files(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def load_models(spec: str) -> list[acoustic.FrameClassifier]:
    """`spec` is a comma list of classifier files, one classifier file, or a
    manifest file with one `path<TAB>seed` entry per line."""
    parts = [p for p in spec.split(",") if p]
    if len(parts) > 1:
        return [acoustic.load_classifier(p) for p in parts]
    path = parts[0]
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
    if first == acoustic.CLASSIFIER_MAGIC:
        return [acoustic.load_classifier(path)]
    models = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            member_path = stripped.split("\t")[0]
            if not os.path.isabs(member_path):
                member_path = os.path.join(base, member_path)
            models.append(acoustic.load_classifier(member_path))
    if not models:
        raise CliError(f"manifest {path} lists no models")
    return models


def _word_boundaries(chosen, ea: ensemble.EnsembleAlignment) -> list[tuple[str, float]]:
    """End time of each token = median boundary of its last segment."""
    items = []
    pos = 0
    for token, pron in chosen:
        pos += len(pron)
        items.append((token, ea.median_s[pos - 1]))
    return items


def cmd_align(cfg: JobConfig) -> int:
    with open(cfg.dict, "r", encoding="utf-8") as f:
        lex = lexicon.parse_dictionary(f.read())
    models = load_models(cfg.models)
    inventory = models[0].inventory
    for i, model in enumerate(models[1:], start=1):
        if model.inventory.labels != inventory.labels:
            raise CliError(f"model {i} inventory differs from model 0")
    if len(models) < 2 * cfg.rank:
        log.warning(
            "%d model(s) cannot support rank-%d intervals; CI will be suppressed",
            len(models),
            cfg.rank,
        )
    feature_config = FeatureConfig(frame_advance_s=cfg.frame_advance_ms / 1000.0)
    os.makedirs(cfg.out_dir, exist_ok=True)

    wavs = sorted(glob.glob(os.path.join(cfg.audio_dir, "*.wav")))
    if not wavs:
        raise CliError(f"no .wav files in {cfg.audio_dir}")

    def one(wav_path: str):
        stem = os.path.splitext(os.path.basename(wav_path))[0]
        try:
            text_path = os.path.join(cfg.text_dir, stem + ".txt")
            if not os.path.exists(text_path):
                raise CliError(f"missing transcript {text_path}")
            with open(text_path, "r", encoding="utf-8") as f:
                transcript = lexicon.read_transcript(f.read(), source_id=stem)
            chosen = lexicon.choose_pronunciations(transcript, lex, cfg.variant_policy)
            labels = aligner.LabelSequence.marked(
                [seg for _, pron in chosen for seg in pron]
            )
            audio = read_wav(wav_path)
            feats = mfcc(audio, feature_config)
            member_alignments = [
                aligner.align(acoustic.score_frames(model, feats), labels, source_id=stem)
                for model in models
            ]
            ea = ensemble.aggregate(member_alignments, rank=cfg.rank)
            grid = textgrid.render(
                ea, words=_word_boundaries(chosen, ea), file_range=(0.0, audio.duration_s)
            )
            _atomic_write(
                os.path.join(cfg.out_dir, stem + ".TextGrid"), textgrid.format_textgrid(grid)
            )
            buf = io.StringIO()
            ensemble.write_ci_csv(ea, buf)
            _atomic_write(os.path.join(cfg.out_dir, stem + "_ci.csv"), buf.getvalue())
            return stem, None
        except Exception as exc:  # per-file isolation: keep the batch going
            return stem, f"{type(exc).__name__}: {exc}"

    results = _map_files(one, wavs, cfg.workers)
    failures = [(stem, err) for stem, err in results if err is not None]
    for stem, err in failures:
        log.error("%s: %s", stem, err)
    print(f"aligned {len(results) - len(failures)}/{len(results)} file(s)")
    if failures:
        print("failed: " + ", ".join(stem for stem, _ in failures))
    return 1 if failures else 0


def _grids_by_stem(directory: str) -> dict[str, str]:
    paths = {}
    for pattern in ("*.TextGrid", "*.textgrid"):
        for path in glob.glob(os.path.join(directory, pattern)):
            paths[os.path.splitext(os.path.basename(path))[0]] = path
    return paths


def cmd_evaluate(cfg: JobConfig) -> int:
    refs = _grids_by_stem(cfg.ref_dir)
    if not refs:
        raise CliError(f"empty reference set: no TextGrids in {cfg.ref_dir}")
    hyps = _grids_by_stem(cfg.hyp_dir)
    for path in glob.glob(os.path.join(cfg.hyp_dir, "*.csv")):
        stem = os.path.splitext(os.path.basename(path))[0]
        if stem.endswith("_ci"):
            continue
        hyps.setdefault(stem, path)
    os.makedirs(cfg.out_dir, exist_ok=True)

    pairs = []
    failures = []
    for stem in sorted(refs):
        try:
            if stem not in hyps:
                raise CliError(f"no hypothesis for {stem}")
            ref_grid = textgrid.read_textgrid(refs[stem])
            ref_tier = ref_grid.get_tier(cfg.tier)
            ref_seq = evaluation.boundary_seq_from_tier(ref_tier, source_id=stem)
            hyp_path = hyps[stem]
            if hyp_path.endswith(".csv"):
                with open(hyp_path, "r", encoding="utf-8") as f:
                    alignment = aligner.read_alignment_csv(f.read())
                hyp_seq = evaluation.BoundarySeq(alignment.end_times_s, source_id=stem)
            else:
                hyp_grid = textgrid.read_textgrid(hyp_path)
                hyp_seq = evaluation.boundary_seq_from_tier(
                    hyp_grid.get_tier(cfg.tier), source_id=stem
                )
            pairs.append(evaluation.EvalPair(ref_seq, hyp_seq))
        except Exception as exc:
            failures.append((stem, f"{type(exc).__name__}: {exc}"))

    pairs = evaluation.exclude_single_segment(pairs)
    file_errors = []
    for pair in pairs:
        try:
            file_errors.append(evaluation.evaluate_pair(pair, method=cfg.method))
        except Exception as exc:
            failures.append((pair.source_id, f"{type(exc).__name__}: {exc}"))

    for stem, err in failures:
        log.error("%s: %s", stem, err)
    if not file_errors:
        print("evaluated 0 file(s)")
        return 1
    report = evaluation.adjusted(file_errors)
    row = evaluation.ReportRow.from_report(
        report, data=cfg.data_label, transcription=cfg.transcription_label, method=cfg.method
    )
    buf = io.StringIO()
    evaluation.write_error_report_csv(buf, [row])
    _atomic_write(os.path.join(cfg.out_dir, "error_report.csv"), buf.getvalue())
    print(
        f"evaluated {report.file_count} file(s), {report.boundary_count} boundaries: "
        f"mean {row.mean_abs_err_ms:.2f} ms, median {row.median_abs_err_ms:.2f} ms"
        + (
            f", adj mean {row.adj_mean_abs_err_ms:.2f} ms, adj median {row.adj_median_abs_err_ms:.2f} ms"
            if row.adj_mean_abs_err_ms is not None
            else " (no boundaries left after adjustment)"
        )
    )
    return 1 if failures else 0


def cmd_train_ensemble(cfg: JobConfig) -> int:
    if cfg.train_source == "gaussian":
        names = tuple(name for name in cfg.classes.split(",") if name)
        inventory = acoustic.ClassInventory(names)
        if len(inventory) < 2:
            raise CliError("need at least 2 class names in --classes")
        features, labels = acoustic.synthetic_frame_data(
            inventory, cfg.frames_per_class, n_features=cfg.feature_dim, seed=cfg.seed
        )
    elif cfg.train_source == "synth-audio":
        inventory = synth.default_inventory()
        feature_config = FeatureConfig(frame_advance_s=cfg.frame_advance_ms / 1000.0)
        utterances = synth.build_corpus(cfg.train_files, seed=cfg.seed)
        blocks, label_blocks = [], []
        for utt in utterances:
            feats = mfcc(AudioBuffer(utt.samples, utt.sample_rate), feature_config)
            blocks.append(feats.frames)
            label_blocks.append(synth.frame_labels(utt, feats.n_frames, inventory, feature_config))
        features = np.vstack(blocks)
        labels = np.concatenate(label_blocks)
    else:
        raise CliError(f"--train-source must be gaussian|synth-audio, got {cfg.train_source!r}")

    seeds = list(range(cfg.seed, cfg.seed + cfg.members))
    models = acoustic.make_ensemble(
        features,
        labels,
        inventory,
        seeds=seeds,
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
    )
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest_lines = []
    for i, (model, seed) in enumerate(zip(models, seeds)):
        name = f"member_{i:02d}.classifier"
        _atomic_write(os.path.join(cfg.out_dir, name), acoustic.format_classifier(model))
        manifest_lines.append(f"{name}\t{seed}")
    _atomic_write(os.path.join(cfg.out_dir, "ensemble.manifest"), "\n".join(manifest_lines) + "\n")
    print(f"trained {len(models)} model(s) into {cfg.out_dir}")
    return 0


def cmd_ci_table(cfg: JobConfig) -> int:
    paths = sorted(glob.glob(os.path.join(cfg.in_dir, "*_ci.csv")))
    if not paths:
        raise CliError(f"no *_ci.csv files in {cfg.in_dir}")
    os.makedirs(cfg.out_dir, exist_ok=True)
    rows = []
    widths_s = []
    for path in paths:
        with open(path, "r", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader)
            for row in reader:
                rows.append(row)
                if row[-1]:
                    widths_s.append(float(row[-1]))
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        ["source_id", "boundary_index", "label", "median_s", "ci_lo_s", "ci_hi_s", "width_s"]
    )
    writer.writerows(rows)
    _atomic_write(os.path.join(cfg.out_dir, "ci_table.csv"), buf.getvalue())

    if widths_s:
        arr = np.asarray(widths_s) * 1000.0
        mean_ms, median_ms = float(np.mean(arr)), float(np.median(arr))
        buf = io.StringIO()
        evaluation.write_ci_width_csv(
            buf, [(cfg.data_label, cfg.transcription_label, mean_ms, median_ms)]
        )
        _atomic_write(os.path.join(cfg.out_dir, "ci_widths.csv"), buf.getvalue())
        print(
            f"{len(rows)} boundaries from {len(paths)} file(s): "
            f"mean width {mean_ms:.2f} ms, median width {median_ms:.2f} ms"
        )
    else:
        print(f"{len(rows)} boundaries from {len(paths)} file(s); no intervals present")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ensalign",
        description="Ensemble forced alignment with confidence intervals on boundaries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key = value config file; flags take precedence")
        p.add_argument("--out-dir", help="output directory")
        p.add_argument("--workers", type=int, help="worker threads (default 1)")
        p.add_argument("--seed", type=int, help="base random seed (default 0)")

    p_align = sub.add_parser("align", help="align audio files against transcripts")
    add_common(p_align)
    p_align.add_argument("--audio-dir", help="directory of mono 16-bit PCM .wav files")
    p_align.add_argument("--text-dir", help="directory of .txt transcripts (same stems)")
    p_align.add_argument("--dict", help="CMU-format pronunciation dictionary")
    p_align.add_argument("--models", help="comma list of classifier files or a manifest")
    p_align.add_argument("--rank", type=int, help="CI order-statistic rank (default 2)")
    p_align.add_argument("--frame-advance-ms", type=float, help="frame advance (default 10)")
    p_align.add_argument("--variant-policy", choices=["first", "index-selected"])

    p_eval = sub.add_parser("evaluate", help="boundary error between reference and hypothesis")
    add_common(p_eval)
    p_eval.add_argument("--ref-dir", help="reference TextGrids")
    p_eval.add_argument("--hyp-dir", help="hypothesis TextGrids or alignment CSVs")
    p_eval.add_argument("--method", choices=["paired", "dtw", "auto"])
    p_eval.add_argument("--tier", help="segment tier name (default phones)")
    p_eval.add_argument("--data-label", help="report column: data split label")
    p_eval.add_argument("--transcription-label", help="report column: transcription source")

    p_train = sub.add_parser("train-ensemble", help="train reference classifiers")
    add_common(p_train)
    p_train.add_argument("--members", type=int, help="ensemble size (default 10)")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--learning-rate", type=float)
    p_train.add_argument("--batch-size", type=int)
    p_train.add_argument("--classes", help="comma list of class names (gaussian source)")
    p_train.add_argument("--frames-per-class", type=int)
    p_train.add_argument("--feature-dim", type=int)
    p_train.add_argument("--train-source", choices=["gaussian", "synth-audio"])
    p_train.add_argument("--train-files", type=int, help="utterances for synth-audio source")
    p_train.add_argument("--frame-advance-ms", type=float)

    p_table = sub.add_parser("ci-table", help="pool per-file CI tables and width stats")
    add_common(p_table)
    p_table.add_argument("--in-dir", help="directory holding *_ci.csv files")
    p_table.add_argument("--data-label")
    p_table.add_argument("--transcription-label")
    return parser


COMMANDS = {
    "align": cmd_align,
    "evaluate": cmd_evaluate,
    "train-ensemble": cmd_train_ensemble,
    "ci-table": cmd_ci_table,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = build_job_config(args)
        return COMMANDS[cfg.command](cfg)
    except CliError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
