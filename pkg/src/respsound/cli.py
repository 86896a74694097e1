"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or model error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from datetime import date, datetime
from pathlib import Path

from respsound import __version__
from respsound.audio_io import PIPELINE_RATE, load_dataset_records, load_manifest, load_wav, resample
from respsound.dataset import FeatureDataset, read_feature_csv
from respsound.errors import DataError, MissingFeatureError
from respsound.features import FEATURE_NAMES, extract, write_feature_csv
from respsound.models import ClassifierConfig, load_model, predict, save_model, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("respsound")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _names(text: str | None) -> list[str] | None:
    if text is None:
        return None
    names = [t.strip() for t in text.split(",") if t.strip()]
    if not names:
        raise UsageError("empty name list")
    return names


def _add_model_flags(p):
    p.add_argument("--model", dest="kind", choices=["knn", "svm", "rf"], help="classifier kind (default rf)")
    p.add_argument("--k", type=int, help="neighbors for knn (default 1)")
    p.add_argument("--c", type=float, help="complexity parameter for svm (default 1.0)")
    p.add_argument("--trees", type=int, help="trees for rf (default 100)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--features", help="comma-separated feature names (default: all 12)")


def _config(args) -> ClassifierConfig:
    kind = (args.kind or "rf").upper()
    given = {"k": args.k, "C": args.c, "n_trees": args.trees}
    relevant = {"KNN": "k", "SVM": "C", "RF": "n_trees"}[kind]
    stray = [k for k, v in given.items() if v is not None and k != relevant]
    if stray:
        flag = {"k": "--k", "C": "--c", "n_trees": "--trees"}
        raise UsageError(f"{', '.join(flag[s] for s in stray)} not valid with --model {kind.lower()}")
    cfg = dict(kind=kind, seed=args.seed)
    cfg.update({k: v for k, v in given.items() if v is not None})
    return ClassifierConfig(**cfg)


def _config_from_file(path) -> ClassifierConfig:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    known = {f.name for f in fields(ClassifierConfig)}
    unknown = set(raw) - known
    if unknown:
        raise DataError(f"unknown model-config keys: {sorted(unknown)}")
    return ClassifierConfig(**raw)


def _load_features(path, features=None, classes=None) -> FeatureDataset:
    data = read_feature_csv(path)
    if features:
        data = data.select_features(features)
    if classes:
        data = data.filter_classes(classes)
    return data


# ---------------------------------------------------------------- subcommands

def cmd_features(args):
    manifest = load_manifest(args.manifest)
    records = load_dataset_records(manifest)
    vectors = []
    for rec in records:
        vectors.extend(extract(rec, window_seconds=manifest.segment_seconds))
    kept = [v for v in vectors if not v.degenerate]
    if len(kept) < len(vectors):
        log.warning("dropped %d degenerate (silent) windows", len(vectors) - len(kept))
    write_feature_csv(args.out, kept)
    print(f"wrote {len(kept)} windows from {len(manifest.entries)} files to {args.out}")
    return EXIT_OK


def cmd_select(args):
    from respsound.selection import cfs_select, pca_rank

    data = read_feature_csv(args.features_csv)
    result = cfs_select(data) if args.method == "cfs" else pca_rank(data)
    print(result.report())
    return EXIT_OK


def cmd_train(args):
    config = _config(args)
    data = _load_features(args.features_csv, _names(args.features))
    model = train(data, config)
    save_model(model, args.out)
    print(f"trained {config.describe()} on {len(data)} instances, {data.n_features} features -> {args.out}")
    return EXIT_OK


def cmd_eval(args):
    from respsound.evaluation import cross_validate

    if args.model_config and any(v is not None for v in (args.kind, args.k, args.c, args.trees)):
        raise UsageError("--model-config cannot be combined with --model/--k/--c/--trees")
    config = _config_from_file(args.model_config) if args.model_config else _config(args)
    data = _load_features(args.features_csv, _names(args.features), _names(args.classes))
    folds = len(data) if args.loo else args.folds
    report = cross_validate(data, config, folds=folds, seed=args.seed)
    print(report.table())
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    if args.folds_out:
        Path(args.folds_out).write_text(
            "index,fold\n" + "".join(f"{i},{f}\n" for i, f in enumerate(report.folds)), encoding="utf-8"
        )
    return EXIT_OK


def cmd_classify(args):
    model = load_model(args.model)
    missing = [n for n in model.feature_names if n not in FEATURE_NAMES]
    if missing:
        raise MissingFeatureError(missing)
    rec = resample(load_wav(args.wav), PIPELINE_RATE)
    vectors = extract(rec, window_seconds=args.window)
    width = max(len(c) for c in model.label_catalog)
    print("window  " + f"{'label':<{width}}  " + "  ".join(f"{c:>{max(6, len(c))}}" for c in model.label_catalog))
    for v in vectors:
        if v.degenerate:
            print(f"{v.window_index:6d}  {'-':<{width}}  (silent window)")
            continue
        p = predict(model, v)
        print(
            f"{v.window_index:6d}  {p.label:<{width}}  "
            + "  ".join(f"{p.scores[c]:>{max(6, len(c))}.3f}" for c in model.label_catalog)
        )
    return EXIT_OK


def cmd_stream(args):
    from respsound.runtime import ContextSource, EventStore, StreamClassifier, WavSource, format_event

    model = load_model(args.model)
    source = WavSource(sys.stdin.buffer if args.wav == "-" else args.wav)
    context = ContextSource.from_csv(args.context) if args.context else None
    start = datetime.fromisoformat(args.start) if args.start else None
    store = EventStore(args.store)
    runner = StreamClassifier(source, model, context, gate=args.gate, start=start, window_seconds=args.window)
    n = 0
    for detection in runner.run():
        store.append(detection.event)
        print(format_event(detection.event))
        n += 1
    if runner.diagnostic:
        print(f"stream ended: {runner.diagnostic}", file=sys.stderr)
    print(f"{n} events appended to {args.store}", file=sys.stderr)
    return EXIT_OK


def cmd_report(args):
    from respsound.runtime import EventStore, daily_report

    if not Path(args.store).is_file():
        raise FileNotFoundError(f"no such event store: {args.store}")
    try:
        day = date.fromisoformat(args.date)
    except ValueError:
        raise UsageError(f"--date must be YYYY-MM-DD, got {args.date!r}") from None
    summary = daily_report(EventStore(args.store), day)
    print(summary.to_text())
    if args.csv:
        Path(args.csv).write_text(summary.to_csv(), encoding="utf-8")
    else:
        print()
        print(summary.to_csv(), end="")
    return EXIT_OK


def cmd_synth(args):
    from respsound.synth import CorpusSpec, write_corpus

    spec = CorpusSpec.from_json(args.spec) if args.spec else CorpusSpec()
    if args.seed is not None:
        spec = CorpusSpec(spec.counts, spec.segment_seconds, spec.snr_db, args.seed)
    manifest = write_corpus(spec, args.out)
    print(f"wrote {sum(spec.counts.values())} records; manifest {manifest}")
    return EXIT_OK


def cmd_bench(args):
    from respsound.runtime import bench_pipeline

    model = load_model(args.model)
    timings = bench_pipeline(load_wav(args.wav), model, args.reps, window_seconds=args.window)
    print(timings.report())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="respsound", description="Respiratory sound classification toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("features", help="manifest -> window feature CSV")
    s.add_argument("manifest")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("select", help="rank features by CFS or PCA")
    s.add_argument("features_csv")
    s.add_argument("--method", choices=["cfs", "pca"], default="cfs")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("train", help="train a classifier and save it")
    s.add_argument("features_csv")
    _add_model_flags(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="stratified k-fold cross-validation report")
    s.add_argument("features_csv")
    _add_model_flags(s)
    s.add_argument("--model-config", help="JSON file with kind/k/C/n_trees/seed (instead of model flags)")
    s.add_argument("--folds", type=int, default=10)
    s.add_argument("--loo", action="store_true", help="leave-one-out (one fold per instance)")
    s.add_argument("--classes", help="comma-separated subset of classes")
    s.add_argument("--csv", help="also write the report as CSV")
    s.add_argument("--folds-out", help="write the fold assignment as CSV")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("classify", help="per-window labels for one WAV")
    s.add_argument("wav")
    s.add_argument("--model", required=True)
    s.add_argument("--window", type=float, default=5.0, help="analysis window in seconds")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("stream", help="run the real-time pipeline over a WAV ('-' = stdin)")
    s.add_argument("wav")
    s.add_argument("--model", required=True)
    s.add_argument("--context", help="CSV: seconds,activity,humidity,temperature_c")
    s.add_argument("--gate", type=float, default=1e-4, help="meanRMS activity gate")
    s.add_argument("--store", required=True)
    s.add_argument("--start", help="ISO timestamp of the first sample (default: now)")
    s.add_argument("--window", type=float, default=5.0)
    s.set_defaults(func=cmd_stream)

    s = sub.add_parser("report", help="daily symptom summary from an event store")
    s.add_argument("store")
    s.add_argument("--date", required=True)
    s.add_argument("--csv", help="write CSV here instead of stdout")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("synth", help="write a synthetic corpus + manifest")
    s.add_argument("--spec", help="JSON corpus spec (counts, segment_seconds, snr_db, seed)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("bench", help="per-stage latency of the pipeline")
    s.add_argument("wav")
    s.add_argument("--model", required=True)
    s.add_argument("--reps", type=int, default=10)
    s.add_argument("--window", type=float, default=5.0)
    s.set_defaults(func=cmd_bench)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
