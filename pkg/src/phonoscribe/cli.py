"""Command-line entry point.

Commands mirror the corpus workflow: filter a manifest, fetch audio,
featurize, train, evaluate, transcribe single files, list suspect samples.
Machine-readable output goes to stdout (TSV lines or JSON), diagnostics to
stderr. Exit codes: 0 success, 1 operational failure, 2 usage or parse
error. A JSON config file can preset training options; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis, corpus, dsp, training
from .ipa import INVENTORY

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def cmd_filter(args) -> int:
    try:
        pages = corpus.parse_manifest(args.manifest)
    except (corpus.MalformedRowError, corpus.ManifestIoError) as e:
        _err(f"manifest error: {e}")
        return EXIT_USAGE
    samples, stats = corpus.filter_samples(pages)
    corpus.write_samples_csv(args.out, samples)
    stats_dict = {
        "input_count": stats.input_count,
        "kept_count": stats.kept_count,
        "rejected_by_rule": stats.rejected_by_rule,
    }
    if args.stats:
        with open(args.stats, "w", encoding="utf-8") as f:
            json.dump(stats_dict, f, indent=2, sort_keys=True)
    print(json.dumps(stats_dict, sort_keys=True))
    return EXIT_OK


def cmd_fetch(args) -> int:
    samples = corpus.read_samples_csv(args.samples)
    fetcher = corpus.Fetcher(min_interval=args.rate_limit)
    cache = Path(args.cache)
    failures = []
    seen = set()
    for sample in samples:
        name = sample.audio_filename
        if name in seen:
            continue
        seen.add(name)
        if (cache / name).exists():
            print(f"CACHED\t{name}")
            continue
        url = corpus.resolve_media_url(name)
        try:
            fetcher.fetch(url, cache, filename=name)
        except Exception as e:
            print(f"FAIL\t{name}\t{e}")
            failures.append({"filename": name, "url": url, "error": str(e)})
            continue
        print(f"OK\t{name}")
    if failures:
        with open(cache / "failures.json", "w", encoding="utf-8") as f:
            json.dump(failures, f, indent=2, sort_keys=True)
        _err(f"{len(failures)} download(s) failed")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_featurize(args) -> int:
    file_config = _load_config_file(args.config)
    feature_config = dsp.FeatureConfig(**file_config.get("features", {}))
    samples = corpus.read_samples_csv(args.samples)
    cache = Path(args.cache)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    matrices = []
    for sample in samples:
        wav_path = cache / sample.audio_filename
        clip = dsp.decode_wav(wav_path.read_bytes())
        clip = dsp.resample(clip, feature_config.sample_rate)
        clip = dsp.fix_length(clip, feature_config.clip_seconds)
        features = dsp.mfcc(clip, feature_config)
        dsp.save_features(out_dir / f"{sample.audio_filename}.phfm", features)
        matrices.append(features)
        print(f"{sample.audio_filename}\t{features.shape[0]}x{features.shape[1]}")

    if args.norm == "compute":
        norm = dsp.compute_norm(matrices)
    else:
        norm_settings = file_config.get("norm")
        norm = dsp.FeatureNorm(**norm_settings) if norm_settings else dsp.DEFAULT_NORM
    with open(out_dir / "norm.json", "w", encoding="utf-8") as f:
        json.dump({"mean": norm.mean, "std": norm.std}, f, sort_keys=True)
    _err(f"featurized {len(matrices)} file(s); norm mean={norm.mean} std={norm.std}")
    return EXIT_OK


def load_featurized(samples_csv, features_dir) -> list[training.FeaturizedSample]:
    """Join the kept-samples CSV with its feature files."""
    samples = corpus.read_samples_csv(samples_csv)
    features_dir = Path(features_dir)
    out = []
    for s in samples:
        features = dsp.load_features(features_dir / f"{s.audio_filename}.phfm")
        out.append(training.FeaturizedSample(
            word=s.word,
            audio_filename=s.audio_filename,
            label=[p.id for p in s.ipa],
            features=features,
        ))
    return out


def _build_train_config(args) -> training.TrainConfig:
    file_config = _load_config_file(args.config)
    settings = dict(file_config.get("train", {}))
    if "model" in file_config:
        settings["model"] = file_config["model"]
    if "norm" in file_config:
        settings["norm"] = file_config["norm"]
    if "features" in file_config:
        settings["features"] = file_config["features"]

    norm_path = Path(args.features) / "norm.json"
    if "norm" not in settings and norm_path.exists():
        with open(norm_path, "r", encoding="utf-8") as f:
            settings["norm"] = json.load(f)

    for flag in ("batch_size", "epochs", "eval_batches", "seed", "lr"):
        value = getattr(args, flag)
        if value is not None:
            settings[flag] = value
    if args.stop_at_accuracy is not None:
        settings["stop_at_eval_accuracy"] = args.stop_at_accuracy
    return training.TrainConfig.from_dict(settings)


def cmd_train(args) -> int:
    config = _build_train_config(args)
    samples = load_featurized(args.samples, args.features)
    resume = training.Checkpoint.load(args.resume) if args.resume else None
    _, metrics = training.train_run(
        samples, config, run_dir=args.run_dir, resume_from=resume,
        on_epoch=lambda entry: print(entry.to_json_line(), flush=True),
    )
    _err(f"trained {len(metrics.epochs)} epoch(s) "
         f"in {metrics.wall_time_seconds:.1f}s; run dir: {args.run_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    checkpoint = training.Checkpoint.load(args.checkpoint)
    samples = load_featurized(args.samples, args.features)
    model = checkpoint.build_model()
    pairs = []
    for s in samples:
        ids = training.predict_ids(model, s.features, checkpoint.config.norm)
        pairs.append(analysis.PredictionPair.build(
            word=s.word,
            audio_filename=s.audio_filename,
            target=[INVENTORY[i] for i in s.label],
            predicted=[INVENTORY[i] for i in ids],
        ))
    report = analysis.build_report(pairs)
    analysis.write_report_bundle(args.report_dir, report)
    print(json.dumps({
        "samples": report.sample_count,
        "exact_match_accuracy": report.exact_match_accuracy,
        "distance_mean": report.distance_mean,
        "distance_std": report.distance_std,
    }, sort_keys=True))
    return EXIT_OK


def cmd_infer(args) -> int:
    checkpoint = training.Checkpoint.load(args.checkpoint)
    failed = False
    for wav in args.wavfiles:
        try:
            _, ipa_text = training.infer(checkpoint, wav)
        except training.StageError as e:
            _err(f"{wav}\t{e}")
            failed = True
            continue
        print(f"{wav}\t{ipa_text}")
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_suspects(args) -> int:
    with open(Path(args.report_dir) / "report.json", "r", encoding="utf-8") as f:
        report = json.load(f)
    rows = report["suspects"]
    if args.min_distance is not None:
        rows = [r for r in rows if r["distance"] >= args.min_distance]
    if args.top is not None:
        rows = rows[:args.top]
    for r in rows:
        print(f"{r['word']}\t{r['target_ipa']}\t{r['predicted_ipa']}"
              f"\t{r['distance']}")
    return EXIT_OK


def cmd_inventory(args) -> int:
    for p in INVENTORY:
        codepoints = " ".join(f"U+{ord(c):04X}" for c in p.symbol)
        print(f"{p.id}\t{p.symbol}\t{codepoints}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phonoscribe",
        description="Transcribe single-word audio to IPA and audit corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="apply corpus restriction rules")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="kept-samples CSV")
    p.add_argument("--stats", help="filter statistics JSON")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("fetch", help="download missing audio files")
    p.add_argument("--samples", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--rate-limit", type=float, default=0.0,
                   help="minimum seconds between requests")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("featurize", help="compute MFCC feature files")
    p.add_argument("--samples", required=True)
    p.add_argument("--cache", required=True, help="directory with WAV files")
    p.add_argument("--out", required=True, help="feature output directory")
    p.add_argument("--norm", choices=["compute", "use"], default="compute",
                   help="recompute standardization constants or use preset ones")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--features", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--eval-batches", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--stop-at-accuracy", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint and write reports")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--report-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="transcribe WAV files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("wavfiles", nargs="+")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("suspects", help="list highest-distance samples")
    p.add_argument("--report-dir", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--min-distance", type=int)
    group.add_argument("--top", type=int)
    p.set_defaults(func=cmd_suspects)

    p = sub.add_parser("inventory", help="print the phoneme inventory table")
    p.set_defaults(func=cmd_inventory)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as e:
        _err(f"error: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
