"""Command-line entry points.

Batch commands drive the core package directly; `stream` launches the
scoring service (HTTP + WebSocket, plus a newline-delimited JSON TCP
listener). Artifacts are written atomically (temp file then rename) and
all randomness flows from `--seed`, which is recorded in every artifact.

A `--config FILE` (TOML key/value, keys matching long option names)
fills defaults for any flag not given explicitly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return {k.replace("-", "_"): v for k, v in doc.items()}


def _ten_seconds(rec):
    from .audio import TARGET_FS, resample_to_4k, segment_10s

    if rec.fs != TARGET_FS:
        rec = resample_to_4k(rec)
    if len(rec.samples) < 10 * TARGET_FS:
        raise ValueError(f"{rec.recording_id}: shorter than 10 s")
    return segment_10s(rec, 0.0)


def _extract_manifest(manifest, mode: str, jobs: int, zero_phase: bool = True):
    """(ids, matrix, labels, patients, targets) over manifest entries."""
    from .audio import load_wav
    from .features import extract

    entries = manifest.entries

    def one(entry):
        rec = load_wav(entry.path, patient_id=entry.patient_id,
                       recording_id=entry.recording_id)
        fv = extract(_ten_seconds(rec), mode=mode, zero_phase=zero_phase)
        return fv.values

    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_extract_entry, [
                (e.path, e.patient_id, e.recording_id, mode, zero_phase)
                for e in entries
            ]))
    else:
        rows = [one(e) for e in entries]
    ids = [e.recording_id for e in entries]
    labels = np.array([e.label if e.label is not None else -1 for e in entries])
    patients = np.array([e.patient_id for e in entries])
    targets = np.array([e.target for e in entries])
    return ids, np.asarray(rows), labels, patients, targets


def _extract_entry(args):
    path, patient_id, recording_id, mode, zero_phase = args
    from .audio import load_wav
    from .features import extract

    rec = load_wav(path, patient_id=patient_id, recording_id=recording_id)
    return extract(_ten_seconds(rec), mode=mode, zero_phase=zero_phase).values


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    from .audio import DatasetManifest, ManifestEntry, write_manifest
    from .annotations import panel_labels, read_annotation_csv

    wav_dir = Path(args.wav_dir)
    wavs = sorted(wav_dir.glob("*.wav"))
    if not wavs:
        print(f"error: no .wav files under {wav_dir}", file=sys.stderr)
        return 1
    patient_map = {}
    if args.patient_map:
        import csv as _csv

        with open(args.patient_map, newline="", encoding="utf-8") as fh:
            for row in _csv.DictReader(fh):
                patient_map[row["recording_id"]] = row["patient_id"]
    labels = {}
    if args.annotations:
        labels = panel_labels(read_annotation_csv(args.annotations))
    entries = [
        ManifestEntry(
            recording_id=p.stem,
            patient_id=patient_map.get(p.stem, p.stem),
            path=str(p),
            target=args.target,
            label=labels.get(p.stem),
        )
        for p in wavs
    ]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_manifest(out, DatasetManifest(entries))
    print(f"wrote {out} ({len(entries)} entries)")
    return 0


def cmd_features(args) -> int:
    from .audio import read_manifest
    from .features import feature_names, save_feature_cache, write_features_csv, FeatureVector

    manifest = read_manifest(args.manifest)
    if args.server:
        ids, rows = _features_via_server(manifest, args.mode, args.server)
    else:
        ids, rows, *_ = _extract_manifest(manifest, args.mode, args.jobs,
                                          zero_phase=not args.causal)
    out = Path(args.out)
    vectors = [
        FeatureVector(recording_id=i, values=v, flagged_ids=[], family_times_ms={},
                      mode=args.mode)
        for i, v in zip(ids, rows)
    ]
    out.parent.mkdir(parents=True, exist_ok=True)
    write_features_csv(out, vectors)
    if args.cache:
        save_feature_cache(args.cache, ids, rows)
    print(f"wrote {out} ({len(ids)} x {len(feature_names())})")
    return 0


def _features_via_server(manifest, mode: str, server: str):
    import httpx

    from .audio import load_wav
    from .service.schemas import encode_pcm

    ids, rows = [], []
    with httpx.Client(base_url=server, timeout=120.0) as client:
        for e in manifest.entries:
            rec = _ten_seconds(load_wav(e.path, recording_id=e.recording_id))
            resp = client.post("/features", json={
                "fs": rec.fs, "pcm": encode_pcm(rec.samples), "mode": mode,
            })
            resp.raise_for_status()
            doc = resp.json()
            ids.append(e.recording_id)
            rows.append([np.nan if v is None else v for v in doc["values"]])
    return ids, np.asarray(rows)


def cmd_annotate_stats(args) -> int:
    from .annotations import agreement_report, read_annotation_csv

    panel = read_annotation_csv(args.annotations)
    report = agreement_report(panel, threshold=args.threshold)
    _atomic_write(Path(args.out), json.dumps(report, indent=1, sort_keys=True))
    print(f"kappa={report['kappa']:.4f} removed={report['removed']} -> {args.out}")
    return 0


def cmd_train(args) -> int:
    from .audio import read_manifest
    from .features import load_feature_cache
    from .training import crossval_eval, save_model, train_quality_model

    manifest = read_manifest(args.manifest)
    keep = [e for e in manifest.entries if e.target == args.target and e.label]
    if not keep:
        print(f"error: no labeled {args.target} entries in manifest", file=sys.stderr)
        return 1
    if args.features_cache:
        cached_ids, matrix = load_feature_cache(args.features_cache)
        index = {rid: k for k, rid in enumerate(cached_ids)}
        missing = [e.recording_id for e in keep if e.recording_id not in index]
        if missing:
            print(f"error: cache missing {len(missing)} recordings", file=sys.stderr)
            return 1
        X = matrix[[index[e.recording_id] for e in keep]]
    else:
        sub = type(manifest)([e for e in keep])
        _, X, *_ = _extract_manifest(sub, args.mode, args.jobs,
                                     zero_phase=not args.causal)
    y = np.array([e.label for e in keep])
    patients = np.array([e.patient_id for e in keep])
    X = np.nan_to_num(X, nan=0.0)

    families = tuple(args.families.split(",")) if args.families else None
    kwargs = {"families": families} if families else {}
    model, results = train_quality_model(
        X, y, patients, args.target, mode=args.mode, seed=args.seed,
        n_splits=args.splits, **kwargs,
    )
    model.metadata["filtering"] = "causal" if args.causal else "zero_phase"
    report, _ = crossval_eval(X, y, patients, model, seed=args.seed, n_splits=args.splits)
    out = Path(args.out)
    _atomic_write(out, json.dumps(model.to_json(), indent=1, sort_keys=True))
    _atomic_write(out.with_suffix(".eval.json"),
                  json.dumps(report.to_json(), indent=1, sort_keys=True))
    print(
        f"{args.target} {args.mode}: family={model.metadata['family']} "
        f"grid_cv_mse={model.metadata['cv_mse']:.3f} outer_cv_mse={report.mse:.3f} "
        f"-> {out}"
    )
    return 0


def cmd_eval(args) -> int:
    from .audio import read_manifest
    from .features import load_feature_cache
    from .training import evaluate, load_model

    model = load_model(args.model)
    manifest = read_manifest(args.manifest)
    keep = [e for e in manifest.entries if e.target == model.target and e.label]
    if not keep:
        print("error: no labeled entries matching the model target", file=sys.stderr)
        return 1
    if args.features_cache:
        cached_ids, matrix = load_feature_cache(args.features_cache)
        index = {rid: k for k, rid in enumerate(cached_ids)}
        X = matrix[[index[e.recording_id] for e in keep]]
    else:
        sub = type(manifest)([e for e in keep])
        _, X, *_ = _extract_manifest(sub, model.mode, args.jobs,
                                     zero_phase=model.metadata.get("filtering") != "causal")
    y = np.array([e.label for e in keep])
    preds = model.predict(np.nan_to_num(X, nan=0.0))
    report = evaluate(preds, y)
    out = Path(args.out)
    _atomic_write(out, json.dumps(report.to_json(), indent=1, sort_keys=True))
    _atomic_write(out.with_suffix(".confusion.csv"), report.confusion_csv())
    print(
        f"mse={report.mse:.3f} acc={report.accuracy:.3f} "
        f"bacc={report.balanced_accuracy:.3f} -> {out}"
    )
    return 0


def cmd_vitals(args) -> int:
    from .audio import load_wav
    from .vitals import br_estimate, hr_schmidt, hr_springer

    rec = load_wav(args.wav)
    from .audio import TARGET_FS, resample_to_4k

    if rec.fs != TARGET_FS:
        rec = resample_to_4k(rec)
    series = []
    if args.kind in ("hr", "both"):
        series += [hr_schmidt(rec), hr_springer(rec)]
    if args.kind in ("br", "both"):
        series.append(br_estimate(rec))
    doc = [
        {
            "kind": s.kind, "method": s.method, "window_s": s.window_s,
            "times": s.times.tolist(), "values": s.values.tolist(),
            "flags": s.flags.astype(bool).tolist(),
        }
        for s in series
    ]
    _atomic_write(Path(args.out), json.dumps(doc, indent=1, sort_keys=True))
    for s in series:
        print(f"{s.kind}/{s.method}: median={np.median(s.values):.1f} "
              f"flagged={int(s.flags.sum())}/{len(s.flags)}")
    return 0


def cmd_synth(args) -> int:
    from .synth import generate_corpus

    manifest = generate_corpus(args.out, args.n, args.seed)
    print(f"wrote {len(manifest.entries)} recordings under {args.out}")
    return 0


def cmd_bench(args) -> int:
    from .rtengine import bench_features
    from .synth import SynthSpec, gen_noise, mix, synth_heart

    if args.wav:
        from .audio import load_wav

        rec = _ten_seconds(load_wav(args.wav))
    else:
        spec = SynthSpec("heart", 120.0, 10.0, seed=args.seed)
        rec = mix(synth_heart(spec), gen_noise("white", 40000, 4000.0, args.seed + 1), 10.0)
    report = bench_features(rec, repetitions=args.repetitions)
    _atomic_write(Path(args.out), json.dumps(report, indent=1, sort_keys=True))
    print(
        f"fast_median={report['fast_total_ms_median']:.0f}ms "
        f"full_median={report['full_total_ms_median']:.0f}ms -> {args.out}"
    )
    return 0


def cmd_stream(args) -> int:
    import asyncio

    import uvicorn

    from .service import create_app, start_ndjson_server
    from .training import load_model

    if len(args.model) != 2:
        print("error: stream needs exactly two --model artifacts (heart and lung)",
              file=sys.stderr)
        return 2
    models = [load_model(p) for p in args.model]
    by_target = {m.target: m for m in models}
    if set(by_target) != {"heart", "lung"}:
        print("error: provide one heart and one lung model", file=sys.stderr)
        return 2
    host, _, port = args.listen.partition(":")
    port = int(port or 8000)
    ndjson_port = args.ndjson_port or port + 1
    app = create_app(by_target["heart"], by_target["lung"], session_csv=args.session_csv)

    async def serve():
        tcp = await start_ndjson_server(
            host or "127.0.0.1", ndjson_port,
            by_target["heart"], by_target["lung"], args.session_csv,
        )
        config = uvicorn.Config(app, host=host or "127.0.0.1", port=port, log_level="warning")
        server = uvicorn.Server(config)
        print(f"http/ws on {host or '127.0.0.1'}:{port}, ndjson tcp on {ndjson_port}")
        async with tcp:
            await server.serve()

    asyncio.run(serve())
    return 0


def cmd_train_emission(args) -> int:
    from . import heartseg, synth

    rng = np.random.default_rng(args.seed)
    feats, labs = [], []
    for _ in range(args.n_recordings):
        hr = float(rng.uniform(75, 210))
        snr = float(rng.uniform(5, 30))
        spec = synth.SynthSpec("heart", hr, snr, seed=int(rng.integers(2**31 - 1)))
        clean, events = synth.heart_clean(spec)
        rec = synth.mix(synth.synth_heart(spec),
                        synth.gen_noise("white", len(clean), spec.fs, spec.seed + 1), snr)
        hb = heartseg.heart_band_of(rec.samples, spec.fs)
        f = heartseg.springer_features(hb, spec.fs)
        times = (np.arange(len(f)) + 0.5) / heartseg.SEG_FRAME_FS
        y = np.full(len(f), heartseg.DIASTOLE, dtype=int)
        for s, e in zip(events.s1_starts, events.s1_ends):
            y[(times >= s) & (times < e)] = heartseg.S1
        for s, e in zip(events.s2_starts, events.s2_ends):
            y[(times >= s) & (times < e)] = heartseg.S2
        for s1e, s2s in zip(events.s1_ends, events.s2_starts):
            y[(times >= s1e) & (times < s2s)] = heartseg.SYSTOLE
        feats.append(f)
        labs.append(y)
    model = heartseg.train_emission_model(np.vstack(feats), np.concatenate(labs))
    _atomic_write(Path(args.out), json.dumps(model.to_json(), indent=1, sort_keys=True))
    print(f"wrote emission artifact -> {args.out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neoscope",
        description="Chest-sound quality scoring, vitals, and training pipeline",
    )
    parser.add_argument("--config", help="TOML key/value file mirroring the long flags")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommand_parsers = []  # config defaults must reach each subparser

    _add_parser = sub.add_parser

    def add_parser(*a, **kw):
        p = _add_parser(*a, **kw)
        parser.subcommand_parsers.append(p)
        return p

    sub.add_parser = add_parser

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--mode", choices=("full", "fast"), default="full")
        # required unless supplied through --config; validated after parsing
        p.add_argument("--out", default=None)

    p = sub.add_parser("ingest", help="build a dataset manifest from WAV files")
    p.add_argument("--wav-dir", required=True)
    p.add_argument("--target", choices=("heart", "lung"), required=True)
    p.add_argument("--patient-map", help="CSV recording_id,patient_id")
    p.add_argument("--annotations", help="annotation CSV for median labels")
    common(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("features", help="extract the feature catalog for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--cache", help="also write a columnar .npz cache")
    p.add_argument("--causal", action="store_true", help="causal band filtering")
    p.add_argument("--server", help="delegate to a running service URL")
    common(p)
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("annotate-stats", help="rater agreement report")
    p.add_argument("--annotations", required=True)
    p.add_argument("--threshold", type=float, default=0.2)
    common(p)
    p.set_defaults(fn=cmd_annotate_stats)

    p = sub.add_parser("train", help="train a quality model from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--target", choices=("heart", "lung"), required=True)
    p.add_argument("--features-cache", help="reuse a features .npz")
    p.add_argument("--families", help="comma list, default all implemented")
    p.add_argument("--splits", type=int, default=5)
    p.add_argument("--causal", action="store_true")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a labeled manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-cache")
    common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("vitals", help="per-second HR/BR for one recording")
    p.add_argument("--wav", required=True)
    p.add_argument("--kind", choices=("hr", "br", "both"), default="both")
    common(p)
    p.set_defaults(fn=cmd_vitals)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--n", type=int, default=100)
    common(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("bench", help="per-family extraction timing report")
    p.add_argument("--wav")
    p.add_argument("--repetitions", type=int, default=3)
    common(p)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("stream", help="serve the live scoring engine")
    p.add_argument("--model", action="append", default=[],
                   help="model artifact (give twice: heart and lung)")
    p.add_argument("--listen", default="127.0.0.1:8000")
    p.add_argument("--ndjson-port", type=int)
    p.add_argument("--session-csv", help="marker log (annotation CSV schema)")
    p.set_defaults(fn=cmd_stream)

    p = sub.add_parser("train-emission", help="retrain the segmentation emission artifact")
    p.add_argument("--n-recordings", type=int, default=24)
    common(p)
    p.set_defaults(fn=cmd_train_emission)

    return parser


def _config_path_from(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = _load_config(_config_path_from(argv))
    except Exception as exc:
        print(f"error: bad config file: {exc}", file=sys.stderr)
        return 2
    if config:
        parser.set_defaults(**config)
        for sp in parser.subcommand_parsers:
            sp.set_defaults(**config)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if hasattr(args, "out") and args.out is None:
        print("error: --out is required (flag or config file)", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
