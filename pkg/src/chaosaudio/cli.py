"""Batch command-line interface.

Subcommands: extract, synth, tree, som, ae-train, deep, audit, report.
A JSON config file provides defaults; command-line flags override it.
Every run writes a `run_manifest.json` embedding the effective config
hash, the seed and the tool version, so identical runs produce
byte-identical artifacts.

Exit codes: 0 success, 2 config/usage error, 3 input/output error,
4 numeric divergence.
"""

from __future__ import annotations

import argparse
import glob as globlib
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from chaosaudio import __version__
from chaosaudio.audio_io import (
    CANONICAL_RATE_HZ,
    AudioIOError,
    FrameSpec,
    load_audio,
    noise_gate,
    resample,
    save_wav,
)
from chaosaudio.autoencoder import (
    OptimizerConfig,
    TrainingDiverged,
    build_autoencoder,
    param_search,
    train,
)
from chaosaudio.deep import DeepMelConfig, fit_pipeline, fit_scaler, majority_vote, predict_seconds, preprocess
from chaosaudio.features import (
    extract_feature_table,
    low_correlation_columns,
    read_feature_table,
    write_feature_table,
    FEATURE_COLUMNS,
)
from chaosaudio.som import SomConfig, component_planes, som_fit, som_verify, u_matrix
from chaosaudio.synth import CLASS_NAMES, SyntheticCorpusSpec, generate_corpus
from chaosaudio.tree import (
    DEFAULT_TREE_SPEC,
    TreeSpec,
    audit_sample,
    audit_score,
    feature_sweep,
    level_map,
    time_proportions,
    tree_fit,
    tree_predict,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class ConfigError(Exception):
    exit_code = EXIT_CONFIG


class InputError(Exception):
    exit_code = EXIT_IO


def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2, default=str) + "\n")


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    df.to_csv(path, index=False, float_format="%.9g", lineterminator="\n")


def _manifest(out: Path, command: str, config: dict, seed: int, artifacts: list[str]) -> None:
    _write_json(
        out / "run_manifest.json",
        {
            "command": command,
            "config_hash": _config_hash(config),
            "seed": seed,
            "tool_version": __version__,
            "artifacts": sorted(artifacts),
        },
    )


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc


def _resolve_inputs(patterns: list[str]) -> list[Path]:
    paths: list[Path] = []
    for pattern in patterns:
        matches = sorted(globlib.glob(pattern))
        if not matches and Path(pattern).exists():
            matches = [pattern]
        paths.extend(Path(m) for m in matches)
    if not paths:
        raise InputError(f"no inputs matched {patterns}")
    return paths


def _load_clips(paths, jobs: int = 1, gate: bool = False, gate_profile: str | None = None):
    def load_one(path):
        clip = load_audio(path)
        if clip.sample_rate_hz != CANONICAL_RATE_HZ:
            clip = resample(clip, CANONICAL_RATE_HZ)
        return clip

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            clips = list(pool.map(load_one, paths))
    else:
        clips = [load_one(p) for p in paths]
    if gate:
        if not gate_profile:
            raise ConfigError("--noise-gate requires noise_profile in config")
        profile = load_audio(gate_profile)
        if profile.sample_rate_hz != CANONICAL_RATE_HZ:
            profile = resample(profile, CANONICAL_RATE_HZ)
        clips = [noise_gate(c, profile) for c in clips]
    return clips


def cmd_extract(args, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    patterns = args.inputs or config.get("inputs") or []
    if not patterns:
        raise ConfigError("no inputs: pass WAV paths/globs or set 'inputs' in config")
    paths = _resolve_inputs(patterns)
    effective = {
        "inputs": [str(p) for p in paths],
        "seed": args.seed,
        "noise_gate": bool(args.noise_gate),
        "frame_len_s": config.get("frame_len_s", 1.0),
        "hop_s": config.get("hop_s", 0.5),
    }
    chash = _config_hash(effective)
    cache = out / "cache"
    cache.mkdir(exist_ok=True)
    target = out / "features.csv"
    try:
        tables = []
        for path in paths:
            cached = cache / f"{Path(path).stem}.{chash}.csv"
            if cached.exists():
                tables.append(read_feature_table(cached))
                continue
            clips = _load_clips([path], jobs=1, gate=args.noise_gate,
                                gate_profile=config.get("noise_profile"))
            table = extract_feature_table(
                clips,
                frame_spec=FrameSpec(effective["frame_len_s"], effective["hop_s"]),
            )
            write_feature_table(table, cached)
            tables.append(table)
        merged = pd.concat(tables, ignore_index=True).sort_values(
            ["source_id", "window_start_s"], kind="stable"
        ).reset_index(drop=True)
        merged["window_index"] = merged.groupby("source_id").cumcount()
        write_feature_table(merged, target)
    except Exception:
        target.unlink(missing_ok=True)
        raise
    _manifest(out, "extract", effective, args.seed, ["features.csv"])
    print(f"wrote {target} ({len(merged)} windows from {len(paths)} files)")
    return EXIT_OK


def cmd_synth(args, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    synth_cfg = config.get("synth", {})
    seconds = synth_cfg.get(
        "seconds_per_class", {name: 60.0 for name in CLASS_NAMES}
    )
    spec = SyntheticCorpusSpec(
        seconds_per_class={k: float(v) for k, v in seconds.items()},
        seed=args.seed,
        dither_db=synth_cfg.get("dither_db"),
        dc_bias=synth_cfg.get("dc_bias", 0.02),
    )
    clips, labels = generate_corpus(spec)
    artifacts = ["labels.csv"]
    for clip in clips:
        name = f"{clip.source_id}.wav"
        save_wav(out / name, clip)
        artifacts.append(name)
    _write_csv(labels, out / "labels.csv")
    _manifest(out, "synth", {"synth": synth_cfg, "seed": args.seed}, args.seed, artifacts)
    print(f"wrote {len(clips)} clips and {len(labels)} label rows to {out}")
    return EXIT_OK


def _tree_spec_from_config(config) -> TreeSpec:
    doc = config.get("tree", {}).get("spec")
    return TreeSpec.from_dict(doc) if doc else DEFAULT_TREE_SPEC


def cmd_tree(args, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    features_path = args.features or config.get("tree", {}).get("features")
    if not features_path or not Path(features_path).exists():
        raise InputError(
            "tree needs a feature table; run `chaosaudio extract` first and "
            "pass --features <out>/features.csv"
        )
    table = read_feature_table(features_path)
    spec = _tree_spec_from_config(config)
    model, silhouettes = tree_fit(table, spec, rng_seed=args.seed)
    levels = config.get("tree", {}).get("levels")
    if levels:
        model = level_map(model, levels)
    predictions = tree_predict(model, table)
    artifacts = ["tree_model.json", "tree_silhouette.csv", "tree_predictions.csv"]
    model.save(out / "tree_model.json")
    _write_csv(silhouettes, out / "tree_silhouette.csv")
    _write_csv(
        predictions[["source_id", "window_index", "window_start_s", "leaf_label", "chaos_level"]],
        out / "tree_predictions.csv",
    )
    try:
        proportions = time_proportions(predictions)
        _write_csv(proportions, out / "tree_proportions.csv")
        artifacts.append("tree_proportions.csv")
    except ValueError:
        pass  # every window excluded; proportions are undefined
    sweep_features = config.get("tree", {}).get("sweep_features")
    if sweep_features:
        sweep = feature_sweep(table, sweep_features, rng_seed=args.seed)
        _write_csv(sweep, out / "tree_feature_sweep.csv")
        artifacts.append("tree_feature_sweep.csv")
    _manifest(out, "tree", {"tree": config.get("tree", {}), "seed": args.seed},
              args.seed, artifacts)
    print(f"tree fitted: {len(model.nodes)} splits, artifacts in {out}")
    return EXIT_OK


def cmd_som(args, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    features_path = args.features or config.get("som", {}).get("features")
    if not features_path or not Path(features_path).exists():
        raise InputError(
            "som needs a feature table; run `chaosaudio extract` first and "
            "pass --features <out>/features.csv"
        )
    table = read_feature_table(features_path)
    som_cfg = config.get("som", {})
    if som_cfg.get("reduced"):
        columns = low_correlation_columns(table)
    else:
        columns = som_cfg.get("columns") or FEATURE_COLUMNS
    cfg = SomConfig(
        rows=som_cfg.get("rows", 18),
        cols=som_cfg.get("cols", 18),
        epochs=som_cfg.get("epochs", 20),
        rng_seed=args.seed,
    )
    model = som_fit(table, cfg, columns=columns)
    artifacts = ["som_model.json", "som_u_matrix.csv"]
    model.save(out / "som_model.json")
    np.savetxt(out / "som_u_matrix.csv", u_matrix(model), delimiter=",", fmt="%.9g")
    planes_dir = out / "som_planes"
    planes_dir.mkdir(exist_ok=True)
    for name, plane in zip(model.columns, component_planes(model)):
        fname = f"som_planes/{name}.csv"
        np.savetxt(out / fname, plane, delimiter=",", fmt="%.9g")
        artifacts.append(fname)
    try:
        report = som_verify(model, table, rng_seed=args.seed)
        _write_json(
            out / "som_verification.json",
            {
                "knn": report["knn"].to_dict(),
                "knn_pca": report["knn_pca"].to_dict(),
                "merged_nodes": report["merged_nodes"],
                "n_classes": report["n_classes"],
                "pca_components": report["pca_components"],
            },
        )
        artifacts.append("som_verification.json")
    except ValueError as exc:
        print(f"verification skipped: {exc}")
    _manifest(out, "som", {"som": som_cfg, "seed": args.seed}, args.seed, artifacts)
    print(f"som fitted ({cfg.rows}x{cfg.cols} on {len(columns)} features), artifacts in {out}")
    return EXIT_OK


def _corpus_rows(args, config):
    patterns = args.inputs or config.get("inputs") or []
    if not patterns:
        raise ConfigError("no inputs: pass WAV paths/globs or set 'inputs' in config")
    paths = _resolve_inputs(patterns)
    clips = _load_clips(paths, jobs=args.jobs, gate=args.noise_gate,
                        gate_profile=config.get("noise_profile"))
    cfg = DeepMelConfig()
    scaler = fit_scaler(clips, cfg)
    rows = np.vstack([preprocess(c, cfg, scaler) for c in clips])
    return clips, rows, cfg


def cmd_ae_train(args, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ae_cfg = config.get("ae_train", {})
    clips, rows, mel_cfg = _corpus_rows(args, config)
    epochs = int(ae_cfg.get("epochs", 200))
    artifacts = []
    if args.grid:
        cells, best = param_search(
            rows, epochs=epochs, rng_seed=args.seed,
            batch_size=int(ae_cfg.get("batch_size", 4096)),
        )
        _write_csv(pd.DataFrame(cells), out / "ae_param_search.csv")
        _write_json(out / "ae_param_best.json", best)
        artifacts += ["ae_param_search.csv", "ae_param_best.json"]
        latent = int(best["latent_dim"])
    else:
        latent = int(ae_cfg.get("latent_dim", 16))
    model = build_autoencoder(mel_cfg.flat_dim, latent, rng_seed=args.seed)
    opt = OptimizerConfig(
        kind=ae_cfg.get("optimizer", "rmsprop"),
        learning_rate=float(ae_cfg.get("learning_rate",
                                       10.0 if ae_cfg.get("optimizer") == "adadelta" else 0.001)),
        epochs=epochs,
        batch_size=int(ae_cfg.get("batch_size", 4096)),
    )
    report = train(model, rows, opt, rng_seed=args.seed)
    model.save(out / "encoder.json")
    _write_csv(report.to_frame(), out / "ae_train_report.csv")
    artifacts += ["encoder.json", "ae_train_report.csv"]
    _manifest(out, "ae-train", {"ae_train": ae_cfg, "seed": args.seed}, args.seed, artifacts)
    print(
        f"encoder trained (latent {latent}, {opt.kind}): train loss "
        f"{report.final_train_loss:.4f}, val loss {report.final_val_loss:.4f}"
    )
    return EXIT_OK


def cmd_deep(args, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    deep_cfg = config.get("deep", {})
    encoder_path = args.encoder or deep_cfg.get("encoder")
    if not encoder_path or not Path(encoder_path).exists():
        raise InputError(
            "deep needs a trained encoder; run `chaosaudio ae-train` first and "
            "pass --encoder <out>/encoder.json"
        )
    from chaosaudio.autoencoder import MlpAutoencoder

    encoder = MlpAutoencoder.load(encoder_path)
    patterns = args.inputs or config.get("inputs") or []
    if not patterns:
        raise ConfigError("no inputs: pass WAV paths/globs or set 'inputs' in config")
    paths = _resolve_inputs(patterns)
    clips = _load_clips(paths, jobs=args.jobs)
    k_values = [int(k) for k in (args.k or deep_cfg.get("k", [2]))]
    sweep_ks = tuple(deep_cfg.get("k_sweep", (2, 3, 4, 6, 8, 12)))
    labels_path = args.labels or deep_cfg.get("labels")
    labels = pd.read_csv(labels_path) if labels_path else None

    artifacts = []
    summary = []
    for i, k in enumerate(k_values):
        model, silhouette, sweep = fit_pipeline(
            clips, encoder, k=k, rng_seed=args.seed,
            k_sweep=sweep_ks if i == 0 else None,
        )
        model.save(out / f"pipeline_k{k}.json", out / f"pipeline_k{k}_encoder.json")
        timeline = pd.concat([predict_seconds(model, c) for c in clips], ignore_index=True)
        windows = majority_vote(timeline, model.vote_window_s)
        _write_csv(timeline, out / f"timeline_k{k}.csv")
        _write_csv(windows, out / f"windows_k{k}.csv")
        artifacts += [f"pipeline_k{k}.json", f"pipeline_k{k}_encoder.json",
                      f"timeline_k{k}.csv", f"windows_k{k}.csv"]
        if sweep is not None:
            _write_csv(sweep, out / "kmeans_sweep.csv")
            artifacts.append("kmeans_sweep.csv")
        entry = {"k": k, "silhouette": silhouette,
                 "n_no_chaos_clusters": sum(1 for v in model.cluster_chaos.values() if v == "no")}
        if labels is not None:
            from chaosaudio.deep import evaluate

            pairs = [
                (c, labels[labels["source_id"] == c.source_id]) for c in clips
            ]
            pairs = [(c, l) for c, l in pairs if len(l)]
            entry.update(evaluate(model, pairs))
        summary.append(entry)
    _write_csv(pd.DataFrame(summary), out / "deep_summary.csv")
    artifacts.append("deep_summary.csv")
    _manifest(out, "deep", {"deep": deep_cfg, "k": k_values, "seed": args.seed},
              args.seed, artifacts)
    print(pd.DataFrame(summary).to_string(index=False))
    return EXIT_OK


def cmd_audit(args, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.manifest:  # scoring mode
        manifest = pd.read_csv(args.manifest, keep_default_na=False)
        scores = audit_score(manifest)
        _write_csv(scores, out / "audit_scores.csv")
        _manifest(out, "audit", {"manifest": args.manifest, "seed": args.seed},
                  args.seed, ["audit_scores.csv"])
        print(scores.to_string(index=False))
        return EXIT_OK
    predictions_path = args.predictions or config.get("audit", {}).get("predictions")
    if not predictions_path or not Path(predictions_path).exists():
        raise InputError("audit sampling needs --predictions from `chaosaudio tree`")
    predictions = pd.read_csv(predictions_path)
    patterns = args.inputs or config.get("inputs") or []
    if not patterns:
        raise ConfigError("audit sampling needs the source WAVs (inputs)")
    clips = {c.source_id: c for c in _load_clips(_resolve_inputs(patterns), jobs=args.jobs)}
    per_leaf = int(config.get("audit", {}).get("per_leaf_n", 50))
    manifest = audit_sample(
        predictions, clips, out / "audit_clips", per_leaf_n=per_leaf, rng_seed=args.seed
    )
    _write_csv(manifest, out / "audit_manifest.csv")
    _manifest(out, "audit", {"audit": config.get("audit", {}), "seed": args.seed},
              args.seed, ["audit_manifest.csv"])
    print(f"sampled {len(manifest)} windows; fill the verdict column and re-run "
          f"with --manifest {out / 'audit_manifest.csv'}")
    return EXIT_OK


def cmd_report(args, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {"tool_version": __version__, "runs": []}
    for manifest_path in sorted(Path(args.out).rglob("run_manifest.json")):
        summary["runs"].append(json.loads(manifest_path.read_text()))
    for name in ("tree_silhouette.csv", "kmeans_sweep.csv", "deep_summary.csv",
                 "audit_scores.csv"):
        path = out / name
        if path.exists():
            summary[name.removesuffix(".csv")] = pd.read_csv(path).to_dict("records")
    _write_json(out / "report.json", summary)
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaosaudio",
        description="Quantify the chaos level of home audio recordings.",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=0, help="global RNG seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--jobs", type=int, default=1, help="parallel file workers")
    parser.add_argument("--noise-gate", action="store_true",
                        help="apply the spectral noise gate before analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="WAVs -> window feature table CSV")
    p.add_argument("inputs", nargs="*", help="WAV paths or globs")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("synth", help="generate the synthetic corpus")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("tree", help="fit the hierarchical chaos tree")
    p.add_argument("--features", help="feature table CSV from `extract`")
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("som", help="train the self-organizing map")
    p.add_argument("--features", help="feature table CSV from `extract`")
    p.set_defaults(func=cmd_som)

    p = sub.add_parser("ae-train", help="train the denoising autoencoder")
    p.add_argument("inputs", nargs="*", help="corpus WAV paths or globs")
    p.add_argument("--grid", action="store_true", help="run the 3x3 parameter search")
    p.set_defaults(func=cmd_ae_train)

    p = sub.add_parser("deep", help="fit and run the deep chaos pipeline")
    p.add_argument("inputs", nargs="*", help="corpus WAV paths or globs")
    p.add_argument("--encoder", help="encoder JSON from `ae-train`")
    p.add_argument("--k", type=int, action="append", help="cluster count (repeatable)")
    p.add_argument("--labels", help="ground-truth label CSV for accuracy")
    p.set_defaults(func=cmd_deep)

    p = sub.add_parser("audit", help="sample clusters for listening, or score verdicts")
    p.add_argument("inputs", nargs="*", help="source WAV paths or globs")
    p.add_argument("--predictions", help="predictions CSV from `tree`")
    p.add_argument("--manifest", help="filled manifest CSV (scoring mode)")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("report", help="aggregate artifacts into report.json")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, AudioIOError, OSError) as exc:
        print(f"input/output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
