"""Command-line entry point.

Subcommands:

* ``synth-data``  write a synthetic blob dataset in the AECL-EMB format
* ``train``       run three-stage training, write checkpoint + reports
* ``evaluate``    score a checkpoint on a dataset
* ``diagnose``    per-batch attention NS/PS curve for a checkpoint

Exit codes: 0 success, 2 configuration error, 3 data error, 1 anything
else. Only flags and config files are consulted, never environment
variables. Flags override config-file values; the effective configuration
is frozen into the run manifest before training starts.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .data import EmbeddingDataset, generate_synthetic, load_dataset, \
    save_embeddings, save_labels
from .errors import ConfigError, DataError
from .evaluation import batch_diagnostics, emit_report, evaluate_params
from .figures import render_cluster_sizes_figure, render_history_figures, \
    render_ns_figure
from .losses import LossWeights
from .model import ModelDims, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainHistory, train

_CONFIG_KEYS = {
    "d2": int, "batch_size": int, "epochs_stage1": int, "epochs_stage2": int,
    "epochs_total": int, "lambda1": float, "lambda2": float, "lambda3": float,
    "lambda4": float, "tau_i": float, "tau_c": float, "lr_heads": float,
    "lr_encoder": float, "confidence_threshold": float, "seed": int,
    "adam_beta1": float, "adam_beta2": float, "adam_eps": float,
    "pseudo_mode": str, "entropy_sign": str, "use_similarity_term": bool,
    "aug_noise_sigma": float, "aug_mask_prob": float, "m": int,
}


def _parse_bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes"):
        return True
    if text.lower() in ("0", "false", "no"):
        return False
    raise ConfigError(f"invalid boolean value: {text}")


def read_config_file(path: Path | str) -> dict:
    """Flat key=value file; blank lines and #-comments ignored."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno} is not key=value")
        key, text = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key: {key}")
        caster = _CONFIG_KEYS[key]
        try:
            values[key] = _parse_bool(text) if caster is bool else caster(text)
        except ValueError as exc:
            raise ConfigError(f"bad value for config key {key}: {text}") from exc
    return values


def _sha256_file(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _sha256_array(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()


def write_manifest(path: Path, entries: dict[str, str]) -> None:
    """Atomic key=value manifest (write to a sibling temp file, then rename)."""
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("".join(f"{k}={v}\n" for k, v in entries.items()),
                   encoding="ascii")
    os.replace(tmp, path)


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--view0", help="original-view embedding file")
    parser.add_argument("--labels", help="ground-truth labels file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aecl",
        description="Attention-enhanced contrastive clustering on "
                    "precomputed embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic blob dataset")
    p.add_argument("--clusters", type=int, required=True)
    p.add_argument("--per", type=int, required=True,
                   help="samples per cluster")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--sep", type=float, default=10.0,
                   help="minimum distance between cluster centers")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="run the three-stage training")
    _add_data_flags(p)
    p.add_argument("--view1", help="augmented-view embedding file")
    p.add_argument("--augment", action="store_true",
                   help="synthesize the second view by feature-space "
                        "augmentation (the default when --view1 is absent)")
    p.add_argument("--synthetic", metavar="CxPxD",
                   help="generate blobs instead of loading --view0, "
                        "e.g. 4x200x32")
    p.add_argument("--sep", type=float, default=10.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--m", type=int, help="number of clusters")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--d2", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int, dest="epochs_total")
    p.add_argument("--e1", type=int, dest="epochs_stage1")
    p.add_argument("--e2", type=int, dest="epochs_stage2")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--lambda3", type=float)
    p.add_argument("--lambda4", type=float)
    p.add_argument("--tau-i", type=float, dest="tau_i")
    p.add_argument("--tau-c", type=float, dest="tau_c")
    p.add_argument("--lr", type=float, dest="lr_heads")
    p.add_argument("--threshold", type=float, dest="confidence_threshold")
    p.add_argument("--pseudo-mode", choices=("threshold", "argmax"),
                   dest="pseudo_mode")
    p.add_argument("--entropy-sign", choices=("intent", "paper"),
                   dest="entropy_sign")
    p.add_argument("--no-similarity-term", action="store_true",
                   help="ablation: drop the weighted positive-set terms")
    p.add_argument("--aug-sigma", type=float, dest="aug_noise_sigma")
    p.add_argument("--aug-mask", type=float, dest="aug_mask_prob")

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    _add_data_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=400)

    p = sub.add_parser("diagnose", help="per-batch NS/PS attention curve")
    _add_data_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=400)
    return parser


def cmd_synth(args: argparse.Namespace) -> int:
    dataset = generate_synthetic(args.clusters, args.per, args.dim,
                                 args.sep, args.sigma, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_embeddings(out_dir / "view0.emb", dataset.view0)
    save_labels(out_dir / "labels.txt", dataset.labels)
    print(f"wrote {out_dir / 'view0.emb'} ({dataset.n_samples} x {dataset.dim}) "
          f"and {out_dir / 'labels.txt'}")
    return 0


def _parse_synthetic_spec(spec: str) -> tuple[int, int, int]:
    parts = spec.lower().split("x")
    if len(parts) != 3:
        raise ConfigError("synthetic spec must look like CxPxD, e.g. 4x200x32")
    try:
        clusters, per, dim = (int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError("synthetic spec must be three integers") from exc
    return clusters, per, dim


def _load_train_dataset(args: argparse.Namespace,
                        seed: int) -> tuple[EmbeddingDataset, dict[str, str]]:
    """Dataset plus its manifest digest entries."""
    if args.synthetic:
        clusters, per, dim = _parse_synthetic_spec(args.synthetic)
        dataset = generate_synthetic(clusters, per, dim, args.sep, args.sigma,
                                     seed)
        # the synthetic view1 is a placeholder copy of view0; drop it so the
        # trainer applies the configured feature-space augmentation
        dataset = dataclasses.replace(dataset, view1=None)
        digests = {
            "dataset": f"synthetic:{args.synthetic}:sep={args.sep}:sigma={args.sigma}",
            "digest_view0": _sha256_array(dataset.view0),
            "digest_labels": _sha256_array(dataset.labels),
        }
        return dataset, digests
    if not args.view0:
        raise ConfigError("either --view0 or --synthetic is required")
    dataset = load_dataset(args.view0, args.view1, args.labels)
    digests = {"dataset": args.view0,
               "digest_view0": _sha256_file(args.view0)}
    if args.view1:
        digests["digest_view1"] = _sha256_file(args.view1)
    if args.labels:
        digests["digest_labels"] = _sha256_file(args.labels)
    return dataset, digests


def _resolve_train_config(args: argparse.Namespace,
                          dataset: EmbeddingDataset) -> TrainConfig:
    values: dict = {}
    if args.config:
        if not Path(args.config).exists():
            raise ConfigError(f"config file not found: {args.config}")
        values.update(read_config_file(args.config))
    for key in ("m", "seed", "d2", "batch_size", "epochs_total",
                "epochs_stage1", "epochs_stage2", "lambda1", "lambda2",
                "lambda3", "lambda4", "tau_i", "tau_c", "lr_heads",
                "confidence_threshold", "pseudo_mode", "entropy_sign",
                "aug_noise_sigma", "aug_mask_prob"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if args.no_similarity_term:
        values["use_similarity_term"] = False

    m = values.pop("m", None)
    if m is None:
        m = dataset.num_classes_hint
    if m is None and dataset.labels is not None:
        m = int(dataset.labels.max()) + 1
    if m is None:
        raise ConfigError("number of clusters required")
    dims = ModelDims(d1=dataset.dim, d2=int(values.pop("d2", 128)), m=int(m))

    weight_fields = {k: values.pop(k) for k in
                     ("lambda1", "lambda2", "lambda3", "lambda4",
                      "tau_i", "tau_c") if k in values}
    try:
        weights = LossWeights(**weight_fields)
        config = TrainConfig(dims=dims, weights=weights, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    config.validate()
    return config


def cmd_train(args: argparse.Namespace) -> int:
    if args.augment and args.view1:
        raise ConfigError("--augment and --view1 are mutually exclusive")
    seed = args.seed if args.seed is not None else 0
    dataset, digests = _load_train_dataset(args, seed)
    config = _resolve_train_config(args, dataset)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"artifact_version": __version__, "command": "train"}
    manifest.update(digests)
    manifest.update({f"config.{k}": v for k, v in config.to_mapping().items()})
    manifest["out_dir"] = str(out_dir)
    write_manifest(out_dir / "manifest.txt", manifest)

    params, history = train(dataset, config)
    save_checkpoint(out_dir / "model.ckpt", params)
    report, _ = evaluate_params(params, dataset.view0, config.batch_size,
                                dataset.labels)
    emit_report(report, history, out_dir)
    render_history_figures(history, out_dir)
    render_cluster_sizes_figure(report, out_dir / "cluster_sizes.png")
    if report.acc is not None:
        print(f"final acc={report.acc:.4f} nmi={report.nmi:.4f} "
              f"ns={report.ns:.4f}")
    else:
        print(f"trained on {report.n_samples} unlabeled samples; "
              f"cluster sizes {report.cluster_sizes.tolist()}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    params = load_checkpoint(args.ckpt)
    if not args.view0:
        raise ConfigError("--view0 is required")
    dataset = load_dataset(args.view0, None, args.labels)
    report, _ = evaluate_params(params, dataset.view0, args.batch_size,
                                dataset.labels)
    out_dir = Path(args.out)
    paths = emit_report(report, TrainHistory(), out_dir)
    render_cluster_sizes_figure(report, out_dir / "cluster_sizes.png")
    print(f"wrote {paths['report']}")
    return 0


def cmd_diagnose(args: argparse.Namespace) -> int:
    if not args.labels:
        raise ConfigError("diagnose requires --labels")
    params = load_checkpoint(args.ckpt)
    if not args.view0:
        raise ConfigError("--view0 is required")
    dataset = load_dataset(args.view0, None, args.labels)
    pairs = batch_diagnostics(params, dataset.view0, dataset.labels,
                              args.batch_size)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["batch,ns,ps"]
    lines += [f"{i},{repr(ns)},{repr(ps)}" for i, (ns, ps) in enumerate(pairs)]
    (out_dir / "ns_curve.csv").write_text("\n".join(lines) + "\n",
                                          encoding="ascii")
    render_ns_figure(pairs, out_dir / "ns_curve.png")
    mean_ns = float(np.mean([p[0] for p in pairs]))
    print(f"mean NS over {len(pairs)} batches: {mean_ns:.6f}")
    return 0


_COMMANDS = {"synth-data": cmd_synth, "train": cmd_train,
             "evaluate": cmd_evaluate, "diagnose": cmd_diagnose}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - defensive catch-all
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    raise SystemExit(main())
