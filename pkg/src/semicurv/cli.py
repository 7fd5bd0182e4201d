"""Command-line entry points: train, eval, ablate, gen-synthetic."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    SegmentationDataset,
    Splits,
    SplitSpec,
    SyntheticConfig,
    export_dataset,
    generate_synthetic,
    load_corpus,
    make_splits,
    split_counts,
    split_predefined,
)
from .trainer import (
    TrainConfig,
    ablation_run,
    apply_overrides,
    config_keys,
    eval_network,
    evaluate,
    fit,
    format_table,
    load_checkpoint,
    pair_from_checkpoint,
    predict,
)


OUTPUT_ROOT_ENV = "SEMICURV_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class DataConfig:
    """Where training data comes from and how it is split."""

    source: str = "synthetic"  # "synthetic" or a directory
    label_frac: float = 0.05
    split_seed: int = 0
    patch_size: int = 0
    n_train: int = 200
    n_val: int = 40
    n_test: int = 40
    size: int = 64
    synthetic_seed: int = 0


# config files


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines; ``#`` starts a comment. Errors carry the line number."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = (value, lineno)
    return out


def resolve_config(entries: dict, overrides: dict, source: str = "<config>"):
    """Split ``data.*`` keys from trainer keys and build both configs.

    ``entries`` maps key -> (value, line); ``overrides`` maps key -> value and wins.
    """
    train_kv, data_kv, where = {}, {}, {}
    merged = {k: v for k, (v, _) in entries.items()}
    merged.update(overrides)
    for key, value in merged.items():
        where[key] = f"{source}:{entries[key][1]}" if key in entries and key not in overrides else "override"
        if key.startswith("data."):
            data_kv[key[5:]] = value
        else:
            train_kv[key] = value
    known = set(config_keys())
    known_data = {f.name for f in dataclasses.fields(DataConfig)}
    for key in train_kv:
        if key not in known:
            raise ConfigError(f"{where[key]}: unknown config key {key!r}")
    for key in data_kv:
        if key not in known_data:
            raise ConfigError(f"{where['data.' + key]}: unknown config key 'data.{key}'")
    try:
        cfg = apply_overrides(TrainConfig(), train_kv)
        data_cfg = apply_overrides(DataConfig(), data_kv)
    except (ValueError, TypeError) as err:
        bad = [k for k in merged if str(err).startswith(k.removeprefix("data.") + ":")]
        loc = where[bad[0]] if bad else source
        raise ConfigError(f"{loc}: {err}") from None
    return cfg, data_cfg


def load_config(path: str | None, overrides: dict):
    if path in (None, "default"):
        return resolve_config({}, overrides)
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return resolve_config(parse_config_text(p.read_text(), str(p)), overrides, str(p))


def write_config(cfg: TrainConfig, data_cfg: DataConfig) -> str:
    lines = [f"{k} = {_fmt(v)}" for k, v in cfg.to_dict().items()]
    lines += [f"data.{k} = {_fmt(v)}" for k, v in dataclasses.asdict(data_cfg).items()]
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, (list, tuple)):
        return ", ".join(str(x) for x in v)
    return str(v)


def parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override must look like key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


# data


def build_splits(data_cfg: DataConfig) -> tuple[Splits, str]:
    """Splits for the configured source and a fingerprint of the underlying data."""
    spec = SplitSpec(labelled_fraction=data_cfg.label_frac, seed=data_cfg.split_seed)
    if data_cfg.source == "synthetic":
        n = data_cfg.n_train + data_cfg.n_val + data_cfg.n_test
        ds = generate_synthetic(SyntheticConfig(size=data_cfg.size, seed=data_cfg.synthetic_seed), n)
        spec = dataclasses.replace(spec, n_val=data_cfg.n_val, n_test=data_cfg.n_test)
        return make_splits(ds, spec), ds.fingerprint()
    root = Path(data_cfg.source)
    if not root.is_dir():
        raise ConfigError(f"dataset directory not found: {root}")
    corpus = load_corpus(root, patch_size=data_cfg.patch_size or None)
    digest = hashlib.sha256("".join(d.fingerprint() for d in corpus.values()).encode()).hexdigest()[:16]
    if "all" in corpus:
        return make_splits(corpus["all"], spec), digest
    if "train" not in corpus:
        raise ConfigError(f"{root}: no train.txt manifest")
    lab, unlab = split_predefined(corpus["train"], spec)
    empty = SegmentationDataset([], [], [], role="val")
    return Splits(lab, unlab, corpus.get("val", empty), corpus.get("test", empty)), digest


def _split_by_name(splits: Splits, name: str) -> SegmentationDataset:
    if name == "labelled":
        return splits.labelled
    if name not in ("val", "test"):
        raise ConfigError(f"unknown split {name!r}")
    return getattr(splits, name)


# run directories


def output_root(cli_value: str | None) -> Path:
    return Path(cli_value or os.environ.get(OUTPUT_ROOT_ENV) or "runs")


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:10]


def new_run_dir(root: Path, prefix: str, key, name: str | None = None) -> Path:
    base = name or f"{prefix}-{_digest(key)}"
    path = root / base
    k = 1
    while path.exists():
        path = root / f"{base}-{k}"
        k += 1
    path.mkdir(parents=True)
    return path


def make_manifest(cfg: TrainConfig, data_cfg: DataConfig, fingerprint: str, run_dir: Path, command: str) -> dict:
    return {
        "command": command,
        "config": cfg.to_dict(),
        "data": dataclasses.asdict(data_cfg),
        "seed": cfg.seed,
        "code_version": __version__,
        "dataset_fingerprint": fingerprint,
        "output_dir": str(run_dir),
    }


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# commands


def cmd_train(args) -> int:
    overrides = parse_overrides(args.set)
    for flag, key in (("consistency", "consistency"), ("epochs", "epochs"), ("seed", "seed")):
        if getattr(args, flag) is not None:
            overrides[key] = getattr(args, flag)
    if args.data is not None:
        overrides["data.source"] = args.data
    if args.label_frac is not None:
        overrides["data.label_frac"] = args.label_frac
    cfg, data_cfg = load_config(args.config, overrides)
    splits, fingerprint = build_splits(data_cfg)
    root = output_root(args.output)
    key = {"config": cfg.to_dict(), "data": dataclasses.asdict(data_cfg), "fp": fingerprint}
    run_dir = new_run_dir(root, "train", key, args.name)
    manifest = make_manifest(cfg, data_cfg, fingerprint, run_dir, "train")
    _write_json(run_dir / "manifest.json", manifest)
    (run_dir / "config.txt").write_text(write_config(cfg, data_cfg))

    def progress(rec):
        if not args.quiet:
            val = "-" if rec["val_iou"] is None else f"{rec['val_iou']:.4f}"
            print(f"epoch {rec['epoch']:4d}  loss {rec['l_total']:.4f}  gamma {rec['gamma']:.3g}  val_iou {val}",
                  flush=True)

    report = fit(splits, cfg, run_dir=run_dir, on_epoch=progress)
    metrics = {
        "best_epoch": report.best_epoch,
        "best_val_iou": report.best_val_iou,
        "eval_model": cfg.eval_model,
        "test": report.test,
        "seconds": report.seconds,
    }
    _write_json(run_dir / "metrics.json", metrics)
    if report.test is not None:
        print(f"test IoU {report.test['iou']:.4f}  F1 {report.test['f1']:.4f}")
    print(run_dir)
    return 0


def save_overlay(path: Path, image: np.ndarray, mask: np.ndarray, pred: np.ndarray, threshold: float = 0.5):
    """Input, ground truth and thresholded prediction side by side."""
    from PIL import Image

    gray = image[0] if image.shape[0] == 1 else image.mean(axis=0)
    panels = [gray, mask.astype(float), (pred >= threshold).astype(float)]
    strip = np.concatenate([np.clip(p, 0, 1) for p in panels], axis=1)
    Image.fromarray(np.rint(strip * 255).astype(np.uint8)).save(path)


def cmd_eval(args) -> int:
    payload = load_checkpoint(args.checkpoint)
    pair, cfg = pair_from_checkpoint(payload)
    manifest_path = Path(args.checkpoint).parent / "manifest.json"
    if args.data is not None:
        data_cfg = dataclasses.replace(DataConfig(), source=args.data)
        if manifest_path.exists():
            saved = json.loads(manifest_path.read_text())["data"]
            data_cfg = dataclasses.replace(DataConfig(**saved), source=args.data)
    elif manifest_path.exists():
        data_cfg = DataConfig(**json.loads(manifest_path.read_text())["data"])
    else:
        raise ConfigError("no --data given and no manifest.json next to the checkpoint")
    splits, _ = build_splits(data_cfg)
    dataset = _split_by_name(splits, args.split)
    if len(dataset) == 0:
        raise ConfigError(f"the {args.split} split is empty")
    which = "teacher" if args.teacher else ("student" if args.student else cfg.eval_model)
    model = eval_network(pair, which)
    metrics = evaluate(model, dataset)
    report = {"checkpoint": str(args.checkpoint), "split": args.split, "model": which, **metrics}
    if args.out:
        _write_json(Path(args.out), report)
    if args.overlays:
        out_dir = Path(args.overlays)
        out_dir.mkdir(parents=True, exist_ok=True)
        for sid, im, m, p in zip(dataset.ids, dataset.images, dataset.masks, predict(model, dataset)):
            save_overlay(out_dir / f"{sid}.png", im, m, p)
    print(json.dumps({k: report[k] for k in ("split", "model", "iou", "f1")}))
    return 0


def load_grid(path) -> tuple[object, list | None, dict]:
    """Grid file: a list of cells, an axes dict, or ``{"grid": ..., "seeds": [...], "set": {...}}``."""
    p = Path(path)
    try:
        obj = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"{path}: {err}") from None
    if isinstance(obj, dict) and "grid" in obj:
        return obj["grid"], obj.get("seeds"), obj.get("set", {})
    return obj, None, {}


def cmd_ablate(args) -> int:
    grid, seeds, extra = load_grid(args.grid)
    overrides = {k: str(v) for k, v in extra.items()}
    overrides.update(parse_overrides(args.set))
    if args.data is not None:
        overrides["data.source"] = args.data
    cfg, data_cfg = load_config(args.config, overrides)
    if args.seeds:
        seeds = args.seeds
    splits, fingerprint = build_splits(data_cfg)
    root = output_root(args.output)
    key = {"grid": grid, "seeds": seeds, "config": cfg.to_dict(), "fp": fingerprint}
    run_dir = new_run_dir(root, "ablate", key, args.name)
    manifest = make_manifest(cfg, data_cfg, fingerprint, run_dir, "ablate")
    manifest["grid"] = grid
    manifest["seeds"] = seeds
    _write_json(run_dir / "manifest.json", manifest)
    try:
        rows = ablation_run(grid, cfg, splits, seeds=seeds)
    except (KeyError, ValueError) as err:
        raise ConfigError(str(err)) from None
    columns = ["SSL", "SupLoss", "GeoTform", "Consist.", "Spt.Enc.", "K", "Sim.", "IoU", "F1",
               "iou_per_seed", "f1_per_seed"]
    with open(run_dir / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([json.dumps(row[c]) if isinstance(row[c], list) else row[c] for c in columns])
    _write_json(run_dir / "results.json", rows)
    summary = format_table(rows)
    (run_dir / "summary.txt").write_text(summary + "\n")
    print(summary)
    print(run_dir)
    return 0


def cmd_gen_synthetic(args) -> int:
    cfg = SyntheticConfig(size=args.size, seed=args.seed)
    ds = generate_synthetic(cfg, args.n)
    out = Path(args.out)
    export_dataset(ds, out, manifest="all.txt")
    if args.val + args.test > 0:
        spec = SplitSpec(labelled_fraction=1.0, seed=args.seed, n_val=args.val, n_test=args.test)
        counts = split_counts(len(ds), spec)
        order = np.random.default_rng(args.seed).permutation(len(ds))
        parts = {
            "test": order[: counts["test"]],
            "val": order[counts["test"] : counts["test"] + counts["val"]],
            "train": order[counts["test"] + counts["val"] :],
        }
        for name, idx in parts.items():
            (out / f"{name}.txt").write_text("".join(ds.ids[i] + "\n" for i in sorted(idx)))
    _write_json(out / "synthetic.json", {**dataclasses.asdict(cfg), "n": args.n, "fingerprint": ds.fingerprint()})
    print(f"wrote {args.n} images to {out} (positive ratio {ds.positive_ratio():.4f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semicurv", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a student/teacher pair")
    p.add_argument("--config", default="default", help="key = value config file, or 'default'")
    p.add_argument("--data", help="'synthetic' or a dataset directory")
    p.add_argument("--label-frac", type=float, help="fraction of training images that keep labels")
    p.add_argument("--consistency", choices=["mse", "npair", "none"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--output", help=f"output root (default ${OUTPUT_ROOT_ENV} or ./runs)")
    p.add_argument("--name", help="run directory name")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--data", help="dataset source; defaults to the run's manifest")
    p.add_argument("--split", default="val", choices=["labelled", "val", "test"])
    who = p.add_mutually_exclusive_group()
    who.add_argument("--teacher", action="store_true", help="evaluate the EMA teacher")
    who.add_argument("--student", action="store_true", help="evaluate the student")
    p.add_argument("--out", help="write the metrics report here (JSON)")
    p.add_argument("--overlays", help="directory for input/truth/prediction panels")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run a grid of configurations")
    p.add_argument("grid", help="JSON grid file")
    p.add_argument("--config", default="default")
    p.add_argument("--data")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--output")
    p.add_argument("--name")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gen-synthetic", help="write a synthetic curvilinear dataset")
    p.add_argument("out")
    p.add_argument("--n", type=int, default=280)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val", type=int, default=40)
    p.add_argument("--test", type=int, default=40)
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
