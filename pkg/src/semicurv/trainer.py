"""Mean-teacher training loop with aligned two-view consistency."""

from __future__ import annotations

import contextlib
import copy
import dataclasses
import itertools
import json
import logging
import math
import statistics
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .data import SegmentationDataset, Splits, batch_metrics
from .geometry import AugmentationPolicy, align, photometric_jitter, sample_transform, warp
from .losses import (
    LossBreakdown,
    NPairConfig,
    combined_loss,
    dice_loss,
    mse_consistency,
    npair_loss,
    wbce_loss,
)
from .model import BackboneConfig, StudentTeacherPair, init_pair

log = logging.getLogger(__name__)

CONSISTENCY = ("mse", "npair", "none")
SUPERVISED = ("dice", "wbce")
AUGMENTATION = ("geometric", "pixel-only")
EVAL_MODELS = ("student", "teacher")
CHECKPOINT_FORMAT = 1

# ablation axes and the short column names of the results table
ABLATION_AXES = {
    "supervised_loss": "SupLoss",
    "augmentation": "GeoTform",
    "consistency": "Consist.",
    "model.encoding.kind": "Spt.Enc.",
    "model.encoding.k": "K",
    "npair.similarity": "Sim.",
}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    ramp_epochs: int = 500
    lr: float = 1e-3
    lr_step: int = 500
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_labelled: int = 4
    batch_unlabelled: int = 4
    ema_alpha: float = 0.999
    consistency: str = "npair"
    supervised_loss: str = "dice"
    augmentation: str = "geometric"
    eval_model: str = "student"
    val_every: int = 1
    seed: int = 0
    deterministic: bool = True
    model: BackboneConfig = field(default_factory=BackboneConfig)
    npair: NPairConfig = field(default_factory=NPairConfig)
    augment: AugmentationPolicy = field(default_factory=AugmentationPolicy)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 < self.ramp_epochs <= self.epochs:
            raise ValueError("ramp_epochs must lie in (0, epochs]")
        if self.lr < 0 or self.lr_step < 1:
            raise ValueError("lr must be >= 0 and lr_step >= 1")
        if self.batch_labelled < 1 or self.batch_unlabelled < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.consistency == "npair" and self.batch_unlabelled < 2:
            raise ValueError("N-pair consistency needs batch_unlabelled >= 2")
        if not 0.0 <= self.ema_alpha <= 1.0:
            raise ValueError("ema_alpha must lie in [0, 1]")
        if self.val_every < 1:
            raise ValueError("val_every must be >= 1")
        for name, allowed in (
            ("consistency", CONSISTENCY),
            ("supervised_loss", SUPERVISED),
            ("augmentation", AUGMENTATION),
            ("eval_model", EVAL_MODELS),
        ):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")

    def policy(self) -> AugmentationPolicy:
        """Augmentation policy with the geometric switch taken from ``augmentation``."""
        return dataclasses.replace(self.augment, geometric=self.augmentation == "geometric")

    def to_dict(self) -> dict:
        return flatten_config(self)

    @classmethod
    def from_dict(cls, flat: dict) -> "TrainConfig":
        return apply_overrides(cls(), flat)


# dotted-key config plumbing


def _is_config(obj) -> bool:
    return dataclasses.is_dataclass(obj) and not isinstance(obj, type)


def flatten_config(cfg, prefix: str = "") -> dict:
    """``{"model.encoding.kind": "sinusoid", ...}`` for a nested config."""
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        key = prefix + f.name
        if _is_config(value):
            out.update(flatten_config(value, key + "."))
        elif isinstance(value, tuple):
            out[key] = list(value)
        else:
            out[key] = value
    return out


def config_keys(cfg=None) -> list[str]:
    return list(flatten_config(cfg or TrainConfig()))


def _coerce(value, current, key):
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(current, int):
        try:
            as_float = float(value)
        except (TypeError, ValueError):
            raise ValueError(f"{key}: expected an integer, got {value!r}") from None
        if not as_float.is_integer():
            raise ValueError(f"{key}: expected an integer, got {value!r}")
        return int(as_float)
    if isinstance(current, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ValueError(f"{key}: expected a number, got {value!r}") from None
    if isinstance(current, tuple):
        items = value
        if isinstance(value, str):
            items = [v for v in value.replace("(", "").replace(")", "").split(",") if v.strip()]
        items = list(items)
        if len(items) != len(current):
            raise ValueError(f"{key}: expected {len(current)} values, got {value!r}")
        return tuple(_coerce(v, c, key) for v, c in zip(items, current))
    return str(value)


def apply_overrides(cfg, overrides: dict):
    """Return a copy of ``cfg`` with dotted keys replaced; unknown keys raise KeyError."""
    nested: dict = {}
    for key, value in overrides.items():
        head, _, rest = key.partition(".")
        names = {f.name for f in dataclasses.fields(cfg)}
        if head not in names:
            raise KeyError(key)
        current = getattr(cfg, head)
        if rest:
            if not _is_config(current):
                raise KeyError(key)
            nested.setdefault(head, {})[rest] = value
        elif _is_config(current):
            raise KeyError(key)
        else:
            nested[head] = _coerce(value, current, key)
    changes = {}
    for name, value in nested.items():
        if isinstance(value, dict):
            try:
                changes[name] = apply_overrides(getattr(cfg, name), value)
            except KeyError as err:
                raise KeyError(f"{name}.{err.args[0]}") from None
        else:
            changes[name] = value
    return dataclasses.replace(cfg, **changes)


# schedules


def gamma(epoch: float, ramp_epochs: float) -> float:
    """Unsupervised weight: exp(-10 (min(T, T_rp)/T_rp - 1)^2)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if ramp_epochs <= 0:
        raise ValueError("ramp_epochs must be > 0")
    return math.exp(-10.0 * (min(epoch, ramp_epochs) / ramp_epochs - 1.0) ** 2)


def lr_at(epoch: int, base: float, step: int = 500) -> float:
    """Step decay: halve the base rate every ``step`` epochs."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return base * 0.5 ** (epoch // step)


@dataclass(frozen=True)
class ScheduleState:
    epoch: int
    gamma: float
    lr: float

    @classmethod
    def at(cls, epoch: int, cfg: TrainConfig) -> "ScheduleState":
        return cls(epoch, gamma(epoch, cfg.ramp_epochs), lr_at(epoch, cfg.lr, cfg.lr_step))


# one optimisation step


class NonFiniteLossError(RuntimeError):
    def __init__(self, message, snapshot):
        super().__init__(message)
        self.snapshot = snapshot


def _augment(x, policy, rng):
    """Warp each image by a fresh transform, then jitter its intensities."""
    h, w = x.shape[-2:]
    ts, views = [], []
    for i in range(x.shape[0]):
        t = sample_transform(policy, rng, h, w)
        views.append(photometric_jitter(warp(x[i], t), policy, rng))
        ts.append(t)
    return torch.stack(views), ts


def supervised_loss(pred, target, kind: str):
    return dice_loss(pred, target) if kind == "dice" else wbce_loss(pred, target)


def consistency_loss(student_map, teacher_map, cfg: TrainConfig):
    if cfg.consistency == "mse":
        return mse_consistency(student_map, teacher_map)
    return npair_loss(student_map, teacher_map, cfg.npair)


def train_step(
    batch_labelled,
    batch_unlabelled,
    pair: StudentTeacherPair,
    optimizer: torch.optim.Optimizer,
    cfg: TrainConfig,
    state: ScheduleState,
    rng: np.random.Generator,
) -> LossBreakdown:
    """One SGD step on ``l_sup + gamma * l_cons`` followed by the EMA update.

    Random draws come from ``rng`` in a fixed order: a transform and a jitter
    per labelled image, then (t1, jitter, t2, jitter) per unlabelled image.
    With ``consistency="none"`` the unlabelled batch is ignored.
    """
    x_l, y_l = batch_labelled
    policy = cfg.policy()
    dtype = next(pair.student.parameters()).dtype
    x_l, y_l = x_l.to(dtype), y_l.to(dtype)

    pair.student.train()
    x_aug, t_l = _augment(x_l, policy, rng)
    target = warp(y_l, t_l)
    pred = pair.student(x_aug)
    l_sup = supervised_loss(pred, target, cfg.supervised_loss)

    if cfg.consistency == "none":
        l_cons = torch.zeros((), dtype=dtype)
    else:
        if batch_unlabelled is None or len(batch_unlabelled) == 0:
            raise ValueError(f"consistency={cfg.consistency!r} needs an unlabelled batch")
        x_u = batch_unlabelled.to(dtype)
        h, w = x_u.shape[-2:]
        v1, v2, t1, t2 = [], [], [], []
        for i in range(x_u.shape[0]):
            for views, ts in ((v1, t1), (v2, t2)):
                t = sample_transform(policy, rng, h, w)
                views.append(photometric_jitter(warp(x_u[i], t), policy, rng))
                ts.append(t)
        g_student = align(pair.student(torch.stack(v1)), t1)
        with torch.no_grad():
            g_teacher = align(pair.teacher_predict(torch.stack(v2)), t2)
        l_cons = consistency_loss(g_student, g_teacher, cfg)

    breakdown = combined_loss(l_sup, l_cons, state.gamma)
    if not torch.isfinite(breakdown.l_total):
        snapshot = {
            "epoch": state.epoch,
            "gamma": state.gamma,
            "lr": state.lr,
            "l_sup": float(l_sup.detach()),
            "l_unsup": float(l_cons.detach()),
            "pred_range": [float(pred.detach().min()), float(pred.detach().max())],
            "input_finite": bool(torch.isfinite(x_l).all()),
        }
        raise NonFiniteLossError(f"non-finite loss at epoch {state.epoch}: {snapshot}", snapshot)

    optimizer.zero_grad(set_to_none=True)
    breakdown.l_total.backward()
    optimizer.step()
    pair.ema_update()
    return LossBreakdown(
        l_sup=float(l_sup.detach()),
        l_unsup=float(l_cons.detach()),
        gamma=state.gamma,
        l_total=float(breakdown.l_total.detach()),
    )


# data cycling


class UnlabelledCursor:
    """Endless shuffled batches over ``n`` items, fully determined by (cycle, pos).

    A fresh permutation is drawn per cycle; a cycle's tail shorter than a batch
    is skipped so no batch holds the same image twice.
    """

    def __init__(self, n: int, batch: int, seed: int, cycle: int = 0, pos: int = 0):
        self.n, self.batch, self.seed = n, batch, seed
        self.cycle, self.pos = cycle, pos
        self._perm = None

    def _permutation(self):
        if self._perm is None or self._perm[0] != self.cycle:
            rng = np.random.default_rng([self.seed, self.cycle, 1])
            self._perm = (self.cycle, rng.permutation(self.n))
        return self._perm[1]

    def next(self) -> np.ndarray:
        if self.n == 0:
            raise ValueError("no unlabelled data")
        size = min(self.batch, self.n)
        if self.pos + size > self.n:
            self.cycle += 1
            self.pos = 0
        idx = self._permutation()[self.pos : self.pos + size]
        self.pos += size
        return idx

    def state(self) -> dict:
        return {"cycle": self.cycle, "pos": self.pos}


# evaluation


@torch.no_grad()
def predict(model: torch.nn.Module, dataset: SegmentationDataset, batch_size: int = 16) -> list[np.ndarray]:
    """``(H, W)`` posteriors for every image, in dataset order."""
    model.eval()
    dtype = next(model.parameters()).dtype
    out: list = [None] * len(dataset)
    by_shape: dict = {}
    for i, im in enumerate(dataset.images):
        by_shape.setdefault(im.shape, []).append(i)
    for idx in by_shape.values():
        for start in range(0, len(idx), batch_size):
            chunk = idx[start : start + batch_size]
            x = torch.from_numpy(np.stack([dataset.images[i] for i in chunk])).to(dtype)
            for i, p in zip(chunk, model(x)[:, 0].double().numpy()):
                out[i] = p
    return out


def evaluate(model: torch.nn.Module, dataset: SegmentationDataset, threshold: float = 0.5) -> dict:
    """Mean and per-image IoU/F1 at ``threshold``."""
    if dataset is None or len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if dataset.masks is None:
        raise ValueError("evaluation needs masks")
    preds = predict(model, dataset)
    out = batch_metrics(preds, dataset.masks, threshold)
    out["ids"] = list(dataset.ids)
    return out


def eval_network(pair: StudentTeacherPair, which: str) -> torch.nn.Module:
    return pair.teacher if which == "teacher" else pair.student


# fitting


@contextlib.contextmanager
def determinism(enabled: bool):
    """Serialise torch on one thread with deterministic kernels while active."""
    if not enabled:
        yield
        return
    threads = torch.get_num_threads()
    was = torch.are_deterministic_algorithms_enabled()
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
    try:
        yield
    finally:
        torch.set_num_threads(threads)
        torch.use_deterministic_algorithms(was)


@dataclass
class TrainReport:
    records: list
    best_epoch: int
    best_val_iou: float | None
    pair: StudentTeacherPair
    config: TrainConfig
    seconds: float = 0.0
    test: dict | None = None

    def losses(self) -> list:
        return [(r["l_sup"], r["l_unsup"], r["l_total"]) for r in self.records]


def _epoch_batches(n: int, batch: int, rng: np.random.Generator) -> list:
    order = rng.permutation(n)
    return [order[i : i + batch] for i in range(0, n, batch)]


def save_checkpoint(path, pair, optimizer, epoch, cursor, best, records, cfg):
    """Single archive: both networks, optimizer, counters, RNG and the resolved config."""
    path = Path(path)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "student": pair.student.state_dict(),
        "teacher": pair.teacher.state_dict(),
        "ema_alpha": pair.ema_alpha,
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "epoch": epoch,
        "cursor": cursor.state() if cursor is not None else None,
        "rng": {"torch": torch.get_rng_state(), "numpy": "per-epoch streams keyed by (seed, epoch)"},
        "best": best,
        "records": records,
        "config": cfg.to_dict(),
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        torch.save(payload, tmp)
        tmp.replace(path)
    except OSError as err:
        raise OSError(f"could not write checkpoint {path}: {err}") from err


def load_checkpoint(path) -> dict:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {payload.get('format')!r}")
    return payload


def pair_from_checkpoint(payload: dict) -> tuple[StudentTeacherPair, TrainConfig]:
    cfg = TrainConfig.from_dict(payload["config"])
    pair = init_pair(cfg.model, seed=cfg.seed, ema_alpha=payload["ema_alpha"])
    try:
        pair.student.load_state_dict(payload["student"])
        pair.teacher.load_state_dict(payload["teacher"])
    except RuntimeError as err:
        raise ValueError(f"checkpoint does not match its backbone config: {err}") from None
    return pair, cfg


def _validate_data(data: Splits, cfg: TrainConfig):
    if data.labelled is None or len(data.labelled) == 0:
        raise ValueError("the labelled training set is empty")
    if data.labelled.masks is None:
        raise ValueError("the labelled training set has no masks")
    n_u = 0 if data.unlabelled is None else len(data.unlabelled)
    if cfg.consistency != "none":
        if n_u == 0:
            raise ValueError(f"consistency={cfg.consistency!r} needs unlabelled data")
        if cfg.consistency == "npair" and n_u < 2:
            raise ValueError("N-pair consistency needs at least 2 unlabelled images")
    in_ch = data.labelled.images[0].shape[0]
    if in_ch != cfg.model.in_channels:
        raise ValueError(f"images have {in_ch} channels, model expects {cfg.model.in_channels}")


def fit(
    data: Splits,
    cfg: TrainConfig,
    run_dir=None,
    resume=None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainReport:
    """Train a student/teacher pair and return the best-validation weights.

    ``data`` provides labelled, unlabelled, val and test sets (unlabelled,
    val and test may be empty). With ``run_dir`` each epoch appends to
    ``log.jsonl`` and rewrites ``last.pt``; improvements write ``best.pt``.
    Without a validation set the last epoch is kept.
    """
    _validate_data(data, cfg)
    start = time.perf_counter()
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)

    with determinism(cfg.deterministic):
        pair = init_pair(cfg.model, seed=cfg.seed, ema_alpha=cfg.ema_alpha)
        optimizer = torch.optim.SGD(
            pair.student.parameters(), lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay
        )
        n_u = 0 if data.unlabelled is None else len(data.unlabelled)
        cursor = UnlabelledCursor(n_u, cfg.batch_unlabelled, cfg.seed)
        records: list = []
        best = {"epoch": -1, "val_iou": None, "student": None, "teacher": None}
        first_epoch = 0

        if resume is not None:
            payload = resume if isinstance(resume, dict) else load_checkpoint(resume)
            if TrainConfig.from_dict(payload["config"]) != cfg:
                raise ValueError("checkpoint config differs from the requested config")
            pair.student.load_state_dict(payload["student"])
            pair.teacher.load_state_dict(payload["teacher"])
            optimizer.load_state_dict(payload["optimizer"])
            cursor = UnlabelledCursor(n_u, cfg.batch_unlabelled, cfg.seed, **payload["cursor"])
            torch.set_rng_state(payload["rng"]["torch"])
            best = payload["best"]
            records = list(payload["records"])
            first_epoch = payload["epoch"] + 1

        has_val = data.val is not None and len(data.val) > 0
        log_path = run_dir / "log.jsonl" if run_dir is not None else None
        if log_path is not None and resume is None:
            log_path.write_text("")

        for epoch in range(first_epoch, cfg.epochs):
            sched = ScheduleState.at(epoch, cfg)
            for group in optimizer.param_groups:
                group["lr"] = sched.lr
            rng = np.random.default_rng([cfg.seed, epoch, 0])
            sums = np.zeros(3)
            batches = _epoch_batches(len(data.labelled), cfg.batch_labelled, rng)
            for idx in batches:
                x_l, y_l = data.labelled.tensors(idx)
                x_u = None
                if cfg.consistency != "none":
                    x_u, _ = data.unlabelled.tensors(cursor.next())
                bd = train_step((x_l, y_l), x_u, pair, optimizer, cfg, sched, rng)
                sums += (bd.l_sup, bd.l_unsup, bd.l_total)
            means = sums / len(batches)
            record = {
                "epoch": epoch,
                "gamma": sched.gamma,
                "lr": sched.lr,
                "l_sup": float(means[0]),
                "l_unsup": float(means[1]),
                "l_total": float(means[2]),
                "steps": len(batches),
                "val_iou": None,
                "val_f1": None,
            }
            last = epoch == cfg.epochs - 1
            improved = False
            if has_val and ((epoch + 1) % cfg.val_every == 0 or last):
                metrics = evaluate(eval_network(pair, cfg.eval_model), data.val)
                record["val_iou"], record["val_f1"] = metrics["iou"], metrics["f1"]
                improved = best["val_iou"] is None or metrics["iou"] > best["val_iou"]
            elif not has_val:
                improved = last
            if improved:
                best = {
                    "epoch": epoch,
                    "val_iou": record["val_iou"],
                    "student": copy.deepcopy(pair.student.state_dict()),
                    "teacher": copy.deepcopy(pair.teacher.state_dict()),
                }
            records.append(record)
            if log_path is not None:
                with open(log_path, "a") as fh:
                    fh.write(json.dumps(record) + "\n")
                save_checkpoint(run_dir / "last.pt", pair, optimizer, epoch, cursor, best, records, cfg)
                if improved:
                    save_checkpoint(run_dir / "best.pt", pair, optimizer, epoch, cursor, best, records, cfg)
            if on_epoch is not None:
                on_epoch(record)
            log.debug("epoch %d %s", epoch, record)

        if best["student"] is not None:
            pair.student.load_state_dict(best["student"])
            pair.teacher.load_state_dict(best["teacher"])
        report = TrainReport(
            records=records,
            best_epoch=best["epoch"],
            best_val_iou=best["val_iou"],
            pair=pair,
            config=cfg,
        )
        if data.test is not None and len(data.test) > 0:
            report.test = evaluate(eval_network(pair, cfg.eval_model), data.test)
    report.seconds = time.perf_counter() - start
    return report


# ablations


def expand_grid(grid) -> list[dict]:
    """Cells from either a list of override dicts or a dict of axis -> values."""
    if isinstance(grid, dict):
        axes = list(grid)
        values = [v if isinstance(v, (list, tuple)) else [v] for v in grid.values()]
        cells = [dict(zip(axes, combo)) for combo in itertools.product(*values)]
    else:
        cells = [dict(c) for c in grid]
    for cell in cells:
        bad = set(cell) - set(ABLATION_AXES)
        if bad:
            raise ValueError(f"unsupported ablation axes {sorted(bad)}; allowed: {sorted(ABLATION_AXES)}")
    return cells


def _row_labels(cfg: TrainConfig) -> dict:
    enc = cfg.model.encoding
    return {
        "SSL": cfg.consistency != "none",
        "SupLoss": cfg.supervised_loss,
        "GeoTform": cfg.augmentation == "geometric",
        "Consist.": cfg.consistency,
        "Spt.Enc.": enc.kind,
        "K": enc.k,
        "Sim.": cfg.npair.similarity if cfg.consistency == "npair" else "-",
    }


def ablation_run(grid, base_cfg: TrainConfig, data: Splits, seeds=None, fit_fn=fit) -> list[dict]:
    """One ``fit`` per grid cell and seed; rows hold per-seed and median test metrics."""
    seeds = list(seeds) if seeds is not None else [base_cfg.seed]
    rows, seen = [], set()
    for cell in expand_grid(grid):
        cfg = apply_overrides(base_cfg, cell)
        key = json.dumps(cfg.to_dict(), sort_keys=True, default=str)
        if key in seen:
            warnings.warn(f"duplicate ablation cell {cell} skipped", stacklevel=2)
            continue
        seen.add(key)
        ious, f1s = [], []
        for seed in seeds:
            report = fit_fn(data, dataclasses.replace(cfg, seed=seed))
            metrics = report.test
            if metrics is None:
                metrics = {"iou": report.best_val_iou, "f1": None}
            ious.append(metrics["iou"])
            f1s.append(metrics["f1"])
        row = {"cell": cell, **_row_labels(cfg), "seeds": seeds, "iou_per_seed": ious, "f1_per_seed": f1s}
        row["IoU"] = statistics.median(ious) if None not in ious else None
        row["F1"] = statistics.median(f1s) if None not in f1s else None
        rows.append(row)
    return rows


TABLE_COLUMNS = ("SSL", "SupLoss", "GeoTform", "Consist.", "Spt.Enc.", "K", "Sim.", "IoU", "F1")


def format_table(rows: list[dict]) -> str:
    """Fixed-width text table; IoU and F1 in percentage points."""

    def cell(row, col):
        v = row[col]
        if col in ("IoU", "F1"):
            return "-" if v is None else f"{100 * v:.1f}"
        if isinstance(v, bool):
            return "yes" if v else "no"
        return str(v)

    body = [[cell(r, c) for c in TABLE_COLUMNS] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(TABLE_COLUMNS)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(TABLE_COLUMNS, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)
