"""Datasets, semi-supervised splits, synthetic curvilinear data and metrics."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch
from scipy import ndimage

ROLES = ("train", "train-labelled", "train-unlabelled", "val", "test")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


@dataclass
class SegmentationDataset:
    """In-memory image/mask pairs. ``masks`` is None for unlabelled data.

    Images are float32 ``(C, H, W)`` in [0, 1]; masks are uint8 ``(H, W)`` in {0, 1}.
    """

    images: list
    masks: list | None
    ids: list
    role: str = "train"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        self.images = [_as_image(im) for im in self.images]
        if len(self.ids) != len(self.images):
            raise ValueError("ids and images differ in length")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("dataset ids must be unique")
        if self.masks is not None:
            if len(self.masks) != len(self.images):
                raise ValueError("masks and images differ in length")
            self.masks = [np.asarray(m) for m in self.masks]
            for i, (im, m) in enumerate(zip(self.images, self.masks)):
                if m.shape != im.shape[1:]:
                    raise ValueError(f"{self.ids[i]}: mask {m.shape} vs image {im.shape[1:]}")
                if not np.isin(m, (0, 1)).all():
                    raise ValueError(f"{self.ids[i]}: mask is not binary")
                self.masks[i] = m.astype(np.uint8)

    def __len__(self):
        return len(self.images)

    @property
    def labelled(self) -> bool:
        return self.masks is not None

    def subset(self, indices, role=None, drop_masks=False) -> "SegmentationDataset":
        indices = list(indices)
        masks = None if (drop_masks or self.masks is None) else [self.masks[i] for i in indices]
        return SegmentationDataset(
            images=[self.images[i] for i in indices],
            masks=masks,
            ids=[self.ids[i] for i in indices],
            role=role or self.role,
        )

    def tensors(self, indices=None, dtype=torch.float32):
        """Stacked ``(N, C, H, W)`` images and ``(N, 1, H, W)`` masks (or None)."""
        idx = range(len(self)) if indices is None else indices
        x = torch.from_numpy(np.stack([self.images[i] for i in idx])).to(dtype)
        if self.masks is None:
            return x, None
        y = torch.from_numpy(np.stack([self.masks[i] for i in idx])[:, None]).to(dtype)
        return x, y

    def positive_ratio(self) -> float:
        if self.masks is None:
            raise ValueError("unlabelled dataset has no masks")
        return float(np.mean([m.mean() for m in self.masks]))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for i, im in enumerate(self.images):
            h.update(str(self.ids[i]).encode())
            h.update(np.ascontiguousarray(im).tobytes())
            if self.masks is not None:
                h.update(self.masks[i].tobytes())
        return h.hexdigest()[:16]


def _as_image(im) -> np.ndarray:
    a = np.asarray(im, dtype=np.float32)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[1] < 2 or a.shape[2] < 2:
        raise ValueError(f"image must be (C, H, W) with H, W >= 2, got {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("image has non-finite values")
    return a


# splits


@dataclass(frozen=True)
class SplitSpec:
    labelled_fraction: float = 0.05
    seed: int = 0
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    n_val: int | None = None
    n_test: int | None = None

    def __post_init__(self):
        if not 0.0 < self.labelled_fraction <= 1.0:
            raise ValueError("labelled_fraction must lie in (0, 1]")


class Splits(NamedTuple):
    labelled: SegmentationDataset
    unlabelled: SegmentationDataset
    val: SegmentationDataset
    test: SegmentationDataset


def labelled_count(n_train: int, fraction: float) -> int:
    return min(n_train, max(1, math.floor(fraction * n_train + 0.5)))


def split_counts(n: int, spec: SplitSpec) -> dict:
    n_val = spec.n_val if spec.n_val is not None else math.floor(spec.val_fraction * n)
    n_test = spec.n_test if spec.n_test is not None else math.floor(spec.test_fraction * n)
    n_train = n - n_val - n_test
    if n_train < 1:
        raise ValueError(f"no training images left from {n} (val={n_val}, test={n_test})")
    n_lab = labelled_count(n_train, spec.labelled_fraction)
    return {"train": n_train, "labelled": n_lab, "unlabelled": n_train - n_lab, "val": n_val, "test": n_test}


def make_splits(dataset: SegmentationDataset, spec: SplitSpec) -> Splits:
    """Random train/val/test split, then a labelled subset of the training images.

    Masks of the unlabelled partition are dropped.
    """
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")
    if dataset.masks is None:
        raise ValueError("splitting needs a labelled dataset")
    counts = split_counts(len(dataset), spec)
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(dataset))
    test = order[: counts["test"]]
    val = order[counts["test"] : counts["test"] + counts["val"]]
    train = order[counts["test"] + counts["val"] :]
    lab = train[: counts["labelled"]]
    unlab = train[counts["labelled"] :]
    return Splits(
        dataset.subset(sorted(lab), "train-labelled"),
        dataset.subset(sorted(unlab), "train-unlabelled", drop_masks=True),
        dataset.subset(sorted(val), "val"),
        dataset.subset(sorted(test), "test"),
    )


def split_predefined(train: SegmentationDataset, spec: SplitSpec) -> tuple:
    """Labelled/unlabelled partition of a corpus with its own train split."""
    n_lab = labelled_count(len(train), spec.labelled_fraction)
    order = np.random.default_rng(spec.seed).permutation(len(train))
    return (
        train.subset(sorted(order[:n_lab]), "train-labelled"),
        train.subset(sorted(order[n_lab:]), "train-unlabelled", drop_masks=True),
    )


# synthetic data


@dataclass(frozen=True)
class SyntheticConfig:
    size: int = 64
    curves: tuple[int, int] = (1, 3)
    stroke_width: tuple[int, int] = (1, 3)
    # per-image appearance varies so a handful of labels cannot cover it
    noise_amplitude: tuple[float, float] = (0.05, 0.2)
    noise_sigma: tuple[float, float] = (1.0, 4.0)
    pixel_noise: float = 0.05
    contrast: tuple[float, float] = (0.12, 0.35)
    background: tuple[float, float] = (0.35, 0.75)
    gradient: float = 0.3
    positive_ratio: tuple[float, float] = (0.02, 0.08)
    seed: int = 0
    max_tries: int = 200

    def __post_init__(self):
        lo, hi = self.positive_ratio
        if not 0.0 < lo <= hi < 1.0:
            raise ValueError(f"infeasible positive ratio range {self.positive_ratio}")
        if self.size < 8:
            raise ValueError("synthetic images must be at least 8x8")
        if not 1 <= self.curves[0] <= self.curves[1]:
            raise ValueError("curve count range invalid")
        if not 1 <= self.stroke_width[0] <= self.stroke_width[1]:
            raise ValueError("stroke width range invalid")


def _bezier(ctrl: np.ndarray, n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    p0, p1, p2, p3 = ctrl
    return (1 - t) ** 3 * p0 + 3 * (1 - t) ** 2 * t * p1 + 3 * (1 - t) * t**2 * p2 + t**3 * p3


def _draw_curve(mask: np.ndarray, rng: np.random.Generator, width: int):
    size = mask.shape[0]
    lo, hi = 2.0, size - 3.0
    while True:
        p0, p3 = rng.uniform(lo, hi, size=(2, 2))
        if np.linalg.norm(p3 - p0) >= size / 2:
            break
    mids = rng.uniform(lo, hi, size=(2, 2))
    pts = _bezier(np.stack([p0, mids[0], mids[1], p3]), 8 * size)
    # consecutive samples are < 0.5 px apart, so rounding gives an 8-connected path
    ij = np.rint(pts).astype(int)
    if width == 1:
        mask[ij[:, 1], ij[:, 0]] = 1
        return
    r = width / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    for x, y in pts[:: max(1, int(len(pts) / (4 * size)))]:
        mask[(xx - x) ** 2 + (yy - y) ** 2 <= r * r] = 1


def synthetic_sample(cfg: SyntheticConfig, rng: np.random.Generator):
    """One ``(image (1,H,W) float32, mask (H,W) uint8)`` pair within the ratio range."""
    s = cfg.size
    for _ in range(cfg.max_tries):
        mask = np.zeros((s, s), dtype=np.uint8)
        n_curves = rng.integers(cfg.curves[0], cfg.curves[1] + 1)
        for _ in range(n_curves):
            _draw_curve(mask, rng, int(rng.integers(cfg.stroke_width[0], cfg.stroke_width[1] + 1)))
        ratio = mask.mean()
        if cfg.positive_ratio[0] <= ratio <= cfg.positive_ratio[1]:
            break
    else:
        raise ValueError(f"could not reach positive ratio {cfg.positive_ratio} in {cfg.max_tries} tries")
    sigma = rng.uniform(*cfg.noise_sigma)
    texture = ndimage.gaussian_filter(rng.standard_normal((s, s)), sigma, mode="wrap")
    texture /= texture.std() + 1e-12
    amp = rng.uniform(*cfg.noise_amplitude)
    dip = rng.uniform(*cfg.contrast)
    soft = ndimage.gaussian_filter(mask.astype(np.float64), 0.7)
    soft /= soft.max()
    # linear illumination ramp in a random direction, zero mean over the image
    angle = rng.uniform(0.0, 2.0 * np.pi)
    yy, xx = (np.mgrid[0:s, 0:s] - (s - 1) / 2.0) / (s - 1)
    ramp = cfg.gradient * (np.cos(angle) * xx + np.sin(angle) * yy)
    img = rng.uniform(*cfg.background) + ramp + amp * texture - dip * soft
    img += cfg.pixel_noise * rng.standard_normal((s, s))
    return np.clip(img, 0.0, 1.0).astype(np.float32)[None], mask


def generate_synthetic(cfg: SyntheticConfig = SyntheticConfig(), n: int = 100) -> SegmentationDataset:
    """``n`` reproducible textured images with thin dark curves and their masks."""
    if n < 1:
        raise ValueError("n must be >= 1")
    images, masks = [], []
    for i in range(n):
        img, m = synthetic_sample(cfg, np.random.default_rng([cfg.seed, i]))
        images.append(img)
        masks.append(m)
    return SegmentationDataset(images, masks, [f"syn{i:05d}" for i in range(n)])


# metrics


def _binarize(pred, threshold):
    a = pred.detach().cpu().numpy() if isinstance(pred, torch.Tensor) else np.asarray(pred)
    return a >= threshold


def confusion(pred, target, threshold: float = 0.5) -> tuple[int, int, int, int]:
    """``(tp, fp, fn, tn)`` of a thresholded prediction."""
    p = _binarize(pred, threshold)
    y = _binarize(target, 0.5)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {y.shape}")
    tp = int(np.count_nonzero(p & y))
    fp = int(np.count_nonzero(p & ~y))
    fn = int(np.count_nonzero(~p & y))
    return tp, fp, fn, p.size - tp - fp - fn


def iou(pred, target, threshold: float = 0.5) -> float:
    tp, fp, fn, _ = confusion(pred, target, threshold)
    union = tp + fp + fn
    return 1.0 if union == 0 else tp / union


def f1(pred, target, threshold: float = 0.5) -> float:
    tp, fp, fn, _ = confusion(pred, target, threshold)
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


def batch_metrics(preds, targets, threshold: float = 0.5) -> dict:
    """Per-image IoU/F1 lists and their means."""
    ious = [iou(p, t, threshold) for p, t in zip(preds, targets)]
    f1s = [f1(p, t, threshold) for p, t in zip(preds, targets)]
    return {
        "iou": float(np.mean(ious)) if ious else float("nan"),
        "f1": float(np.mean(f1s)) if f1s else float("nan"),
        "per_image_iou": ious,
        "per_image_f1": f1s,
    }


# files


def binarize_mask(raw: np.ndarray) -> np.ndarray:
    """Threshold at half the mask's maximum value, whatever the bit depth."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim == 3:
        raw = raw.max(axis=-1)
    top = raw.max()
    if top <= 0:
        return np.zeros(raw.shape, dtype=np.uint8)
    return (raw >= 0.5 * top).astype(np.uint8)


def read_image(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        a = np.asarray(im)
    if a.dtype == np.uint8:
        a = a / 255.0
    elif a.dtype == np.uint16:
        a = a / 65535.0
    elif a.dtype == bool:
        a = a.astype(np.float64)
    a = np.asarray(a, dtype=np.float32)
    return a[None] if a.ndim == 2 else np.moveaxis(a[..., :3], -1, 0)


def read_mask(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return binarize_mask(np.asarray(im))


def _find(folder: Path, stem: str) -> Path:
    for suf in IMAGE_SUFFIXES:
        p = folder / f"{stem}{suf}"
        if p.exists():
            return p
    raise FileNotFoundError(f"no image file for id {stem!r} in {folder}")


def read_manifest(path) -> list[str]:
    lines = Path(path).read_text().splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.startswith("#")]


def load_directory(root, manifest: str | None = None, role="train", patch_size: int | None = None):
    """Load ``root/images`` and ``root/masks`` for the ids listed in a manifest.

    Without ``manifest`` every image in ``images/`` is used. With ``patch_size``
    each image is cut into non-overlapping patches in raster order.
    """
    root = Path(root)
    img_dir, mask_dir = root / "images", root / "masks"
    if manifest is not None:
        ids = read_manifest(root / manifest)
    else:
        ids = sorted(p.stem for p in img_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    images, masks, out_ids = [], [], []
    has_masks = mask_dir.is_dir()
    for stem in ids:
        img = read_image(_find(img_dir, stem))
        m = read_mask(_find(mask_dir, stem)) if has_masks else None
        if patch_size:
            ip = extract_patches(img, patch_size)
            mp = extract_patches(m[None], patch_size) if m is not None else [None] * len(ip)
            for k, (a, b) in enumerate(zip(ip, mp)):
                images.append(a)
                masks.append(None if b is None else b[0])
                out_ids.append(f"{stem}_{k}")
        else:
            images.append(img)
            masks.append(m)
            out_ids.append(stem)
    if not images:
        raise ValueError(f"no images found under {root}")
    return SegmentationDataset(images, masks if has_masks else None, out_ids, role=role)


def load_corpus(root, patch_size=None) -> dict:
    """Datasets for whichever of ``train.txt``/``val.txt``/``test.txt`` exist."""
    root = Path(root)
    out = {}
    for split, role in (("train", "train"), ("val", "val"), ("test", "test")):
        if (root / f"{split}.txt").exists():
            out[split] = load_directory(root, f"{split}.txt", role=role, patch_size=patch_size)
    if not out:
        out["all"] = load_directory(root, patch_size=patch_size)
    return out


def extract_patches(arr: np.ndarray, size: int) -> list[np.ndarray]:
    """Non-overlapping ``size x size`` patches of a ``(C, H, W)`` array, raster order.

    Incomplete border strips are dropped.
    """
    _, h, w = arr.shape
    return [arr[:, r : r + size, c : c + size] for r in range(0, h - size + 1, size) for c in range(0, w - size + 1, size)]


def export_dataset(ds: SegmentationDataset, root, manifest: str = "manifest.txt") -> Path:
    """Write 8-bit grayscale PNGs to ``root/images`` and ``root/masks`` plus an id list."""
    from PIL import Image

    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    if ds.masks is not None:
        (root / "masks").mkdir(parents=True, exist_ok=True)
    for i, sid in enumerate(ds.ids):
        im = ds.images[i]
        arr = np.rint(np.clip(im[0] if im.shape[0] == 1 else np.moveaxis(im, 0, -1), 0, 1) * 255).astype(np.uint8)
        Image.fromarray(arr).save(root / "images" / f"{sid}.png")
        if ds.masks is not None:
            Image.fromarray(ds.masks[i] * 255).save(root / "masks" / f"{sid}.png")
    path = root / manifest
    path.write_text("\n".join(ds.ids) + "\n")
    return path
