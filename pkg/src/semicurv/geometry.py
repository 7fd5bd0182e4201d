"""Differentiable affine warping with mirror extrapolation.

Coordinates follow the image convention ``(x, y) = (column, row)``. A transform
``H`` maps source pixel positions to output positions, so every output pixel
``p`` is filled by bilinear sampling of the source at ``H^-1 p``. Samples that
fall outside the image are reflected back in (``dcb|abcd|cba``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from . import _backend


class DegenerateTransformError(ValueError):
    """Raised for affine transforms whose linear part is (nearly) singular."""


_DET_EPS = 1e-8


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """A 3x3 affine matrix ``[[a11, a12, dx], [a21, a22, dy], [0, 0, 1]]``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape == (2, 3):
            m = np.vstack([m, [0.0, 0.0, 1.0]])
        if m.shape != (3, 3):
            raise ValueError(f"affine matrix must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("affine matrix has non-finite entries")
        m[2] = (0.0, 0.0, 1.0)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def linear(self) -> np.ndarray:
        return self.matrix[:2, :2]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:2, 2]

    @property
    def det(self) -> float:
        a = self.matrix
        return float(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])

    def is_degenerate(self) -> bool:
        return abs(self.det) <= _DET_EPS

    def __matmul__(self, other: "AffineTransform") -> "AffineTransform":
        return AffineTransform(self.matrix @ other.matrix)

    def __eq__(self, other):
        if not isinstance(other, AffineTransform):
            return NotImplemented
        return bool(np.array_equal(self.matrix, other.matrix))

    def __hash__(self):
        return hash(self.matrix.tobytes())

    def __repr__(self):
        rows = ", ".join(str(list(np.round(r, 6))) for r in self.matrix[:2])
        return f"AffineTransform([{rows}])"

    def inverse(self) -> "AffineTransform":
        return invert(self)

    def apply(self, points) -> np.ndarray:
        """Map an array of ``(..., 2)`` points ``(x, y)``."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.linear.T + self.translation

    # constructors

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.eye(3))

    @classmethod
    def translate(cls, dx: float, dy: float) -> "AffineTransform":
        return cls([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]])

    @classmethod
    def rotate(cls, degrees: float) -> "AffineTransform":
        c, s = _cos_sin_degrees(degrees)
        return cls([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    @classmethod
    def scale(cls, sx: float, sy: float | None = None) -> "AffineTransform":
        sy = sx if sy is None else sy
        return cls([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])

    @classmethod
    def shear(cls, degrees: float) -> "AffineTransform":
        k = 0.0 if degrees == 0 else math.tan(math.radians(degrees))
        return cls([[1.0, k, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])

    def about(self, cx: float, cy: float) -> "AffineTransform":
        """Conjugate by a translation so the transform pivots on ``(cx, cy)``."""
        return AffineTransform.translate(cx, cy) @ self @ AffineTransform.translate(-cx, -cy)


def _cos_sin_degrees(degrees: float) -> tuple[float, float]:
    # exact values on the quarter turns keep dihedral round trips bitwise
    q, r = divmod(float(degrees), 90.0)
    if r == 0.0:
        return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][int(q) % 4]
    rad = math.radians(degrees)
    return math.cos(rad), math.sin(rad)


def image_center(height: int, width: int) -> tuple[float, float]:
    return (width - 1) / 2.0, (height - 1) / 2.0


def invert(t: AffineTransform) -> AffineTransform:
    """Exact inverse of an affine transform."""
    if t.is_degenerate():
        raise DegenerateTransformError(f"singular linear part (det={t.det:.3e})")
    a, b = t.linear[0]
    c, d = t.linear[1]
    det = a * d - b * c
    inv = np.array([[d, -b], [-c, a]]) / det
    out = np.eye(3)
    out[:2, :2] = inv
    out[:2, 2] = -inv @ t.translation
    return AffineTransform(out)


@dataclass(frozen=True)
class AugmentationPolicy:
    """Ranges from which random geometric and photometric augmentations are drawn.

    Angles are in degrees, translation is a fraction of the image side.
    """

    rotation: tuple[float, float] = (-180.0, 180.0)
    scale: tuple[float, float] = (0.8, 1.2)
    shear: tuple[float, float] = (-10.0, 10.0)
    translation: tuple[float, float] = (-0.25, 0.25)
    brightness: tuple[float, float] = (-0.2, 0.2)
    contrast: tuple[float, float] = (-0.2, 0.2)
    geometric: bool = True
    photometric: bool = True
    seed: int = 0
    require_identity: bool = True

    def __post_init__(self):
        neutral = {
            "rotation": 0.0,
            "scale": 1.0,
            "shear": 0.0,
            "translation": 0.0,
            "brightness": 0.0,
            "contrast": 0.0,
        }
        for name, mid in neutral.items():
            lo, hi = (float(v) for v in getattr(self, name))
            if lo > hi:
                raise ValueError(f"{name} range ({lo}, {hi}) is empty")
            if self.require_identity and not lo <= mid <= hi:
                raise ValueError(f"{name} range ({lo}, {hi}) must bracket {mid}")
            object.__setattr__(self, name, (lo, hi))
        if self.scale[0] <= 0:
            raise ValueError("scale range must be positive")
        if not -90.0 < self.shear[0] <= self.shear[1] < 90.0:
            raise ValueError("shear range must lie inside (-90, 90) degrees")

    @classmethod
    def neutral(cls, **overrides) -> "AugmentationPolicy":
        base = dict(
            rotation=(0.0, 0.0),
            scale=(1.0, 1.0),
            shear=(0.0, 0.0),
            translation=(0.0, 0.0),
            brightness=(0.0, 0.0),
            contrast=(0.0, 0.0),
        )
        base.update(overrides)
        return cls(**base)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def sample_transform(
    policy: AugmentationPolicy, rng: np.random.Generator, height: int, width: int
) -> AffineTransform:
    """Draw ``translation @ rotation @ shear @ scale`` pivoting on the image center.

    Always consumes five uniforms so the stream stays aligned whatever the ranges.
    """
    angle = rng.uniform(*policy.rotation)
    s = rng.uniform(*policy.scale)
    sh = rng.uniform(*policy.shear)
    tx = rng.uniform(*policy.translation) * width
    ty = rng.uniform(*policy.translation) * height
    if not policy.geometric:
        return AffineTransform.identity()
    t = (
        AffineTransform.translate(tx, ty)
        @ AffineTransform.rotate(angle)
        @ AffineTransform.shear(sh)
        @ AffineTransform.scale(s)
    )
    cx, cy = image_center(height, width)
    return t.about(cx, cy)


def photometric_jitter(img: torch.Tensor, policy: AugmentationPolicy, rng: np.random.Generator):
    """Random brightness shift and contrast scaling about the mean, clipped to [0, 1].

    Works on ``(C, H, W)``; images only, never masks or predictions.
    """
    b = rng.uniform(*policy.brightness)
    c = rng.uniform(*policy.contrast)
    if not policy.photometric:
        return img
    mean = img.mean()
    return ((img - mean) * (1.0 + c) + mean + b).clamp(0.0, 1.0)


def mirror_index(x, width: int):
    """Reflect coordinate(s) into ``[0, width-1]`` with period ``2(width-1)``.

    The edge sample is not repeated: over ``abcd`` the indices -3..6 read
    ``dcb|abcd|cba``.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    scalar = np.isscalar(x)
    x = np.asarray(x, dtype=np.float64)
    if width == 1:
        out = np.zeros_like(x)
    else:
        period = 2.0 * (width - 1)
        m = np.mod(x, period)
        out = np.where(m > width - 1, period - m, m)
    return float(out) if scalar else out


def sampling_grid(t: AffineTransform, height: int, width: int, out_shape=None) -> np.ndarray:
    """Source coordinates ``(Ho, Wo, 2)`` read by each output pixel under ``t``."""
    ho, wo = out_shape if out_shape is not None else (height, width)
    inv = invert(t).matrix
    ys, xs = np.meshgrid(np.arange(ho, dtype=np.float64), np.arange(wo, dtype=np.float64), indexing="ij")
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    return np.ascontiguousarray(np.stack([sx, sy], axis=-1))


class _MirrorSample(torch.autograd.Function):
    @staticmethod
    def forward(ctx, src, coords, kernels):
        ctx.coords = coords
        ctx.kernels = kernels
        ctx.src_shape = src.shape
        s = np.ascontiguousarray(src.detach().cpu().numpy())
        out = np.empty((s.shape[0], s.shape[1]) + coords.shape[1:3], dtype=s.dtype)
        kernels.sample_forward(s, coords, out)
        return torch.from_numpy(out).to(src.device)

    @staticmethod
    def backward(ctx, grad_out):
        g = np.ascontiguousarray(grad_out.detach().cpu().numpy())
        grad_src = np.zeros(ctx.src_shape, dtype=g.dtype)
        ctx.kernels.sample_backward(g, ctx.coords, grad_src)
        return torch.from_numpy(grad_src).to(grad_out.device), None, None


def _as_batch(transforms, n):
    if isinstance(transforms, AffineTransform):
        return [transforms] * n
    transforms = list(transforms)
    if len(transforms) != n:
        raise ValueError(f"got {len(transforms)} transforms for a batch of {n}")
    return transforms


def warp(img, t: AffineTransform | Sequence[AffineTransform], backend: str | None = None):
    """Resample ``img`` under ``t`` with bilinear interpolation and mirror padding.

    ``img`` is ``(C, H, W)`` or ``(N, C, H, W)``, a torch tensor (differentiable
    w.r.t. its values) or a numpy array. For batches ``t`` may be one transform
    or one per item.
    """
    as_numpy = isinstance(img, np.ndarray)
    x = torch.from_numpy(np.ascontiguousarray(img)) if as_numpy else img
    if x.dim() not in (3, 4):
        raise ValueError(f"expected (C,H,W) or (N,C,H,W), got shape {tuple(x.shape)}")
    single = x.dim() == 3
    if single:
        x = x.unsqueeze(0)
    if not x.is_floating_point():
        x = x.to(torch.float64)
    n, _, h, w = x.shape
    coords = np.stack([sampling_grid(ti, h, w) for ti in _as_batch(t, n)])
    out = _MirrorSample.apply(x.contiguous(), coords, _backend.get_kernels(backend))
    if single:
        out = out.squeeze(0)
    return out.numpy() if as_numpy else out


def align(pred, t: AffineTransform | Sequence[AffineTransform], backend: str | None = None):
    """Undo ``t`` on a prediction made in the augmented frame, clamped to [0, 1]."""
    if isinstance(t, AffineTransform):
        inv = invert(t)
    else:
        inv = [invert(ti) for ti in t]
    out = warp(pred, inv, backend=backend)
    if isinstance(out, np.ndarray):
        return np.clip(out, 0.0, 1.0)
    return out.clamp(0.0, 1.0)
