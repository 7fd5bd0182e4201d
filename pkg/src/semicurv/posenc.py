"""Spatial coordinate channels appended to encoder feature maps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import torch

KINDS = ("none", "linear", "sinusoid")


@dataclass(frozen=True)
class PositionalEncoding:
    kind: str = "sinusoid"
    k: float = 4.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"encoding kind must be one of {KINDS}, got {self.kind!r}")
        if self.k <= 0:
            raise ValueError("period parameter K must be positive")

    @property
    def channels(self) -> int:
        return 0 if self.kind == "none" else 2


def _unit_coords(n: int) -> torch.Tensor:
    # a single sample sits at 0
    if n == 1:
        return torch.zeros(1, dtype=torch.float64)
    return torch.linspace(0.0, 1.0, n, dtype=torch.float64)


@lru_cache(maxsize=64)
def _encode_cached(height: int, width: int, kind: str, k: float) -> torch.Tensor:
    sx = _unit_coords(width)[None, :].expand(height, width)
    sy = _unit_coords(height)[:, None].expand(height, width)
    if kind == "linear":
        out = torch.stack([sx, sy])
    else:
        out = torch.stack([torch.sin(k * math.pi * sx), torch.cos(k * math.pi * sy)])
    return out.contiguous()


def encode(height: int, width: int, cfg: PositionalEncoding = PositionalEncoding()) -> torch.Tensor:
    """Two-channel ``(2, height, width)`` map in float64.

    Channel 0 varies along the width, channel 1 along the height; both
    coordinates run over [0, 1] inclusive before the sinusoid is applied.
    """
    if height < 1 or width < 1:
        raise ValueError("height and width must be >= 1")
    if cfg.kind == "none":
        return torch.zeros(0, height, width, dtype=torch.float64)
    return _encode_cached(height, width, cfg.kind, float(cfg.k)).clone()


def attach(features: torch.Tensor, cfg: PositionalEncoding) -> torch.Tensor:
    """Concatenate the encoding as the last two channels of ``(C,h,w)`` or ``(N,C,h,w)``."""
    if cfg.kind == "none":
        return features
    h, w = features.shape[-2:]
    enc = _encode_cached(h, w, cfg.kind, float(cfg.k)).to(dtype=features.dtype, device=features.device)
    if features.dim() == 4:
        enc = enc.unsqueeze(0).expand(features.shape[0], -1, -1, -1)
    return torch.cat([features, enc], dim=-3)
