"""Training objectives for semi-supervised curvilinear segmentation.

All losses take prediction maps with values in [0, 1]. Batched inputs carry
the batch on the leading axis (``(N, H, W)`` or ``(N, 1, H, W)``); a plain
``(H, W)`` map is treated as a batch of one. Teacher maps are always detached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

DELTA = 1e-7


@dataclass(frozen=True)
class NPairConfig:
    temperature: float = 0.5
    delta: float = DELTA
    similarity: str = "cosine"  # or "l2"

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.similarity not in ("cosine", "l2"):
            raise ValueError(f"unknown similarity {self.similarity!r}")


@dataclass
class LossBreakdown:
    l_sup: torch.Tensor | float
    l_unsup: torch.Tensor | float
    gamma: float
    l_total: torch.Tensor | float

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in vars(self).items()}


def _flat(x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 2:
        return x.reshape(1, -1)
    return x.reshape(x.shape[0], -1)


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def dice_loss(pred: torch.Tensor, target: torch.Tensor, delta: float = DELTA) -> torch.Tensor:
    """Soft Dice loss per image, averaged over the batch."""
    _check_same_shape(pred, target)
    p = _flat(pred) + delta
    y = _flat(target).to(p.dtype) + delta
    inter = (p * y).sum(dim=1)
    denom = p.abs().sum(dim=1) + y.abs().sum(dim=1)
    return (1.0 - 2.0 * inter / denom).mean()


def wbce_loss(pred: torch.Tensor, target: torch.Tensor, eps: float = 1e-7) -> torch.Tensor:
    """Binary cross entropy weighted by inverse class frequency over the batch.

    Positives get ``n / 2p`` and negatives ``n / 2(n-p)``; a batch with a single
    class falls back to unweighted BCE.
    """
    _check_same_shape(pred, target)
    p = pred.clamp(eps, 1.0 - eps)
    y = target.to(p.dtype)
    n = y.numel()
    pos = float(y.sum())
    if 0 < pos < n:
        w_pos, w_neg = n / (2.0 * pos), n / (2.0 * (n - pos))
    else:
        w_pos = w_neg = 1.0
    return -(w_pos * y * torch.log(p) + w_neg * (1.0 - y) * torch.log1p(-p)).mean()


def mse_consistency(student: torch.Tensor, teacher: torch.Tensor) -> torch.Tensor:
    """Squared Frobenius distance normalised by the number of pixels."""
    _check_same_shape(student, teacher)
    return ((student - teacher.detach()) ** 2).mean()


def cosine_sim(a: torch.Tensor, b: torch.Tensor, delta: float = DELTA) -> torch.Tensor:
    """Cosine similarity of two maps after shifting both by ``delta``."""
    _check_same_shape(a, b)
    u = a.reshape(-1) + delta
    v = b.reshape(-1) + delta
    return (u @ v) / (u.norm() * v.norm())


def l2_sim_logits(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Negative Euclidean distance, the logit of the RBF-style similarity."""
    _check_same_shape(a, b)
    return -torch.linalg.vector_norm(a.reshape(-1) - b.reshape(-1))


def similarity_logits(student, teacher, cfg: NPairConfig) -> torch.Tensor:
    """``(N, N)`` matrix of softmax logits; row i is anchor student_i."""
    s = _flat(student)
    t = _flat(teacher).detach().to(s.dtype)
    if cfg.similarity == "cosine":
        s = s + cfg.delta
        t = t + cfg.delta
        sim = (s / s.norm(dim=1, keepdim=True)) @ (t / t.norm(dim=1, keepdim=True)).T
        return sim / cfg.temperature
    diff = s[:, None, :] - t[None, :, :]
    sq = (diff**2).sum(dim=-1)
    # keep the gradient finite (zero) where a == b
    nonzero = sq > 0
    safe = torch.where(nonzero, sq, torch.ones_like(sq))
    return -torch.where(nonzero, safe.sqrt(), torch.zeros_like(sq))


def npair_loss(student, teacher, cfg: NPairConfig | None = None) -> torch.Tensor:
    """N-pair consistency: positive pair (student_i, teacher_i), negatives teacher_j, j != i.

    The softmax denominator runs over the whole batch, positive included.
    With L2 similarity the logits are the raw negative distances (no temperature).
    """
    cfg = cfg or NPairConfig()
    if isinstance(student, (list, tuple)):
        student = torch.stack(list(student))
    if isinstance(teacher, (list, tuple)):
        teacher = torch.stack(list(teacher))
    _check_same_shape(student, teacher)
    n = student.shape[0]
    if n < 2:
        raise ValueError("N-pair loss needs a batch of at least 2")
    logits = similarity_logits(student, teacher, cfg)
    return F.cross_entropy(logits, torch.arange(n, device=logits.device))


def combined_loss(l_sup, l_unsup, gamma: float) -> LossBreakdown:
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return LossBreakdown(l_sup=l_sup, l_unsup=l_unsup, gamma=gamma, l_total=l_sup + gamma * l_unsup)


def collapsed_npair_value(batch_size: int) -> float:
    """N-pair loss when every prediction is the same constant map."""
    return math.log(batch_size)


def matched_npair_value(batch_size: int, cross_similarity: float, temperature: float) -> float:
    """N-pair loss for perfect positives (similarity 1) and uniform negatives."""
    return math.log1p((batch_size - 1) * math.exp((cross_similarity - 1.0) / temperature))
