"""Residual UNet backbone and the mean-teacher student/teacher pair."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .posenc import PositionalEncoding, attach


@dataclass(frozen=True)
class BackboneConfig:
    in_channels: int = 1
    base_channels: int = 16
    depth: int = 4
    encoding: PositionalEncoding = field(default_factory=PositionalEncoding)

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.in_channels < 1 or self.base_channels < 1:
            raise ValueError("channel counts must be positive")

    def stage_channels(self, s: int) -> int:
        return self.base_channels * 2**s

    def encoder_channels(self) -> list[int]:
        """Channels of each encoder stage output, coordinate channels included."""
        return [self.stage_channels(s) + self.encoding.channels for s in range(self.depth)]


class ResidualBlock(nn.Module):
    """Two conv-BN-ReLU layers with an additive skip (1x1 projection on width change)."""

    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        if in_channels != out_channels:
            self.proj = nn.Conv2d(in_channels, out_channels, 1, bias=False)
        else:
            self.proj = nn.Identity()

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.proj(x))


class ResUNet(nn.Module):
    def __init__(self, config: BackboneConfig = BackboneConfig()):
        super().__init__()
        self.config = config
        enc_ch = config.encoder_channels()
        self.encoder = nn.ModuleList()
        for s in range(config.depth):
            cin = config.in_channels if s == 0 else enc_ch[s - 1]
            self.encoder.append(ResidualBlock(cin, config.stage_channels(s)))
        self.up = nn.ModuleList()
        self.decoder = nn.ModuleList()
        prev = enc_ch[-1]
        for s in reversed(range(config.depth - 1)):
            width = config.stage_channels(s)
            self.up.append(nn.ConvTranspose2d(prev, width, 2, stride=2))
            self.decoder.append(ResidualBlock(width + enc_ch[s], width))
            prev = width
        self.head = nn.Conv2d(prev, 1, 1)

    @property
    def multiple(self) -> int:
        return 2 ** (self.config.depth - 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Foreground posterior ``(N, 1, H, W)`` for input ``(N, C, H, W)``."""
        squeeze = x.dim() == 3
        if squeeze:
            x = x.unsqueeze(0)
        if x.dim() != 4 or x.shape[1] != self.config.in_channels:
            raise ValueError(
                f"expected (N, {self.config.in_channels}, H, W) input, got {tuple(x.shape)}"
            )
        h, w = x.shape[-2:]
        m = self.multiple
        pad_h, pad_w = (-h) % m, (-w) % m
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h), mode="replicate")
        skips = []
        for s, block in enumerate(self.encoder):
            if s > 0:
                x = F.max_pool2d(x, 2)
            x = attach(block(x), self.config.encoding)
            skips.append(x)
        for up, block, skip in zip(self.up, self.decoder, reversed(skips[:-1])):
            x = block(torch.cat([up(x), skip], dim=1))
        out = torch.sigmoid(self.head(x))[..., :h, :w]
        return out.squeeze(0) if squeeze else out


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


class StudentTeacherPair:
    """A trainable student and its exponential-moving-average teacher."""

    def __init__(self, student: nn.Module, teacher: nn.Module | None = None, ema_alpha: float = 0.999):
        if not 0.0 <= ema_alpha <= 1.0:
            raise ValueError("ema_alpha must lie in [0, 1]")
        self.student = student
        self.teacher = copy.deepcopy(student) if teacher is None else teacher
        self.ema_alpha = ema_alpha
        self._check_shapes()
        for p in self.teacher.parameters():
            p.requires_grad_(False)
        self.teacher.eval()

    def _check_shapes(self):
        s = dict(self.student.named_parameters())
        t = dict(self.teacher.named_parameters())
        if s.keys() != t.keys() or any(s[k].shape != t[k].shape for k in s):
            raise ValueError("student and teacher parameter shapes differ")

    @torch.no_grad()
    def ema_update(self):
        """teacher <- alpha * teacher + (1 - alpha) * student; buffers are copied."""
        a = self.ema_alpha
        for t, s in zip(self.teacher.parameters(), self.student.parameters()):
            if t.shape != s.shape:
                raise ValueError("student and teacher parameter shapes differ")
            t.mul_(a).add_(s.detach(), alpha=1.0 - a)
        for t, s in zip(self.teacher.buffers(), self.student.buffers()):
            t.copy_(s)
        return self

    @torch.no_grad()
    def teacher_predict(self, x):
        self.teacher.eval()
        return self.teacher(x)

    def state_dict(self):
        return {
            "student": self.student.state_dict(),
            "teacher": self.teacher.state_dict(),
            "ema_alpha": self.ema_alpha,
        }

    def load_state_dict(self, state):
        self.student.load_state_dict(state["student"])
        self.teacher.load_state_dict(state["teacher"])
        self.ema_alpha = state["ema_alpha"]


def ema_update(pair: StudentTeacherPair) -> StudentTeacherPair:
    return pair.ema_update()


def init_pair(config: BackboneConfig = BackboneConfig(), seed: int = 0, ema_alpha: float = 0.999,
              dtype=torch.float32) -> StudentTeacherPair:
    """Fresh student (PyTorch's fan-in uniform init) and an exact teacher copy."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        student = ResUNet(config).to(dtype)
    return StudentTeacherPair(student, ema_alpha=ema_alpha)
