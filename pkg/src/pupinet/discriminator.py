"""3D patch discriminator, adaptive augmentation controller, and the
differentiable paired augmentation pipeline.

The discriminator scores (condition, candidate) volume pairs concatenated on
channels and emits a logits grid, one logit per receptive patch. The ADA
controller tracks an EMA of sign(D(real)) as the overfitting signal r_t and
nudges the augmentation probability p toward the point where r_t sits at the
target. Augmentations are applied to both real and generated pairs right
before the discriminator — never to generator outputs as seen by the
reconstruction/supervision losses — and the transform drawn for a pair is
shared by its condition and candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

__all__ = [
    "PatchDiscriminator3d",
    "AdaState",
    "ada_update",
    "AugParams",
    "sample_aug_params",
    "apply_aug",
    "augment_pair",
]


class PatchDiscriminator3d(nn.Module):
    """k stride-2 conv stages (no norm on the first), then a 1-logit head."""

    def __init__(self, in_channels: int = 2, base_width: int = 16, n_layers: int = 3):
        super().__init__()
        if n_layers < 1:
            raise ValueError("need at least one stride-2 stage")
        layers = [
            nn.Conv3d(in_channels, base_width, kernel_size=4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        c = base_width
        for _ in range(n_layers - 1):
            layers += [
                nn.Conv3d(c, 2 * c, kernel_size=4, stride=2, padding=1),
                nn.InstanceNorm3d(2 * c),
                nn.LeakyReLU(0.2, inplace=True),
            ]
            c *= 2
        layers.append(nn.Conv3d(c, 1, kernel_size=3, stride=1, padding=1))
        self.net = nn.Sequential(*layers)
        self.n_layers = n_layers

    def forward(self, condition: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        if condition.shape != candidate.shape:
            raise ValueError(
                f"condition/candidate dims differ: {tuple(condition.shape)} vs {tuple(candidate.shape)}"
            )
        return self.net(torch.cat([condition, candidate], dim=1))


# ---------------------------------------------------------------------------
# ADA controller
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdaState:
    p: float = 0.0
    target_rt: float = 0.6
    step_size: float = 0.01
    interval: int = 4
    ema_rt: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0,1], got {self.p}")
        if self.interval < 1:
            raise ValueError("interval must be >= 1")
        if self.ema_rt is None:
            # start the overfitting estimate at the setpoint so the controller
            # is initially neutral rather than biased toward shrinking p
            object.__setattr__(self, "ema_rt", self.target_rt)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "target_rt": self.target_rt,
            "step_size": self.step_size,
            "interval": self.interval,
            "ema_rt": self.ema_rt,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdaState":
        return cls(**d)


def ada_update(state: AdaState, d_real_signs) -> AdaState:
    """One controller step from a batch of sign(D(real)) values in {-1, 0, +1}."""
    signs = np.asarray(d_real_signs, dtype=np.float64)
    if signs.size == 0:
        raise ValueError("need at least one sign")
    ema = 0.95 * state.ema_rt + 0.05 * float(signs.mean())
    direction = math.copysign(1.0, ema - state.target_rt) if ema != state.target_rt else 0.0
    p = min(1.0, max(0.0, state.p + state.step_size * direction))
    return replace(state, p=p, ema_rt=ema)


# ---------------------------------------------------------------------------
# differentiable paired augmentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AugParams:
    """One sampled transform; identity fields mean the op was not drawn."""

    flip_h: bool = False
    flip_w: bool = False
    translate: tuple[int, int] = (0, 0)  # (dh, dw)
    scale: float = 1.0
    shift: float = 0.0

    def is_identity(self) -> bool:
        return (
            not self.flip_h
            and not self.flip_w
            and self.translate == (0, 0)
            and self.scale == 1.0
            and self.shift == 0.0
        )


def sample_aug_params(p: float, rng: np.random.Generator, width: int) -> AugParams:
    """Draw each op independently with probability p; p=0 consumes no randomness."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0,1], got {p}")
    if p == 0.0:
        return AugParams()
    flip_h = bool(rng.random() < p)
    flip_w = bool(rng.random() < p)
    translate = (0, 0)
    if rng.random() < p:
        m = width // 8
        translate = (int(rng.integers(-m, m + 1)), int(rng.integers(-m, m + 1)))
    scale = 1.0
    if rng.random() < p:
        scale = float(rng.uniform(0.8, 1.25))
    shift = 0.0
    if rng.random() < p:
        shift = float(rng.uniform(-0.1, 0.1))
    return AugParams(flip_h, flip_w, translate, scale, shift)


def _translate_hw(x: torch.Tensor, dh: int, dw: int) -> torch.Tensor:
    """Shift along (h, w) with edge replication: out[h, w] = in[h - dh, w - dw]."""
    _, _, _, height, width = x.shape
    if abs(dh) >= height or abs(dw) >= width:
        raise ValueError(f"translation ({dh},{dw}) exceeds spatial extent")
    pad = (max(dw, 0), max(-dw, 0), max(dh, 0), max(-dh, 0), 0, 0)
    y = F.pad(x, pad, mode="replicate")
    h0, w0 = max(-dh, 0), max(-dw, 0)
    return y[:, :, :, h0 : h0 + height, w0 : w0 + width]


def apply_aug(x: torch.Tensor, params: AugParams) -> torch.Tensor:
    """Apply a sampled transform to an (N, C, D, H, W) tensor, differentiably.

    Identity params return the input tensor itself, so a p=0 pipeline is
    bit-identical to having no augmentation installed.
    """
    if params.is_identity():
        return x
    if params.flip_h:
        x = torch.flip(x, dims=(3,))
    if params.flip_w:
        x = torch.flip(x, dims=(4,))
    if params.translate != (0, 0):
        x = _translate_hw(x, params.translate[0], params.translate[1])
    if params.scale != 1.0:
        x = x * params.scale
    if params.shift != 0.0:
        x = x + params.shift
    return x


def augment_pair(condition: torch.Tensor, candidate: torch.Tensor, p: float, rng: np.random.Generator):
    """Draw ONE transform and apply it to both members of the pair."""
    params = sample_aug_params(p, rng, width=int(condition.shape[-1]))
    return apply_aug(condition, params), apply_aug(candidate, params)
