"""The two translation networks.

OCT -> OCTA: an encoder-decoder whose resampling is the orthonormal Haar
transform applied channel-wise (subbands stacked into channels), with a
multi-scale attention block closing every encoder stage. Each decoder stage
expands channels pointwise to a multiple of eight, splits into subbands,
inverse-transforms back up, and fuses the mirrored encoder skip.

OCTA -> OCT: a plainer residual U-Net with strided down/up-sampling and the
same skip topology, no wavelets or attention.

Both end in tanh, so raw outputs live in (-1, 1); ``translate`` rescales to
(0, 1) for everything outside the network. Inputs are expected in [0, 1].
"""

from __future__ import annotations

import io
from dataclasses import dataclass, asdict

import torch
import torch.nn as nn

from .attention import MultiScaleAttention3d
from .wavelets import WaveletDown3d, WaveletUp3d

__all__ = [
    "GeneratorConfig",
    "WaveletAttentionGenerator",
    "ResUNetGenerator",
    "build_generator",
    "init_weights",
    "gen_param_summary",
]

DIRECTIONS = ("oct2octa", "octa2oct")


@dataclass
class GeneratorConfig:
    direction: str = "oct2octa"
    in_channels: int = 1
    out_channels: int = 1
    base_width: int = 16
    n_stages: int = 3
    attention_groups: int = 4
    bottleneck_width: int = 0  # 0 -> 2 * deepest stage width
    use_attention: bool = True  # oct2octa only; ablation toggle
    use_wavelet: bool = True  # oct2octa only; strided convs when off

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if self.n_stages < 1:
            raise ValueError("n_stages must be >= 1")
        if self.base_width < 4 or self.base_width % 4:
            raise ValueError("base_width must be a positive multiple of 4")
        if self.bottleneck_width == 0:
            self.bottleneck_width = 2 * self.base_width * 2 ** (self.n_stages - 1)
        if self.bottleneck_width % 8:
            raise ValueError("bottleneck_width must be divisible by 8")

    @property
    def stage_widths(self) -> tuple[int, ...]:
        return tuple(self.base_width * 2**s for s in range(self.n_stages))

    def to_dict(self) -> dict:
        return asdict(self)


class ConvBlock3d(nn.Module):
    """Pointwise channel mix followed by a 3^3 conv, each with GN + LeakyReLU."""

    def __init__(self, c_in: int, c_out: int, norm_groups: int = 4):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv3d(c_in, c_out, kernel_size=1),
            nn.GroupNorm(norm_groups, c_out),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv3d(c_out, c_out, kernel_size=3, padding=1),
            nn.GroupNorm(norm_groups, c_out),
            nn.LeakyReLU(0.2, inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class ResBlock3d(nn.Module):
    def __init__(self, channels: int, norm_groups: int = 4):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv3d(channels, channels, kernel_size=3, padding=1),
            nn.GroupNorm(norm_groups, channels),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv3d(channels, channels, kernel_size=3, padding=1),
            nn.GroupNorm(norm_groups, channels),
        )
        self.act = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, x):
        return self.act(x + self.body(x))


class _WaveletEncStage(nn.Module):
    """conv block -> multi-scale attention -> Haar downsample (returns skip too)."""

    def __init__(self, c_in: int, c_out: int, attention_groups: int, use_attention: bool, use_wavelet: bool):
        super().__init__()
        self.conv = ConvBlock3d(c_in, c_out)
        self.attn = MultiScaleAttention3d(c_out, attention_groups) if use_attention else nn.Identity()
        if use_wavelet:
            self.down = WaveletDown3d()
        else:
            self.down = nn.Conv3d(c_out, 8 * c_out, kernel_size=3, stride=2, padding=1)

    def forward(self, x):
        skip = self.attn(self.conv(x))
        return self.down(skip), skip


class _WaveletDecStage(nn.Module):
    """pointwise expand to 8*c -> subband split + inverse Haar -> fuse skip."""

    def __init__(self, c_in: int, c_out: int, use_wavelet: bool):
        super().__init__()
        self.expand = nn.Conv3d(c_in, 8 * c_out, kernel_size=1)
        if use_wavelet:
            self.up = WaveletUp3d()
        else:
            self.up = nn.ConvTranspose3d(8 * c_out, c_out, kernel_size=2, stride=2)
        self.conv = ConvBlock3d(2 * c_out, c_out)

    def forward(self, x, skip):
        u = self.up(self.expand(x))
        return self.conv(torch.cat([u, skip], dim=1))


def _check_divisible(shape, n_stages: int):
    factor = 2**n_stages
    if any(s % factor for s in shape):
        raise ValueError(f"spatial dims {tuple(shape)} must be divisible by 2^{n_stages}")


class WaveletAttentionGenerator(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        if cfg.direction != "oct2octa":
            raise ValueError("WaveletAttentionGenerator is the oct2octa network")
        self.cfg = cfg
        widths = cfg.stage_widths
        enc, c_in = [], cfg.in_channels
        for c in widths:
            enc.append(_WaveletEncStage(c_in, c, cfg.attention_groups, cfg.use_attention, cfg.use_wavelet))
            c_in = 8 * c
        self.encoder = nn.ModuleList(enc)
        self.bottleneck = ConvBlock3d(8 * widths[-1], cfg.bottleneck_width)
        dec, c_in = [], cfg.bottleneck_width
        for c in reversed(widths):
            dec.append(_WaveletDecStage(c_in, c, cfg.use_wavelet))
            c_in = c
        self.decoder = nn.ModuleList(dec)
        self.head = nn.Conv3d(widths[0], cfg.out_channels, kernel_size=1)

    def forward(self, x):
        _check_divisible(x.shape[2:], self.cfg.n_stages)
        skips = []
        for stage in self.encoder:
            x, skip = stage(x)
            skips.append(skip)
        x = self.bottleneck(x)
        for stage, skip in zip(self.decoder, reversed(skips)):
            x = stage(x, skip)
        return torch.tanh(self.head(x))

    def translate(self, x01):
        """[0,1] volume in, (0,1) volume out."""
        return (self.forward(x01) + 1.0) * 0.5

    def wavelet_roundtrip(self, x):
        """Resampling path only (conv/attention bypassed): all downs, then ups."""
        if not self.cfg.use_wavelet:
            raise RuntimeError("resampling path is only an identity with wavelets enabled")
        for stage in self.encoder:
            x = stage.down(x)
        for stage in self.decoder:
            x = stage.up(x)
        return x


class ResUNetGenerator(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        if cfg.direction != "octa2oct":
            raise ValueError("ResUNetGenerator is the octa2oct network")
        self.cfg = cfg
        widths = cfg.stage_widths
        deep = cfg.bottleneck_width
        self.stem = ConvBlock3d(cfg.in_channels, widths[0])
        self.enc_blocks = nn.ModuleList([ResBlock3d(c) for c in widths])
        downs = []
        for s, c in enumerate(widths):
            c_next = widths[s + 1] if s + 1 < len(widths) else deep
            downs.append(nn.Conv3d(c, c_next, kernel_size=3, stride=2, padding=1))
        self.downs = nn.ModuleList(downs)
        self.bottleneck = ResBlock3d(deep)
        ups, fuses = [], []
        c_in = deep
        for c in reversed(widths):
            ups.append(nn.ConvTranspose3d(c_in, c, kernel_size=2, stride=2))
            fuses.append(ConvBlock3d(2 * c, c))
            c_in = c
        self.ups = nn.ModuleList(ups)
        self.fuses = nn.ModuleList(fuses)
        self.head = nn.Conv3d(widths[0], cfg.out_channels, kernel_size=1)

    def forward(self, x):
        _check_divisible(x.shape[2:], self.cfg.n_stages)
        x = self.stem(x)
        skips = []
        for block, down in zip(self.enc_blocks, self.downs):
            x = block(x)
            skips.append(x)
            x = down(x)
        x = self.bottleneck(x)
        for up, fuse, skip in zip(self.ups, self.fuses, reversed(skips)):
            x = up(x)
            x = fuse(torch.cat([x, skip], dim=1))
        return torch.tanh(self.head(x))

    def translate(self, x01):
        """[0,1] volume in, (0,1) volume out."""
        return (self.forward(x01) + 1.0) * 0.5


def init_weights(module: nn.Module, seed: int) -> nn.Module:
    """DCGAN-style init: conv weights N(0, 0.02), norm weights N(1, 0.02), biases 0."""
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv3d, nn.ConvTranspose3d, nn.Conv2d)):
                m.weight.copy_(torch.randn(m.weight.shape, generator=g) * 0.02)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.GroupNorm):
                m.weight.copy_(1.0 + torch.randn(m.weight.shape, generator=g) * 0.02)
                m.bias.zero_()
    return module


def build_generator(cfg: GeneratorConfig, seed: int = 0) -> nn.Module:
    cls = WaveletAttentionGenerator if cfg.direction == "oct2octa" else ResUNetGenerator
    return init_weights(cls(cfg), seed)


def gen_param_summary(cfg: GeneratorConfig) -> str:
    """Deterministic architecture manifest: module tree plus parameter table."""
    model = build_generator(cfg, seed=0)
    out = io.StringIO()
    out.write(f"direction {cfg.direction}\n")
    out.write(
        f"config base_width={cfg.base_width} n_stages={cfg.n_stages} "
        f"attention_groups={cfg.attention_groups} bottleneck_width={cfg.bottleneck_width}\n"
    )
    out.write("[modules]\n")
    for name, m in model.named_modules():
        if name:
            out.write(f"{name} {m.__class__.__name__}\n")
    out.write("[parameters]\n")
    total = 0
    for name, p in model.named_parameters():
        shape = "x".join(str(s) for s in p.shape)
        out.write(f"{name} {shape} {p.numel()}\n")
        total += p.numel()
    out.write(f"[total] {total}\n")
    return out.getvalue()
