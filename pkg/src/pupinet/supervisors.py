"""Frozen supervision networks: the vessel structure matcher (VSM) and the
two layer-projection translators (HFC).

VSM maps an OCTA volume to an en-face vessel probability map: a 3D conv stem,
a learned softmax-weighted pooling along depth (projection happens inside the
network), then a 2D head with per-pixel sigmoid. It is pretrained on
(volume, binary mask) pairs with BCE + Dice, then frozen.

Each HFC net is a small 2D encoder-decoder with Haar down/up-sampling and
skip connections that maps the full-depth mean projection to one slab
projection (ILM-OPL or OPL-BM). Pretrained with L1 against true slab
projections, then frozen.

Freezing captures a sha256 digest of the parameters; the digest is re-checked
at every later checkpoint so any gradient leak into a supervisor is caught.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .checkpoint import state_dict_digest
from .volume import Volume3D, Projection2D, project_mean_z, slab_projection
from .wavelets import dwt2_t, idwt2_t

__all__ = [
    "VsmNet",
    "HfcNet",
    "FrozenFlag",
    "freeze",
    "vsm_forward",
    "vsm_loss",
    "hfc_forward",
    "pretrain_vsm",
    "pretrain_hfc",
    "make_hfc_triples",
    "dice_score",
    "bce_dice_loss",
]

HFC_SLABS = ("ilm_opl", "opl_bm")


@dataclass(frozen=True)
class FrozenFlag:
    frozen: bool
    digest: str


class _ConvBlock2d(nn.Module):
    def __init__(self, c_in: int, c_out: int, norm_groups: int = 4):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(c_in, c_out, kernel_size=3, padding=1),
            nn.GroupNorm(norm_groups, c_out),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c_out, c_out, kernel_size=3, padding=1),
            nn.GroupNorm(norm_groups, c_out),
            nn.LeakyReLU(0.2, inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class VsmNet(nn.Module):
    def __init__(self, width: int = 12, dims: tuple[int, int, int] | None = None):
        super().__init__()
        self.width = width
        self.dims = tuple(dims) if dims is not None else None
        self.frozen = False
        self.stem = nn.Sequential(
            nn.Conv3d(1, width, kernel_size=3, padding=1),
            nn.GroupNorm(4, width),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv3d(width, width, kernel_size=3, padding=1),
            nn.GroupNorm(4, width),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.pool_logits = nn.Conv3d(width, 1, kernel_size=1)
        self.head = nn.Sequential(
            nn.Conv2d(width, width, kernel_size=3, padding=1),
            nn.GroupNorm(4, width),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(width, 1, kernel_size=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(N, 1, D, H, W) volume -> (N, 1, H, W) vessel probabilities."""
        if x.ndim != 5 or x.shape[1] != 1:
            raise ValueError(f"expected (N, 1, D, H, W), got {tuple(x.shape)}")
        if self.dims is not None and tuple(x.shape[2:]) != self.dims:
            raise ValueError(f"volume dims {tuple(x.shape[2:])} != configured {self.dims}")
        f = self.stem(x)
        attn = torch.softmax(self.pool_logits(f), dim=2)
        g = (f * attn).sum(dim=2)
        return torch.sigmoid(self.head(g))


class HfcNet(nn.Module):
    """2D UNet with Haar resampling, one instance per target slab."""

    def __init__(self, slab: str, width: int = 16):
        super().__init__()
        if slab not in HFC_SLABS:
            raise ValueError(f"slab must be one of {HFC_SLABS}, got {slab!r}")
        self.slab = slab
        self.width = width
        self.frozen = False
        w = width
        self.enc0 = _ConvBlock2d(1, w)
        self.enc1 = _ConvBlock2d(4 * w, 2 * w)
        self.bottleneck = _ConvBlock2d(8 * w, 4 * w)
        self.expand1 = nn.Conv2d(4 * w, 8 * w, kernel_size=1)
        self.dec1 = _ConvBlock2d(4 * w, 2 * w)
        self.expand0 = nn.Conv2d(2 * w, 4 * w, kernel_size=1)
        self.dec0 = _ConvBlock2d(2 * w, w)
        self.head = nn.Conv2d(w, 1, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(N, 1, H, W) full-depth projection -> (N, 1, H, W) slab projection."""
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected (N, 1, H, W), got {tuple(x.shape)}")
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ValueError(f"spatial dims {tuple(x.shape[2:])} must be divisible by 4")
        s0 = self.enc0(x)
        s1 = self.enc1(dwt2_t(s0))
        b = self.bottleneck(dwt2_t(s1))
        u1 = self.dec1(torch.cat([idwt2_t(self.expand1(b)), s1], dim=1))
        u0 = self.dec0(torch.cat([idwt2_t(self.expand0(u1)), s0], dim=1))
        return torch.sigmoid(self.head(u0))


def freeze(net: nn.Module) -> FrozenFlag:
    """Stop gradients, switch to eval mode, and record the parameter digest."""
    for p in net.parameters():
        p.requires_grad_(False)
    net.eval()
    net.frozen = True
    return FrozenFlag(frozen=True, digest=state_dict_digest(net.state_dict()))


def _vol_tensor(v) -> torch.Tensor:
    data = v.data if isinstance(v, Volume3D) else np.asarray(v, dtype=np.float32)
    return torch.from_numpy(np.ascontiguousarray(data, dtype=np.float32))[None, None]


def vsm_forward(net: VsmNet, octa) -> Projection2D:
    with torch.no_grad():
        out = net(_vol_tensor(octa))
    return Projection2D(out[0, 0].numpy())


def hfc_forward(net: HfcNet, proj) -> Projection2D:
    data = proj.data if isinstance(proj, Projection2D) else np.asarray(proj, dtype=np.float32)
    x = torch.from_numpy(np.ascontiguousarray(data, dtype=np.float32))[None, None]
    with torch.no_grad():
        out = net(x)
    return Projection2D(out[0, 0].numpy())


def vsm_loss(net: VsmNet, fake_octa: torch.Tensor, real_octa: torch.Tensor) -> torch.Tensor:
    """L1 between vessel maps of generated and real OCTA; grads reach fake only."""
    if not getattr(net, "frozen", False):
        raise RuntimeError("vsm_loss requires a frozen VsmNet")
    if fake_octa.shape != real_octa.shape:
        raise ValueError("fake/real dims differ")
    map_fake = net(fake_octa)
    with torch.no_grad():
        map_real = net(real_octa)
    return (map_fake - map_real).abs().mean()


def dice_score(pred: np.ndarray, target: np.ndarray, eps: float = 1e-7) -> float:
    """2|A∩B| / (|A|+|B|) for binary masks."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    inter = float((pred * target).sum())
    return (2.0 * inter + eps) / (float(pred.sum()) + float(target.sum()) + eps)


def bce_dice_loss(probs: torch.Tensor, target: torch.Tensor, eps: float = 1e-7) -> torch.Tensor:
    bce = F.binary_cross_entropy(probs, target)
    inter = (probs * target).sum()
    dice = (2.0 * inter + eps) / (probs.sum() + target.sum() + eps)
    return bce + (1.0 - dice)


def pretrain_vsm(dataset, epochs: int = 30, seed: int = 0, lr: float = 1e-3, width: int = 12):
    """Train a VsmNet on (octa volume, binary mask) pairs; returns it frozen.

    Returns (net, flag, epoch_losses).
    """
    pairs = list(dataset)
    if not pairs:
        raise ValueError("empty VSM pretraining dataset")
    torch.manual_seed(seed)
    dims = tuple(np.asarray(pairs[0][0].data if isinstance(pairs[0][0], Volume3D) else pairs[0][0]).shape)
    net = VsmNet(width=width, dims=dims)
    opt = torch.optim.Adam(net.parameters(), lr=lr, betas=(0.5, 0.999))
    order_rng = np.random.default_rng(seed)
    tensors = [
        (
            _vol_tensor(octa),
            torch.from_numpy(np.asarray(mask.data if isinstance(mask, Projection2D) else mask, dtype=np.float32))[None, None],
        )
        for octa, mask in pairs
    ]
    losses = []
    for _ in range(epochs):
        order = order_rng.permutation(len(tensors))
        total = 0.0
        for i in order:
            x, t = tensors[i]
            opt.zero_grad(set_to_none=True)
            loss = bce_dice_loss(net(x), t)
            loss.backward()
            opt.step()
            total += float(loss.detach())
        losses.append(total / len(tensors))
    flag = freeze(net)
    return net, flag, losses


def make_hfc_triples(octa_volumes, boundaries_list):
    """(full-depth projection, ILM-OPL projection, OPL-BM projection) per volume."""
    triples = []
    for octa, bnd in zip(octa_volumes, boundaries_list):
        data = octa.data if isinstance(octa, Volume3D) else np.asarray(octa)
        full = project_mean_z(data, 0, data.shape[0])
        triples.append(
            (full, slab_projection(data, bnd, "ilm_opl"), slab_projection(data, bnd, "opl_bm"))
        )
    return triples


def pretrain_hfc(dataset, epochs: int = 30, seed: int = 0, lr: float = 1e-3, width: int = 16):
    """Train both slab nets with L1 on projection triples; returns them frozen.

    Returns ({slab: net}, {slab: flag}, {slab: epoch_losses}).
    """
    triples = list(dataset)
    if not triples:
        raise ValueError("empty HFC pretraining dataset")

    def as_img(p):
        arr = p.data if isinstance(p, Projection2D) else np.asarray(p)
        return torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32))[None, None]

    nets, flags, histories = {}, {}, {}
    for slab_idx, slab in enumerate(HFC_SLABS):
        torch.manual_seed(seed + slab_idx)
        net = HfcNet(slab, width=width)
        opt = torch.optim.Adam(net.parameters(), lr=lr, betas=(0.5, 0.999))
        order_rng = np.random.default_rng(seed + slab_idx)
        data = [(as_img(t[0]), as_img(t[1 + slab_idx])) for t in triples]
        losses = []
        for _ in range(epochs):
            order = order_rng.permutation(len(data))
            total = 0.0
            for i in order:
                x, t = data[i]
                opt.zero_grad(set_to_none=True)
                loss = (net(x) - t).abs().mean()
                loss.backward()
                opt.step()
                total += float(loss.detach())
            losses.append(total / len(data))
        flags[slab] = freeze(net)
        nets[slab] = net
        histories[slab] = losses
    return nets, flags, histories
