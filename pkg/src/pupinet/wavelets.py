"""Single-level orthonormal Haar DWT/IDWT in 2D and 3D.

Analysis filters are (1/sqrt2, 1/sqrt2) and (1/sqrt2, -1/sqrt2) applied
separably per axis with stride 2 and no padding, so the transform is
orthonormal: it preserves energy exactly and inverts exactly (up to float
rounding). Odd extents are an error — padding would silently break the
exact-inverse property.

Tensor-level functions operate on batched torch tensors, packing subbands
into the channel axis subband-major (all channels of LLL, then LLH, ...).
3D subbands are labeled by axis order (d, h, w): e.g. LLH is low-pass along
d and h, high-pass along w. The volume-level wrappers run in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
import torch

from .volume import Volume3D

__all__ = [
    "SUBBANDS_3D",
    "SUBBANDS_2D",
    "SubbandSet3D",
    "dwt3",
    "idwt3",
    "dwt2",
    "idwt2",
    "dwt3_t",
    "idwt3_t",
    "dwt2_t",
    "idwt2_t",
    "WaveletDown3d",
    "WaveletUp3d",
]

_SQRT_HALF = 0.7071067811865476  # 2 ** -0.5


def _haar_analysis(x: torch.Tensor, dim: int):
    n = x.shape[dim]
    if n % 2:
        raise ValueError(f"axis {dim} has odd extent {n}; Haar analysis needs even dims")
    sel = [slice(None)] * x.ndim
    sel[dim] = slice(0, None, 2)
    even = x[tuple(sel)]
    sel[dim] = slice(1, None, 2)
    odd = x[tuple(sel)]
    return (even + odd) * _SQRT_HALF, (even - odd) * _SQRT_HALF


def _haar_synthesis(lo: torch.Tensor, hi: torch.Tensor, dim: int) -> torch.Tensor:
    if lo.shape != hi.shape:
        raise ValueError(f"subband shape mismatch {tuple(lo.shape)} vs {tuple(hi.shape)}")
    even = (lo + hi) * _SQRT_HALF
    odd = (lo - hi) * _SQRT_HALF
    out = torch.stack((even, odd), dim=dim + 1)
    shape = list(lo.shape)
    shape[dim] *= 2
    return out.reshape(shape)


def dwt3_t(x: torch.Tensor) -> torch.Tensor:
    """(N, C, D, H, W) -> (N, 8C, D/2, H/2, W/2), subband-major channel packing."""
    if x.ndim != 5:
        raise ValueError(f"expected (N, C, D, H, W), got shape {tuple(x.shape)}")
    bands = [x]
    for dim in (2, 3, 4):
        bands = [half for b in bands for half in _haar_analysis(b, dim)]
    return torch.cat(bands, dim=1)


def idwt3_t(y: torch.Tensor) -> torch.Tensor:
    """(N, 8C, D, H, W) -> (N, C, 2D, 2H, 2W); exact inverse of dwt3_t."""
    if y.ndim != 5:
        raise ValueError(f"expected (N, 8C, D, H, W), got shape {tuple(y.shape)}")
    if y.shape[1] % 8:
        raise ValueError(f"channel count {y.shape[1]} not divisible by 8 subbands")
    bands = list(torch.chunk(y, 8, dim=1))
    for dim in (4, 3, 2):
        bands = [_haar_synthesis(bands[i], bands[i + 1], dim) for i in range(0, len(bands), 2)]
    return bands[0]


def dwt2_t(x: torch.Tensor) -> torch.Tensor:
    """(N, C, H, W) -> (N, 4C, H/2, W/2); subbands (LL, LH, HL, HH) by (h, w)."""
    if x.ndim != 4:
        raise ValueError(f"expected (N, C, H, W), got shape {tuple(x.shape)}")
    bands = [x]
    for dim in (2, 3):
        bands = [half for b in bands for half in _haar_analysis(b, dim)]
    return torch.cat(bands, dim=1)


def idwt2_t(y: torch.Tensor) -> torch.Tensor:
    if y.ndim != 4:
        raise ValueError(f"expected (N, 4C, H, W), got shape {tuple(y.shape)}")
    if y.shape[1] % 4:
        raise ValueError(f"channel count {y.shape[1]} not divisible by 4 subbands")
    bands = list(torch.chunk(y, 4, dim=1))
    for dim in (3, 2):
        bands = [_haar_synthesis(bands[i], bands[i + 1], dim) for i in range(0, len(bands), 2)]
    return bands[0]


SUBBANDS_3D = ("lll", "llh", "lhl", "lhh", "hll", "hlh", "hhl", "hhh")
SUBBANDS_2D = ("ll", "lh", "hl", "hh")


@dataclass
class SubbandSet3D:
    """Eight half-resolution Haar subbands of one volume, labeled by (d, h, w)."""

    lll: np.ndarray
    llh: np.ndarray
    lhl: np.ndarray
    lhh: np.ndarray
    hll: np.ndarray
    hlh: np.ndarray
    hhl: np.ndarray
    hhh: np.ndarray

    def __post_init__(self):
        shapes = {tuple(np.asarray(getattr(self, f.name)).shape) for f in fields(self)}
        if len(shapes) != 1:
            raise ValueError(f"subband dims disagree: {sorted(shapes)}")
        (shape,) = shapes
        if len(shape) != 3:
            raise ValueError(f"subbands must be 3D, got {shape}")

    def as_array(self) -> np.ndarray:
        """(8, D/2, H/2, W/2) stack in subband label order."""
        return np.stack([np.asarray(getattr(self, n)) for n in SUBBANDS_3D])

    def energy(self) -> float:
        return float(sum(np.square(np.asarray(getattr(self, n), dtype=np.float64)).sum() for n in SUBBANDS_3D))


def _vol_data(v) -> np.ndarray:
    return v.data if isinstance(v, Volume3D) else np.asarray(v)


def dwt3(v) -> SubbandSet3D:
    """Volume-level 3D Haar analysis (float64 internally)."""
    data = _vol_data(v).astype(np.float64)
    if data.ndim != 3:
        raise ValueError(f"expected a 3D volume, got shape {data.shape}")
    y = dwt3_t(torch.from_numpy(data)[None, None])
    bands = y[0].numpy()
    return SubbandSet3D(*[bands[i] for i in range(8)])


def idwt3(s: SubbandSet3D) -> np.ndarray:
    """Volume-level 3D Haar synthesis; returns a (D, H, W) float64 array."""
    stack = np.stack([np.asarray(getattr(s, n), dtype=np.float64) for n in SUBBANDS_3D])
    return idwt3_t(torch.from_numpy(stack)[None])[0, 0].numpy()


def dwt2(img: np.ndarray):
    """2D Haar analysis of an (H, W) image -> (LL, LH, HL, HH) float64 arrays."""
    data = np.asarray(img, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {data.shape}")
    y = dwt2_t(torch.from_numpy(data)[None, None])[0].numpy()
    return y[0], y[1], y[2], y[3]


def idwt2(ll, lh, hl, hh) -> np.ndarray:
    bands = [np.asarray(b, dtype=np.float64) for b in (ll, lh, hl, hh)]
    if len({b.shape for b in bands}) != 1:
        raise ValueError("subband dims disagree")
    return idwt2_t(torch.from_numpy(np.stack(bands))[None])[0, 0].numpy()


class WaveletDown3d(torch.nn.Module):
    """Parameter-free stride-2 downsample: channels x8, spatial halved."""

    def forward(self, x):
        return dwt3_t(x)


class WaveletUp3d(torch.nn.Module):
    """Parameter-free inverse of WaveletDown3d: channels /8, spatial doubled."""

    def forward(self, x):
        return idwt3_t(x)
