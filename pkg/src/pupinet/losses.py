"""Training objectives: L1, anisotropic 3D total variation, adversarial,
projection/layer-projection terms, and the composite totals.

Composite structure (weights in LossWeights):

  hfc_total  = (proj + ilm_opl + opl_bm + tv3d) * lambda_b
  gan_term   = adv_g + lambda_a * l1
  octa_total = gan_term + lambda_c * vsm + hfc_total      (OCT -> OCTA)
  oct_total  = adv_g + lambda_a_prime * l1                (OCTA -> OCT)

TV follows the plain triple sums of absolute forward differences (no
normalization); a mean-normalized variant is available behind a flag for
scale-stable training and is off by default. All L1-style terms use mean
reduction so weights are resolution-independent.

Functions accept either numpy arrays / Volume3D (evaluated in float64) or
torch tensors (gradients preserved).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .volume import Volume3D

__all__ = [
    "LossWeights",
    "LossReport",
    "LossCsvWriter",
    "read_loss_csv",
    "l1_3d",
    "tv3d",
    "proj_loss",
    "layer_proj_loss",
    "adv_losses",
    "g_adv_loss",
    "d_adv_loss",
    "gan_term",
    "hfc_total",
    "octa_total",
    "oct_total",
]


@dataclass
class LossWeights:
    lambda_a: float = 120.0  # L1 weight inside the OCT->OCTA GAN term
    lambda_b: float = 0.25  # HFC group weight
    lambda_c: float = 5.0  # VSM weight
    lambda_a_prime: float = 15.0  # L1 weight for the OCTA->OCT objective

    def __post_init__(self):
        for name, val in asdict(self).items():
            if not (np.isfinite(val) and val >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {val}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**d)


@dataclass
class LossReport:
    """Named scalar per loss term at one step; every value must be finite."""

    step: int
    terms: dict

    def __post_init__(self):
        for name, val in self.terms.items():
            if not np.isfinite(val):
                raise ValueError(f"loss term {name!r} is not finite at step {self.step}: {val}")
        self.terms = {k: float(v) for k, v in self.terms.items()}


class LossCsvWriter:
    """Appends ``step,term,value`` rows, one per term per step."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(["step", "term", "value"])

    def write(self, report: LossReport) -> None:
        for term in sorted(report.terms):
            self._writer.writerow([report.step, term, repr(report.terms[term])])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_loss_csv(path):
    """-> list of (step, term, value) tuples."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["step", "term", "value"]:
            raise ValueError(f"unexpected loss CSV header {header}")
        for step, term, value in reader:
            rows.append((int(step), term, float(value)))
    return rows


def _pair(a, b):
    """Coerce two inputs to a common backend; numpy goes to float64."""
    if isinstance(a, torch.Tensor) or isinstance(b, torch.Tensor):
        return a, b, "torch"
    a = (a.data if isinstance(a, Volume3D) else np.asarray(a)).astype(np.float64)
    b = (b.data if isinstance(b, Volume3D) else np.asarray(b)).astype(np.float64)
    return a, b, "numpy"


def l1_3d(a, b):
    """Mean absolute voxel difference."""
    a, b, kind = _pair(a, b)
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"dim mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    if kind == "torch":
        return (a - b).abs().mean()
    return float(np.abs(a - b).mean())


def tv3d(v, mean_normalized: bool = False):
    """Anisotropic total variation: plain sums of |forward difference| per axis.

    ``mean_normalized`` divides by the number of difference terms instead,
    for resolution-independent weighting (off by default).
    """
    is_torch = isinstance(v, torch.Tensor)
    x = v if is_torch else (v.data if isinstance(v, Volume3D) else np.asarray(v)).astype(np.float64)
    if x.ndim not in (3, 5):
        raise ValueError(f"expected a (D,H,W) volume or (N,C,D,H,W) tensor, got {tuple(x.shape)}")
    axes = (x.ndim - 3, x.ndim - 2, x.ndim - 1)
    total = None
    n_terms = 0
    for ax in axes:
        n = x.shape[ax]
        if n < 2:
            continue
        lo = [slice(None)] * x.ndim
        hi = [slice(None)] * x.ndim
        lo[ax] = slice(0, n - 1)
        hi[ax] = slice(1, n)
        diff = abs(x[tuple(hi)] - x[tuple(lo)])
        term = diff.sum()
        total = term if total is None else total + term
        n_terms += diff.size if not is_torch else diff.numel()
    if total is None:
        return torch.zeros((), dtype=x.dtype) if is_torch else 0.0
    if mean_normalized:
        total = total / n_terms
    return total if is_torch else float(total)


def _mean_z_proj(x):
    """Full-depth mean projection for 3D arrays or (N,C,D,H,W) tensors."""
    if isinstance(x, torch.Tensor):
        if x.ndim != 5:
            raise ValueError(f"expected (N,C,D,H,W), got {tuple(x.shape)}")
        return x.mean(dim=2)
    arr = (x.data if isinstance(x, Volume3D) else np.asarray(x)).astype(np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (D,H,W), got {arr.shape}")
    return arr.mean(axis=0)


def proj_loss(real, fake):
    """L1 between full-depth mean-z projections of the two volumes."""
    a, b, kind = _pair(real, fake)
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"dim mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    pa, pb = _mean_z_proj(a), _mean_z_proj(b)
    if kind == "torch":
        return (pa - pb).abs().mean()
    return float(np.abs(pa - pb).mean())


def layer_proj_loss(net, real, fake):
    """L1 between net(proj(real)) and net(proj(fake)); grads reach fake only."""
    if not getattr(net, "frozen", False):
        raise RuntimeError("layer_proj_loss requires a frozen HfcNet")
    a, b, kind = _pair(real, fake)
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"dim mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    if kind == "torch":
        out_fake = net(_mean_z_proj(b))
        with torch.no_grad():
            out_real = net(_mean_z_proj(a))
        return (out_fake - out_real).abs().mean()
    pa = torch.from_numpy(np.ascontiguousarray(_mean_z_proj(a), dtype=np.float32))[None, None]
    pb = torch.from_numpy(np.ascontiguousarray(_mean_z_proj(b), dtype=np.float32))[None, None]
    with torch.no_grad():
        out_real, out_fake = net(pa), net(pb)
    return float((out_fake - out_real).abs().mean())


def g_adv_loss(d_fake_logits):
    """Non-saturating generator loss: mean softplus(-D(fake))."""
    if isinstance(d_fake_logits, torch.Tensor):
        return F.softplus(-d_fake_logits).mean()
    x = np.asarray(d_fake_logits, dtype=np.float64)
    return float(np.logaddexp(0.0, -x).mean())


def d_adv_loss(d_real_logits, d_fake_logits):
    """Discriminator loss: mean softplus(-D(real)) + mean softplus(D(fake))."""
    if isinstance(d_real_logits, torch.Tensor) or isinstance(d_fake_logits, torch.Tensor):
        return F.softplus(-d_real_logits).mean() + F.softplus(d_fake_logits).mean()
    r = np.asarray(d_real_logits, dtype=np.float64)
    f = np.asarray(d_fake_logits, dtype=np.float64)
    return float(np.logaddexp(0.0, -r).mean() + np.logaddexp(0.0, f).mean())


def adv_losses(d_real_logits, d_fake_logits):
    """(g_loss, d_loss) of the non-saturating logistic objective."""
    return g_adv_loss(d_fake_logits), d_adv_loss(d_real_logits, d_fake_logits)


def gan_term(adv_g, l1_term, w: LossWeights):
    """Conditional-GAN generator objective: adversarial + lambda_a * L1."""
    return adv_g + w.lambda_a * l1_term


def hfc_total(proj, ilm_opl, opl_bm, tv, w: LossWeights):
    return (proj + ilm_opl + opl_bm + tv) * w.lambda_b


def octa_total(gan, vsm, hfc, w: LossWeights):
    return gan + w.lambda_c * vsm + hfc


def oct_total(adv, l1_term, w: LossWeights):
    return adv + w.lambda_a_prime * l1_term
