"""Image-quality metrics: MAE, PSNR, SSIM, and split-level evaluation reports.

Conventions: data in [0, 1] with data_range 1.0; PSNR capped at 100 dB so
identical volumes stay finite and sortable; SSIM computed slice-wise over
(h, w) planes with a 7x7 uniform window on valid window positions only
(biased moment estimates), averaged across depth. SSIM is stored raw in
[-1, 1] and shown x100 in formatted tables.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .volume import Volume3D

__all__ = ["mae", "psnr", "ssim", "MetricsReport", "evaluate_pairs", "PSNR_CAP"]

PSNR_CAP = 100.0


def _arr(v) -> np.ndarray:
    return (v.data if isinstance(v, Volume3D) else np.asarray(v)).astype(np.float64)


def _check_dims(a, b):
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"dim mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def mae(a, b) -> float:
    a, b = _arr(a), _arr(b)
    _check_dims(a, b)
    return float(np.abs(a - b).mean())


def psnr(a, b, data_range: float = 1.0) -> float:
    a, b = _arr(a), _arr(b)
    _check_dims(a, b)
    mse = float(np.square(a - b).mean())
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(data_range * data_range / mse))


def _ssim_2d(x, y, window, c1, c2):
    """Mean SSIM over valid window positions of one (H, W) slice pair."""
    r = window // 2
    mu_x = uniform_filter(x, window)
    mu_y = uniform_filter(y, window)
    mu_xx = uniform_filter(x * x, window)
    mu_yy = uniform_filter(y * y, window)
    mu_xy = uniform_filter(x * y, window)
    crop = (slice(r, x.shape[0] - r), slice(r, x.shape[1] - r))
    mu_x, mu_y = mu_x[crop], mu_y[crop]
    var_x = mu_xx[crop] - mu_x * mu_x
    var_y = mu_yy[crop] - mu_y * mu_y
    cov = mu_xy[crop] - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def ssim(a, b, window: int = 7, k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Structural similarity; 2D images directly, 3D volumes slice-averaged over depth."""
    a, b = _arr(a), _arr(b)
    _check_dims(a, b)
    if window % 2 == 0 or window < 3:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    if a.ndim not in (2, 3):
        raise ValueError(f"expected 2D image or 3D volume, got shape {a.shape}")
    if a.shape[-1] < window or a.shape[-2] < window:
        raise ValueError(f"spatial dims {a.shape[-2:]} smaller than window {window}")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    if a.ndim == 2:
        return _ssim_2d(a, b, window, c1, c2)
    return float(np.mean([_ssim_2d(a[d], b[d], window, c1, c2) for d in range(a.shape[0])]))


@dataclass
class MetricsReport:
    """Per-pair metric rows plus their arithmetic mean for one dataset split."""

    split: str
    pair_ids: list = field(default_factory=list)
    rows: dict = field(default_factory=dict)  # pair_id -> {"mae","psnr","ssim"}

    def add(self, pair_id: int, mae_v: float, psnr_v: float, ssim_v: float) -> None:
        pid = int(pair_id)
        if pid in self.rows:
            raise ValueError(f"pair {pid} already scored in this report")
        self.rows[pid] = {"mae": float(mae_v), "psnr": float(psnr_v), "ssim": float(ssim_v)}
        self.pair_ids = sorted(self.rows)

    def mean(self) -> dict:
        if not self.rows:
            raise ValueError("empty report")
        return {
            k: float(np.mean([self.rows[i][k] for i in self.pair_ids]))
            for k in ("mae", "psnr", "ssim")
        }

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pair_id", "mae", "psnr", "ssim"])
            for pid in self.pair_ids:
                r = self.rows[pid]
                writer.writerow([pid, repr(r["mae"]), repr(r["psnr"]), repr(r["ssim"])])

    def format_table(self, label: str | None = None) -> str:
        """Table-style summary: PSNR up, SSIM (x100) up, MAE down."""
        m = self.mean()
        name = label if label is not None else self.split
        lines = [
            f"{'':24s} {'PSNR':>8s} {'SSIM':>8s} {'MAE':>8s}",
            f"{name:24s} {m['psnr']:8.2f} {m['ssim'] * 100:8.2f} {m['mae']:8.4f}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, path, split: str = "") -> "MetricsReport":
        report = cls(split=split)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["pair_id", "mae", "psnr", "ssim"]:
                raise ValueError(f"unexpected metrics CSV header {header}")
            for pid, m, p, s in reader:
                report.add(int(pid), float(m), float(p), float(s))
        return report


def evaluate_pairs(translate_fn, pairs, split: str) -> MetricsReport:
    """Run ``translate_fn`` over (pair_id, input, target) triples and score them."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError(f"empty split {split!r}")
    report = MetricsReport(split=split)
    for pair_id, inp, target in pairs:
        out = translate_fn(inp)
        report.add(pair_id, mae(out, target), psnr(out, target), ssim(out, target))
    return report
