"""Report rendering: figures and formatted tables next to the delimited output.

The ``report`` CLI path takes a CSV this package wrote (loss log or metrics
report), renders matplotlib figures to PNG files alongside it, and writes a
plain-text summary table.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .losses import read_loss_csv
from .metrics import MetricsReport

__all__ = [
    "plot_loss_curves",
    "plot_metrics_per_pair",
    "format_grid_table",
    "write_report",
]


def plot_loss_curves(loss_csv, out_png) -> Path:
    rows = read_loss_csv(loss_csv)
    by_term = defaultdict(lambda: ([], []))
    for step, term, value in rows:
        by_term[term][0].append(step)
        by_term[term][1].append(value)
    fig, ax = plt.subplots(figsize=(8, 5))
    for term in sorted(by_term):
        steps, values = by_term[term]
        ax.plot(steps, values, label=term, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=7, ncol=2)
    ax.set_title(Path(loss_csv).stem)
    fig.tight_layout()
    out_png = Path(out_png)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return out_png


def plot_metrics_per_pair(metrics_csv, out_png) -> Path:
    report = MetricsReport.from_csv(metrics_csv)
    pids = report.pair_ids
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    for ax, key, label in zip(axes, ("psnr", "ssim", "mae"), ("PSNR (dB)", "SSIM", "MAE")):
        vals = [report.rows[p][key] for p in pids]
        ax.bar(range(len(pids)), vals, color="#4878a8")
        ax.set_xticks(range(len(pids)))
        ax.set_xticklabels([str(p) for p in pids], fontsize=7)
        ax.set_xlabel("pair")
        ax.set_title(label)
    fig.tight_layout()
    out_png = Path(out_png)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return out_png


def format_grid_table(rows) -> str:
    """Rows of (label, psnr, ssim_raw, mae) -> ablation-style text table."""
    widths = max([10] + [len(str(r[0])) for r in rows])
    lines = [f"{'config':<{widths}s} {'PSNR':>8s} {'SSIM':>8s} {'MAE':>8s}"]
    for label, psnr_v, ssim_v, mae_v in rows:
        if psnr_v is None:
            lines.append(f"{label:<{widths}s} {'FAILED':>8s} {'':>8s} {'':>8s}")
        else:
            lines.append(
                f"{label:<{widths}s} {psnr_v:8.2f} {ssim_v * 100:8.2f} {mae_v:8.4f}"
            )
    return "\n".join(lines) + "\n"


def _csv_header(path) -> list:
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def write_report(csv_path, out_dir=None) -> list:
    """Render figures + a text summary for a loss or metrics CSV; returns paths."""
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise FileNotFoundError(f"no such CSV {csv_path}")
    out_dir = Path(out_dir) if out_dir is not None else csv_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    header = _csv_header(csv_path)
    written = []
    if header == ["step", "term", "value"]:
        png = plot_loss_curves(csv_path, out_dir / f"{csv_path.stem}_curves.png")
        written.append(png)
        rows = read_loss_csv(csv_path)
        last_step = max(r[0] for r in rows)
        finals = {term: value for step, term, value in rows if step == last_step}
        txt = out_dir / f"{csv_path.stem}_summary.txt"
        with open(txt, "w") as fh:
            fh.write(f"final step {last_step}\n")
            for term in sorted(finals):
                fh.write(f"{term:12s} {finals[term]:.6g}\n")
        written.append(txt)
    elif header == ["pair_id", "mae", "psnr", "ssim"]:
        png = plot_metrics_per_pair(csv_path, out_dir / f"{csv_path.stem}_per_pair.png")
        written.append(png)
        report = MetricsReport.from_csv(csv_path, split=csv_path.stem)
        txt = out_dir / f"{csv_path.stem}_table.txt"
        txt.write_text(report.format_table())
        written.append(txt)
    else:
        raise ValueError(f"unrecognized CSV header {header} in {csv_path}")
    return written
