"""Command-line surface.

Commands: phantom gen, pretrain vsm|hfc, train, translate, evaluate, ablate,
report. Exit codes: 0 success, 2 configuration error, 3 runtime abort
(NaN loss, missing artifacts). PUPINET_DETERMINISTIC=1 forces
single-threaded deterministic execution.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from . import trainer as T
from .reporting import write_report
from .volume import generate_phantom_dataset


def _parse_dims(text: str):
    try:
        dims = tuple(int(x) for x in text.lower().split("x"))
    except ValueError:
        raise T.ConfigError(f"dims must look like 32x64x64, got {text!r}")
    if len(dims) != 3:
        raise T.ConfigError(f"dims must have three axes, got {text!r}")
    return dims


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pupinet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_phantom = sub.add_parser("phantom", help="synthetic dataset tools")
    phantom_sub = p_phantom.add_subparsers(dest="phantom_command", required=True)
    p_gen = phantom_sub.add_parser("gen", help="generate a paired phantom dataset")
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--dims", type=str, default="32x64x64", help="DxHxW, all divisible by 8")
    p_gen.add_argument("--n-pairs", type=int, required=True)
    p_gen.add_argument("--out", type=str, required=True)

    p_pre = sub.add_parser("pretrain", help="pretrain + freeze a supervisor")
    p_pre.add_argument("which", choices=["vsm", "hfc"])
    p_pre.add_argument("--config", type=str, required=True)

    p_train = sub.add_parser("train", help="main GAN training for one direction")
    p_train.add_argument("--config", type=str, required=True)

    p_tr = sub.add_parser("translate", help="translate one volume file")
    p_tr.add_argument("--ckpt", type=str, required=True)
    p_tr.add_argument("--in", dest="in_path", type=str, required=True)
    p_tr.add_argument("--out", type=str, required=True)
    p_tr.add_argument("--direction", choices=list(T.DIRECTIONS), required=True)

    p_ev = sub.add_parser("evaluate", help="evaluate a checkpoint on a split")
    p_ev.add_argument("--ckpt", type=str, required=True)
    p_ev.add_argument("--split", choices=["train", "val", "test"], required=True)
    p_ev.add_argument("--data-root", type=str, default=None)
    p_ev.add_argument("--out-dir", type=str, default=None)

    p_ab = sub.add_parser("ablate", help="run a config grid and tabulate metrics")
    p_ab.add_argument("--grid", type=str, required=True)

    p_rep = sub.add_parser("report", help="render figures + tables for a CSV")
    p_rep.add_argument("--csv", type=str, required=True)
    p_rep.add_argument("--out-dir", type=str, default=None)

    return parser


def _cmd_phantom_gen(args) -> int:
    dims = _parse_dims(args.dims)
    if args.n_pairs < 1:
        raise T.ConfigError("--n-pairs must be >= 1")
    ids = generate_phantom_dataset(args.out, args.n_pairs, args.seed, dims=dims)
    print(f"wrote {len(ids)} pairs under {args.out}/pairs")
    return 0


def _cmd_pretrain(args) -> int:
    cfg = T.load_config(args.config)
    if args.which == "vsm":
        if not cfg.vsm_ckpt:
            raise T.ConfigError("config must set vsm_ckpt as the pretrain output path")
        _, flag, history = T.run_pretrain_vsm(cfg, cfg.vsm_ckpt, epochs=cfg.pretrain_epochs)
        print(f"vsm frozen digest {flag.digest[:12]}… final loss {history[-1]:.4f} -> {cfg.vsm_ckpt}")
    else:
        if not (cfg.hfc_ilm_opl_ckpt and cfg.hfc_opl_bm_ckpt):
            raise T.ConfigError("config must set hfc_ilm_opl_ckpt and hfc_opl_bm_ckpt")
        out_dir = Path(cfg.hfc_ilm_opl_ckpt).parent
        nets, flags, histories, paths = T.run_pretrain_hfc(cfg, out_dir, epochs=cfg.pretrain_epochs)
        for slab, want in (("ilm_opl", cfg.hfc_ilm_opl_ckpt), ("opl_bm", cfg.hfc_opl_bm_ckpt)):
            if str(paths[slab]) != str(Path(want)):
                paths[slab].replace(want)
            print(f"hfc[{slab}] frozen digest {flags[slab].digest[:12]}… final loss {histories[slab][-1]:.4f} -> {want}")
    return 0


def _cmd_train(args) -> int:
    cfg = T.load_config(args.config)
    ckpt = T.train(cfg)
    print(f"training complete -> {ckpt}")
    return 0


def _cmd_translate(args) -> int:
    out = T.translate_volume(args.ckpt, args.in_path, args.out, args.direction)
    print(f"wrote {out}")
    return 0


def _cmd_evaluate(args) -> int:
    report = T.evaluate_checkpoint(args.ckpt, args.split, out_dir=args.out_dir, data_root=args.data_root)
    print(report.format_table(args.split), end="")
    return 0


def _cmd_ablate(args) -> int:
    grid_path = Path(args.grid)
    if not grid_path.exists():
        raise T.ConfigError(f"no such grid file {grid_path}")
    try:
        grid = yaml.safe_load(grid_path.read_text())
    except yaml.YAMLError as e:
        raise T.ConfigError(f"cannot parse {grid_path}: {e}") from e
    if not isinstance(grid, dict) or "cells" not in grid:
        raise T.ConfigError("grid file must be a mapping with a 'cells' list")
    if "base" not in grid:
        raise T.ConfigError("grid file must name a 'base' train config")
    base = grid["base"]
    if isinstance(base, str):
        base_cfg = T.load_config(Path(grid_path).parent / base if not Path(base).is_absolute() else base)
    else:
        base_cfg = T.TrainConfig.from_dict(base)
    out_dir = grid.get("out_dir") or (grid_path.parent / f"{grid_path.stem}_runs")
    rows = T.run_ablation(base_cfg, grid["cells"], out_dir, eval_split=grid.get("eval_split", "test"))
    print((Path(out_dir) / "ablation_table.txt").read_text(), end="")
    if any(r[1] is None for r in rows):
        failed = [r[0] for r in rows if r[1] is None]
        print(f"warning: {len(failed)} cell(s) failed: {', '.join(failed)}", file=sys.stderr)
    return 0


def _cmd_report(args) -> int:
    written = write_report(args.csv, args.out_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


_HANDLERS = {
    "train": _cmd_train,
    "pretrain": _cmd_pretrain,
    "translate": _cmd_translate,
    "evaluate": _cmd_evaluate,
    "ablate": _cmd_ablate,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "phantom":
            return _cmd_phantom_gen(args)
        return _HANDLERS[args.command](args)
    except T.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (T.MissingArtifact, T.TrainAbort, FileNotFoundError) as e:
        print(f"abort: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
