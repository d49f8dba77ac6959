import os
import sys
from pathlib import Path

import pytest

os.environ.setdefault("PUPINET_DETERMINISTIC", "1")

import torch  # noqa: E402

torch.set_num_threads(1)
torch.use_deterministic_algorithms(True)

sys.path.insert(0, str(Path(__file__).parent))

from pupinet.volume import generate_phantom_dataset  # noqa: E402

TINY_DIMS = (16, 32, 32)
FULL_DIMS = (32, 64, 64)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """6 pairs at 16x32x32 for fast trainer/CLI tests."""
    root = tmp_path_factory.mktemp("tiny_data")
    generate_phantom_dataset(root, n_pairs=6, seed=11, dims=TINY_DIMS, max_vessels=4)
    return root


@pytest.fixture(scope="session")
def smoke_dataset(tmp_path_factory):
    """2 pairs at full desk dims for smoke training."""
    root = tmp_path_factory.mktemp("smoke_data")
    generate_phantom_dataset(root, n_pairs=2, seed=5, dims=FULL_DIMS, max_vessels=5)
    return root


@pytest.fixture(scope="session")
def tiny_supervisors(tmp_path_factory, tiny_dataset):
    """Quickly pretrained + frozen supervisors at tiny dims, saved as checkpoints."""
    from pupinet.trainer import TrainConfig, run_pretrain_vsm, run_pretrain_hfc

    out = tmp_path_factory.mktemp("tiny_sup")
    cfg = TrainConfig(
        direction="oct2octa",
        data_root=str(tiny_dataset),
        out_dir=str(out),
        seed=7,
        dims=TINY_DIMS,
        use_split=False,
        vsm_ckpt=str(out / "vsm.ckpt"),
        hfc_ilm_opl_ckpt=str(out / "hfc_ilm_opl.ckpt"),
        hfc_opl_bm_ckpt=str(out / "hfc_opl_bm.ckpt"),
    )
    run_pretrain_vsm(cfg, cfg.vsm_ckpt, epochs=4)
    run_pretrain_hfc(cfg, out, epochs=4)
    return {
        "vsm": cfg.vsm_ckpt,
        "hfc_ilm_opl": cfg.hfc_ilm_opl_ckpt,
        "hfc_opl_bm": cfg.hfc_opl_bm_ckpt,
        "dims": TINY_DIMS,
        "data_root": str(tiny_dataset),
    }
