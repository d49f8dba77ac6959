"""Deterministic-mode plumbing.

Setting the environment variable PUPINET_DETERMINISTIC=1 forces
single-threaded torch with deterministic algorithms, making training runs
bitwise-reproducible for a fixed seed. Random streams are derived from
(seed, step, role) tuples so no consumer perturbs another's stream.
"""

from __future__ import annotations

import os
import zlib

import numpy as np
import torch

__all__ = ["deterministic_mode_requested", "apply_determinism", "seed_rng", "role_id"]

ENV_FLAG = "PUPINET_DETERMINISTIC"


def deterministic_mode_requested() -> bool:
    return os.environ.get(ENV_FLAG, "") == "1"


def apply_determinism() -> None:
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)


def role_id(role: str) -> int:
    return zlib.crc32(role.encode())


def seed_rng(seed: int, step: int, role: str) -> np.random.Generator:
    """Independent stream for one (seed, step, role) triple."""
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(step), role_id(role))))
