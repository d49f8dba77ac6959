"""Checkpoint archives and parameter digests.

A checkpoint is a zip archive holding ``manifest.json`` plus one
``arrays/<name>.npy`` entry per tensor. Entries are written sorted by name
with a fixed timestamp and no compression, so identical contents give
bitwise-identical files. Parameter digests are sha256 over the sorted
(name, raw little-endian bytes) stream — the digest of a frozen network is
asserted unchanged at every later checkpoint.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

__all__ = [
    "state_dict_digest",
    "save_archive",
    "load_archive",
    "save_module",
    "load_module_state",
]

_FIXED_DATE = (2020, 1, 1, 0, 0, 0)


def _to_numpy(t) -> np.ndarray:
    if isinstance(t, torch.Tensor):
        return t.detach().cpu().numpy()
    return np.asarray(t)


def state_dict_digest(state) -> str:
    """sha256 hex digest of a {name: tensor} mapping, order-independent."""
    h = hashlib.sha256()
    for name in sorted(state.keys()):
        arr = np.ascontiguousarray(_to_numpy(state[name]))
        h.update(name.encode())
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    return h.hexdigest()


def save_archive(path, manifest: dict, arrays: dict) -> None:
    """Write manifest + named arrays as a reproducible zip archive."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("manifest.json", date_time=_FIXED_DATE)
        zf.writestr(info, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        for name in sorted(arrays.keys()):
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(_to_numpy(arrays[name])))
            info = zipfile.ZipInfo(f"arrays/{name}.npy", date_time=_FIXED_DATE)
            zf.writestr(info, buf.getvalue())


def load_archive(path):
    """Read a checkpoint archive -> (manifest dict, {name: ndarray})."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing checkpoint {path}")
    arrays = {}
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json").decode())
        for entry in zf.namelist():
            if entry.startswith("arrays/") and entry.endswith(".npy"):
                name = entry[len("arrays/") : -len(".npy")]
                arrays[name] = np.load(io.BytesIO(zf.read(entry)))
    return manifest, arrays


def save_module(path, module: torch.nn.Module, manifest: dict) -> None:
    """Save one network's state_dict with its digest recorded in the manifest."""
    state = module.state_dict()
    manifest = dict(manifest)
    manifest["digest"] = state_dict_digest(state)
    save_archive(path, manifest, {k: v for k, v in state.items()})


def load_module_state(path, module: torch.nn.Module, verify_digest: bool = True) -> dict:
    """Load a state_dict archive into ``module``; returns the manifest."""
    manifest, arrays = load_archive(path)
    state = {}
    for name, param in module.state_dict().items():
        if name not in arrays:
            raise KeyError(f"checkpoint {path} missing tensor {name}")
        arr = arrays[name]
        if tuple(arr.shape) != tuple(param.shape):
            raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {tuple(param.shape)}")
        state[name] = torch.from_numpy(arr.copy())
    module.load_state_dict(state)
    if verify_digest and "digest" in manifest:
        got = state_dict_digest(module.state_dict())
        if got != manifest["digest"]:
            raise ValueError(f"digest mismatch for {path}: {got} != {manifest['digest']}")
    return manifest
