"""Volumetric data model, en-face projections, file I/O, phantoms, and splits.

Axis order is (depth d, height h, width w) for every volume in the package.
Volumes are float32 in [0, 1] at rest; the on-disk format is a raw
little-endian float32 payload (``<name>.vol``) with a JSON sidecar
(``<name>.json``) describing dims, dtype, and value range.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Volume3D",
    "Projection2D",
    "LayerBoundaries",
    "PhantomPair",
    "project_mean_z",
    "slab_projection",
    "normalize",
    "save_volume",
    "load_volume",
    "generate_phantom_pair",
    "generate_phantom_dataset",
    "load_pair",
    "save_pair",
    "list_pair_ids",
    "split_dataset",
]


@dataclass
class Volume3D:
    """A (D, H, W) scalar field with intensity-range metadata."""

    data: np.ndarray
    value_range: tuple[float, float] | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValueError(f"volume must be 3D, got shape {self.data.shape}")
        # depth 1 is allowed (en-face maps are stored as (1, H, W) volumes)
        if self.data.shape[0] < 1 or min(self.data.shape[1:]) < 2:
            raise ValueError(f"need D >= 1 and H, W >= 2, got {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise ValueError("volume contains non-finite values")
        if self.value_range is None:
            self.value_range = (float(self.data.min()), float(self.data.max()))
        lo, hi = self.value_range
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ValueError(f"bad value_range {self.value_range}")
        span = max(1.0, abs(hi - lo))
        if self.data.min() < lo - 1e-5 * span or self.data.max() > hi + 1e-5 * span:
            raise ValueError(
                f"data range [{self.data.min()}, {self.data.max()}] "
                f"exceeds declared value_range {self.value_range}"
            )
        self.value_range = (float(lo), float(hi))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)


@dataclass
class Projection2D:
    """An (H, W) en-face image produced by reducing a volume along depth."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise ValueError(f"projection must be 2D, got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise ValueError("projection contains non-finite values")

    @property
    def dims(self) -> tuple[int, int]:
        return tuple(self.data.shape)


@dataclass
class LayerBoundaries:
    """Depth indices of the ILM, OPL, and BM surfaces.

    Each field is either a scalar int (constant-z plane, the default case)
    or an (H, W) integer map. Strict ordering ilm < opl < bm must hold
    everywhere.
    """

    ilm_z: int | np.ndarray
    opl_z: int | np.ndarray
    bm_z: int | np.ndarray

    def __post_init__(self):
        ilm, opl, bm = (np.asarray(z) for z in (self.ilm_z, self.opl_z, self.bm_z))
        if not np.all((0 <= ilm) & (ilm < opl) & (opl < bm)):
            raise ValueError("layer boundaries must satisfy 0 <= ilm < opl < bm")

    def validate_for_depth(self, depth: int) -> None:
        if np.any(np.asarray(self.bm_z) > depth):
            raise ValueError(f"bm_z exceeds volume depth {depth}")

    def is_constant(self) -> bool:
        return all(np.isscalar(z) or np.ndim(z) == 0 for z in (self.ilm_z, self.opl_z, self.bm_z))

    def to_dict(self) -> dict:
        def enc(z):
            return int(z) if (np.isscalar(z) or np.ndim(z) == 0) else np.asarray(z).tolist()

        return {"ilm_z": enc(self.ilm_z), "opl_z": enc(self.opl_z), "bm_z": enc(self.bm_z)}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerBoundaries":
        def dec(v):
            return int(v) if isinstance(v, int) else np.asarray(v, dtype=np.int64)

        return cls(dec(d["ilm_z"]), dec(d["opl_z"]), dec(d["bm_z"]))


@dataclass
class PhantomPair:
    """A synthetic OCT/OCTA pair with vessel mask and layer boundaries."""

    oct: Volume3D
    octa: Volume3D
    vessel_mask: Projection2D
    boundaries: LayerBoundaries
    seed: int

    def __post_init__(self):
        if self.oct.dims != self.octa.dims:
            raise ValueError("oct and octa volumes must share dims")
        if self.vessel_mask.dims != self.oct.dims[1:]:
            raise ValueError("vessel mask dims must equal the volume's (H, W)")


def _as_array(v) -> np.ndarray:
    return v.data if isinstance(v, Volume3D) else np.asarray(v)


def project_mean_z(v, z_lo: int, z_hi: int) -> Projection2D:
    """Mean over depth slab [z_lo, z_hi); the full projection is [0, D)."""
    data = _as_array(v)
    depth = data.shape[0]
    if not (0 <= z_lo < z_hi <= depth):
        raise ValueError(f"invalid slab [{z_lo}, {z_hi}) for depth {depth}")
    return Projection2D(data[z_lo:z_hi].astype(np.float64).mean(axis=0))


def slab_projection(v, boundaries: LayerBoundaries, slab: str) -> Projection2D:
    """Mean projection over one anatomical slab: 'ilm_opl' or 'opl_bm'."""
    if slab == "ilm_opl":
        lo, hi = boundaries.ilm_z, boundaries.opl_z
    elif slab == "opl_bm":
        lo, hi = boundaries.opl_z, boundaries.bm_z
    else:
        raise ValueError(f"unknown slab {slab!r}")
    data = _as_array(v)
    boundaries.validate_for_depth(data.shape[0])
    if boundaries.is_constant():
        return project_mean_z(data, int(lo), int(hi))
    # per-pixel boundary maps: masked mean along depth
    d_idx = np.arange(data.shape[0])[:, None, None]
    inside = (d_idx >= np.asarray(lo)[None]) & (d_idx < np.asarray(hi)[None])
    counts = inside.sum(axis=0)
    if np.any(counts == 0):
        raise ValueError("empty slab at some pixel")
    total = (data.astype(np.float64) * inside).sum(axis=0)
    return Projection2D(total / counts)


def normalize(v, target: tuple[float, float] = (0.0, 1.0)) -> Volume3D:
    """Affine map of [min, max] onto the target range; rejects constant volumes."""
    data = _as_array(v).astype(np.float64)
    lo, hi = target
    if lo >= hi:
        raise ValueError(f"target range must be increasing, got {target}")
    vmin, vmax = data.min(), data.max()
    if vmax <= vmin:
        raise ValueError("cannot normalize a constant volume")
    out = lo + (hi - lo) * ((data - vmin) / (vmax - vmin))
    return Volume3D(out.astype(np.float32), value_range=(lo, hi))


def save_volume(v: Volume3D, path) -> None:
    """Write ``<name>.vol`` (raw little-endian float32) and its JSON sidecar."""
    path = Path(path)
    if path.suffix != ".vol":
        raise ValueError(f"volume path must end in .vol, got {path.name}")
    data = np.ascontiguousarray(v.data, dtype="<f4")
    if not np.isfinite(data).all():
        raise ValueError("refusing to save non-finite volume")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data.tobytes())
    sidecar = {
        "dims": list(v.dims),
        "dtype": "f32",
        "value_range": [float(v.value_range[0]), float(v.value_range[1])],
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar) + "\n")


def load_volume(path) -> Volume3D:
    """Load a ``.vol`` + sidecar pair, validating payload size and finiteness."""
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not path.exists():
        raise FileNotFoundError(f"missing volume payload {path}")
    if not sidecar_path.exists():
        raise FileNotFoundError(f"missing volume sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    if meta.get("dtype") != "f32":
        raise ValueError(f"unsupported dtype {meta.get('dtype')!r}")
    dims = tuple(int(x) for x in meta["dims"])
    payload = path.read_bytes()
    expected = int(np.prod(dims)) * 4
    if len(payload) != expected:
        raise ValueError(f"payload size {len(payload)} != expected {expected} for dims {dims}")
    data = np.frombuffer(payload, dtype="<f4").reshape(dims)
    if not np.isfinite(data).all():
        raise ValueError(f"volume {path} contains non-finite values")
    lo, hi = meta["value_range"]
    return Volume3D(data.copy(), value_range=(float(lo), float(hi)))


def split_dataset(n: int, ratios: tuple[float, float, float]):
    """Contiguous deterministic train/val/test split; floor sizes, remainder to test."""
    if n < 3:
        raise ValueError(f"need at least 3 items to split, got {n}")
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    n_train = int(math.floor(n * ratios[0]))
    n_val = int(math.floor(n * ratios[1]))
    n_test = n - n_train - n_val
    ids = list(range(n))
    return ids[:n_train], ids[n_train : n_train + n_val], ids[n_train + n_val :]


# ---------------------------------------------------------------------------
# synthetic paired phantoms
# ---------------------------------------------------------------------------

# intensity model for the structural (OCT) phantom, before normalization
_BAND_LEVELS = {"vitreous": 0.08, "inner": 0.62, "outer": 0.42, "choroid": 0.18}
_TUBE_MASK_THRESHOLD = 0.30  # en-face footprint = pixels whose tube response exceeds this


def _draw_boundaries(rng: np.random.Generator, depth: int) -> LayerBoundaries:
    ilm = int(round(depth * 0.20)) + int(rng.integers(-1, 2))
    opl = int(round(depth * 0.55)) + int(rng.integers(-1, 2))
    bm = int(round(depth * 0.85)) + int(rng.integers(-1, 2))
    ilm = max(1, ilm)
    opl = max(ilm + 1, opl)
    bm = min(depth - 1, max(opl + 1, bm))
    if not (0 <= ilm < opl < bm <= depth):
        raise ValueError(f"dims too small to place ordered layer boundaries (depth {depth})")
    return LayerBoundaries(ilm, opl, bm)


def _stamp_tubes(rng: np.random.Generator, dims, boundaries: LayerBoundaries, n_vessels: int):
    """Render smooth bright tubes into a (D, H, W) response field via max-blending."""
    depth, height, width = dims
    tube = np.zeros(dims, dtype=np.float32)
    ilm, bm = int(boundaries.ilm_z), int(boundaries.bm_z)
    for _ in range(n_vessels):
        h0 = rng.uniform(0.1 * height, 0.9 * height)
        w0 = rng.uniform(0.0, width)
        theta = rng.uniform(0, 2 * np.pi)
        curve_amp = rng.uniform(0.0, 0.7)
        curve_freq = rng.uniform(0.5, 2.0)
        curve_phase = rng.uniform(0, 2 * np.pi)
        z_center = rng.uniform(ilm + 1.5, bm - 1.5)
        z_amp = rng.uniform(0.0, min(2.0, (bm - ilm) / 4))
        radius = rng.uniform(1.1, 2.0)
        peak = rng.uniform(0.55, 0.80)
        sigma = radius / 1.6
        n_steps = int(2.5 * max(height, width))
        step = 0.5
        h, w = h0, w0
        for t in range(n_steps):
            angle = theta + curve_amp * np.sin(curve_freq * t * step * 2 * np.pi / width + curve_phase)
            h += step * np.sin(angle)
            w += step * np.cos(angle)
            if not (0 <= h < height and 0 <= w < width):
                break
            z = z_center + z_amp * np.sin(2 * np.pi * t / n_steps * 3)
            z = float(np.clip(z, ilm + 1, bm - 1))
            _stamp_gaussian(tube, (z, h, w), sigma, peak)
    return tube


def _stamp_gaussian(field: np.ndarray, center, sigma: float, peak: float) -> None:
    depth, height, width = field.shape
    cz, ch, cw = center
    ext = int(math.ceil(3 * sigma))
    z0, z1 = max(0, int(cz) - ext), min(depth, int(cz) + ext + 1)
    h0, h1 = max(0, int(ch) - ext), min(height, int(ch) + ext + 1)
    w0, w1 = max(0, int(cw) - ext), min(width, int(cw) + ext + 1)
    if z0 >= z1 or h0 >= h1 or w0 >= w1:
        return
    zz = np.arange(z0, z1, dtype=np.float32) - cz
    hh = np.arange(h0, h1, dtype=np.float32) - ch
    ww = np.arange(w0, w1, dtype=np.float32) - cw
    r2 = zz[:, None, None] ** 2 + hh[None, :, None] ** 2 + ww[None, None, :] ** 2
    blob = peak * np.exp(-r2 / (2 * sigma * sigma))
    region = field[z0:z1, h0:h1, w0:w1]
    np.maximum(region, blob, out=region)


def generate_phantom_pair(seed: int, dims=(32, 64, 64), n_vessels: int = 5) -> PhantomPair:
    """Deterministic synthetic OCT/OCTA pair.

    The OCT volume is a stack of reflectivity bands delimited by the layer
    boundaries, with speckle noise, faint vessel hyperreflectivity, and
    shadowing below vessels. The OCTA volume is a dim background with bright
    tubes following smooth 3D curves between the ILM and BM; the mask is
    their binary en-face footprint.
    """
    dims = tuple(int(x) for x in dims)
    if len(dims) != 3 or min(dims) < 8:
        raise ValueError(f"phantom dims must be >= 8 per axis, got {dims}")
    if n_vessels < 0:
        raise ValueError("n_vessels must be >= 0")
    rng = np.random.default_rng(seed)
    depth, height, width = dims
    boundaries = _draw_boundaries(rng, depth)
    ilm, opl, bm = (int(boundaries.ilm_z), int(boundaries.opl_z), int(boundaries.bm_z))

    tube = _stamp_tubes(rng, dims, boundaries, n_vessels)
    mask = (tube.max(axis=0) >= _TUBE_MASK_THRESHOLD).astype(np.float32)

    d_idx = np.arange(depth, dtype=np.float32)[:, None, None]
    bands = np.full(dims, _BAND_LEVELS["vitreous"], dtype=np.float32)
    bands[(d_idx >= ilm) & (d_idx < opl) & np.ones(dims, bool)] = _BAND_LEVELS["inner"]
    bands[(d_idx >= opl) & (d_idx < bm) & np.ones(dims, bool)] = _BAND_LEVELS["outer"]
    bands[(d_idx >= bm) & np.ones(dims, bool)] = _BAND_LEVELS["choroid"]
    band_jitter = rng.uniform(-0.03, 0.03, size=4).astype(np.float32)
    for level, jit in zip(("vitreous", "inner", "outer", "choroid"), band_jitter):
        bands[np.isclose(bands, _BAND_LEVELS[level])] += jit

    # vessels leave a weak structural trace plus a shadow cast deeper in z
    shadow = np.clip(np.cumsum(np.vstack([np.zeros((1, height, width), np.float32), tube[:-1]]) > 0.2, axis=0), 0, 6)
    oct_raw = (
        bands
        + 0.12 * tube
        - 0.02 * shadow.astype(np.float32)
        + rng.normal(0.0, 0.03, size=dims).astype(np.float32)
    )

    in_retina = ((d_idx >= ilm) & (d_idx < bm)).astype(np.float32) * np.ones(dims, np.float32)
    octa_raw = (
        0.05
        + 0.06 * in_retina
        + tube
        + rng.normal(0.0, 0.02, size=dims).astype(np.float32)
    )

    oct_vol = normalize(np.clip(oct_raw, -0.2, 1.2))
    octa_vol = normalize(np.clip(octa_raw, -0.2, 1.2))
    return PhantomPair(
        oct=oct_vol,
        octa=octa_vol,
        vessel_mask=Projection2D(mask),
        boundaries=boundaries,
        seed=int(seed),
    )


def save_pair(pair: PhantomPair, pair_dir) -> None:
    """Write one pair directory: oct.vol, octa.vol, mask.vol (D=1), boundaries.json."""
    pair_dir = Path(pair_dir)
    pair_dir.mkdir(parents=True, exist_ok=True)
    save_volume(pair.oct, pair_dir / "oct.vol")
    save_volume(pair.octa, pair_dir / "octa.vol")
    mask_vol = Volume3D(pair.vessel_mask.data.astype(np.float32)[None], value_range=(0.0, 1.0))
    save_volume(mask_vol, pair_dir / "mask.vol")
    meta = pair.boundaries.to_dict()
    meta["seed"] = pair.seed
    (pair_dir / "boundaries.json").write_text(json.dumps(meta) + "\n")


def load_pair(root, pair_id: int) -> PhantomPair:
    pair_dir = Path(root) / "pairs" / str(pair_id)
    oct_vol = load_volume(pair_dir / "oct.vol")
    octa_vol = load_volume(pair_dir / "octa.vol")
    mask = load_volume(pair_dir / "mask.vol")
    meta = json.loads((pair_dir / "boundaries.json").read_text())
    boundaries = LayerBoundaries.from_dict(meta)
    return PhantomPair(
        oct=oct_vol,
        octa=octa_vol,
        vessel_mask=Projection2D(mask.data[0]),
        boundaries=boundaries,
        seed=int(meta.get("seed", -1)),
    )


def list_pair_ids(root) -> list[int]:
    pairs_dir = Path(root) / "pairs"
    if not pairs_dir.is_dir():
        raise FileNotFoundError(f"no pairs/ directory under {root}")
    return sorted(int(p.name) for p in pairs_dir.iterdir() if p.is_dir())


def generate_phantom_dataset(out_dir, n_pairs: int, seed: int, dims=(32, 64, 64), max_vessels: int = 6):
    """Generate ``pairs/<id>/`` directories; deterministic in the dataset seed."""
    if n_pairs < 1:
        raise ValueError("need at least one pair")
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    counts = rng.integers(2, max_vessels + 1, size=n_pairs)
    ids = []
    for i in range(n_pairs):
        pair = generate_phantom_pair(seed * 100003 + i, dims=dims, n_vessels=int(counts[i]))
        save_pair(pair, out_dir / "pairs" / str(i))
        ids.append(i)
    return ids
