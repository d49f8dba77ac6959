"""Training orchestration: staged pretraining, frozen-supervisor GAN training
for both directions, checkpointing, evaluation, and the ablation harness.

Main training refuses to start with supervision toggled on unless frozen
supervisor checkpoints (with digests) are supplied; digests are re-verified
against the live networks at every checkpoint write, so any gradient leaking
into a frozen net aborts the run. A NaN in any loss term aborts with a
report naming the term and step. With PUPINET_DETERMINISTIC=1, runs are
bitwise-reproducible for a fixed seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import yaml

from . import losses as L
from .checkpoint import load_archive, save_archive, save_module, load_module_state, state_dict_digest
from .determinism import apply_determinism, deterministic_mode_requested, seed_rng
from .discriminator import AdaState, PatchDiscriminator3d, ada_update, augment_pair
from .generators import DIRECTIONS, GeneratorConfig, build_generator
from .metrics import MetricsReport, evaluate_pairs
from .reporting import format_grid_table
from .supervisors import (
    HFC_SLABS,
    HfcNet,
    VsmNet,
    freeze,
    make_hfc_triples,
    pretrain_hfc,
    pretrain_vsm,
    vsm_loss,
)
from .volume import Volume3D, list_pair_ids, load_pair, load_volume, save_volume, split_dataset

__all__ = [
    "TrainConfig",
    "ConfigError",
    "TrainAbort",
    "MissingArtifact",
    "load_config",
    "save_config",
    "train",
    "run_pretrain_vsm",
    "run_pretrain_hfc",
    "translate_volume",
    "evaluate_checkpoint",
    "run_ablation",
    "load_generator_from_checkpoint",
]

CKPT_FORMAT = 1


class ConfigError(ValueError):
    """Bad configuration file or invalid field values (CLI exit code 2)."""


class MissingArtifact(RuntimeError):
    """A required checkpoint/dataset artifact is absent (CLI exit code 3)."""


class TrainAbort(RuntimeError):
    """Runtime abort: NaN loss or violated freeze invariant (CLI exit code 3)."""

    def __init__(self, message: str, term: str | None = None, step: int | None = None):
        super().__init__(message)
        self.term = term
        self.step = step


@dataclass
class TrainConfig:
    direction: str = "oct2octa"
    data_root: str = ""
    out_dir: str = ""
    seed: int = 0
    steps: int = 300
    dims: tuple = (32, 64, 64)
    batch_size: int = 1
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    base_width: int = 16
    n_stages: int = 3
    attention_groups: int = 4
    split_ratios: tuple = (0.6, 1.0 / 15.0, 1.0 / 3.0)
    use_split: bool = True
    vsm_on: bool = True
    hfc_on: bool = True
    attention_on: bool = True
    wavelet_on: bool = True
    tv_mean_normalized: bool = False
    weights: L.LossWeights = field(default_factory=L.LossWeights)
    ada_p0: float = 0.0
    ada_target_rt: float = 0.6
    ada_step_size: float = 0.01
    ada_interval: int = 4
    checkpoint_every: int = 100
    log_every: int = 1
    pretrain_epochs: int = 30
    vsm_ckpt: str = ""
    hfc_ilm_opl_ckpt: str = ""
    hfc_opl_bm_ckpt: str = ""

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        self.dims = tuple(int(x) for x in self.dims)
        if len(self.dims) != 3:
            raise ConfigError(f"dims must have three entries, got {self.dims}")
        self.split_ratios = tuple(float(r) for r in self.split_ratios)
        if len(self.split_ratios) != 3:
            raise ConfigError(f"split_ratios must have three entries, got {self.split_ratios}")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be >= 1")
        if self.seed is None:
            raise ConfigError("seed is mandatory")
        if isinstance(self.weights, dict):
            self.weights = L.LossWeights.from_dict(self.weights)
        factor = 2**self.n_stages
        if any(d % factor for d in self.dims):
            raise ConfigError(f"dims {self.dims} not divisible by 2^{self.n_stages}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        d["split_ratios"] = list(self.split_ratios)
        d["weights"] = self.weights.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            direction=self.direction,
            base_width=self.base_width,
            n_stages=self.n_stages,
            attention_groups=self.attention_groups,
            use_attention=self.attention_on,
            use_wavelet=self.wavelet_on,
        )

    def ada_state(self) -> AdaState:
        return AdaState(
            p=self.ada_p0,
            target_rt=self.ada_target_rt,
            step_size=self.ada_step_size,
            interval=self.ada_interval,
        )


def load_config(path) -> TrainConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    return TrainConfig.from_dict(raw)


def save_config(cfg: TrainConfig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))


# ---------------------------------------------------------------------------
# dataset plumbing
# ---------------------------------------------------------------------------


def _split_ids(data_root, cfg: TrainConfig):
    ids = list_pair_ids(data_root)
    if not ids:
        raise MissingArtifact(f"no pairs under {data_root}")
    if not cfg.use_split:
        return ids, [], []
    tr, va, te = split_dataset(len(ids), cfg.split_ratios)
    return [ids[i] for i in tr], [ids[i] for i in va], [ids[i] for i in te]


def _pair_tensors(data_root, pair_ids, direction: str, dims):
    """-> list of (pair_id, cond tensor, target tensor, pair) on [0,1]."""
    out = []
    for pid in pair_ids:
        pair = load_pair(data_root, pid)
        if pair.oct.dims != tuple(dims):
            raise ConfigError(f"pair {pid} dims {pair.oct.dims} != configured {tuple(dims)}")
        oct_t = torch.from_numpy(pair.oct.data)[None, None]
        octa_t = torch.from_numpy(pair.octa.data)[None, None]
        cond, target = (oct_t, octa_t) if direction == "oct2octa" else (octa_t, oct_t)
        out.append((pid, cond, target, pair))
    return out


# ---------------------------------------------------------------------------
# supervisor checkpoints
# ---------------------------------------------------------------------------


def save_vsm_checkpoint(path, net: VsmNet, extra: dict | None = None) -> None:
    manifest = {"kind": "vsm", "width": net.width, "dims": list(net.dims) if net.dims else None}
    manifest.update(extra or {})
    save_module(path, net, manifest)


def load_vsm_checkpoint(path) -> tuple[VsmNet, str]:
    try:
        manifest, _ = load_archive(path)
    except FileNotFoundError as e:
        raise MissingArtifact(str(e)) from e
    if manifest.get("kind") != "vsm":
        raise MissingArtifact(f"{path} is not a VSM checkpoint")
    net = VsmNet(width=manifest["width"], dims=manifest["dims"])
    load_module_state(path, net)
    freeze(net)
    return net, manifest["digest"]


def save_hfc_checkpoint(path, net: HfcNet, extra: dict | None = None) -> None:
    manifest = {"kind": "hfc", "slab": net.slab, "width": net.width}
    manifest.update(extra or {})
    save_module(path, net, manifest)


def load_hfc_checkpoint(path, slab: str) -> tuple[HfcNet, str]:
    try:
        manifest, _ = load_archive(path)
    except FileNotFoundError as e:
        raise MissingArtifact(str(e)) from e
    if manifest.get("kind") != "hfc" or manifest.get("slab") != slab:
        raise MissingArtifact(f"{path} is not an HFC checkpoint for slab {slab}")
    net = HfcNet(slab, width=manifest["width"])
    load_module_state(path, net)
    freeze(net)
    return net, manifest["digest"]


def run_pretrain_vsm(cfg: TrainConfig, out_path, epochs: int = 30):
    """Pretrain VSM on the training split of cfg.data_root and save it frozen."""
    train_ids, _, _ = _split_ids(cfg.data_root, cfg)
    pairs = [load_pair(cfg.data_root, pid) for pid in train_ids]
    dataset = [(p.octa, p.vessel_mask) for p in pairs]
    net, flag, history = pretrain_vsm(dataset, epochs=epochs, seed=cfg.seed)
    save_vsm_checkpoint(out_path, net, {"epochs": epochs, "seed": cfg.seed, "final_loss": history[-1]})
    return net, flag, history


def run_pretrain_hfc(cfg: TrainConfig, out_dir, epochs: int = 30):
    """Pretrain both HFC slab nets on the training split and save them frozen."""
    train_ids, _, _ = _split_ids(cfg.data_root, cfg)
    pairs = [load_pair(cfg.data_root, pid) for pid in train_ids]
    triples = make_hfc_triples([p.octa for p in pairs], [p.boundaries for p in pairs])
    nets, flags, histories = pretrain_hfc(triples, epochs=epochs, seed=cfg.seed)
    out_dir = Path(out_dir)
    paths = {}
    for slab in HFC_SLABS:
        p = out_dir / f"hfc_{slab}.ckpt"
        save_hfc_checkpoint(p, nets[slab], {"epochs": epochs, "seed": cfg.seed, "final_loss": histories[slab][-1]})
        paths[slab] = p
    return nets, flags, histories, paths


def _load_supervisors(cfg: TrainConfig):
    """Load + freeze supervisors per toggles; returns (vsm, hfc dict, digests)."""
    digests = {}
    vsm_net = None
    hfc_nets = {}
    if cfg.direction == "oct2octa" and cfg.vsm_on:
        if not cfg.vsm_ckpt:
            raise MissingArtifact("vsm_on requires vsm_ckpt to point at a frozen VSM checkpoint")
        vsm_net, digests["vsm"] = load_vsm_checkpoint(cfg.vsm_ckpt)
    if cfg.direction == "oct2octa" and cfg.hfc_on:
        for slab, path in (("ilm_opl", cfg.hfc_ilm_opl_ckpt), ("opl_bm", cfg.hfc_opl_bm_ckpt)):
            if not path:
                raise MissingArtifact(f"hfc_on requires hfc_{slab}_ckpt to be set")
            hfc_nets[slab], digests[f"hfc_{slab}"] = load_hfc_checkpoint(path, slab)
    return vsm_net, hfc_nets, digests


# ---------------------------------------------------------------------------
# checkpoint archive for a full training state
# ---------------------------------------------------------------------------


def _opt_arrays(prefix: str, opt) -> tuple[dict, dict]:
    arrays, meta = {}, {"param_groups": [], "steps": {}}
    sd = opt.state_dict()
    for group in sd["param_groups"]:
        g = {k: v for k, v in group.items() if k != "params"}
        g["params"] = list(group["params"])
        meta["param_groups"].append(g)
    for idx, st in sd["state"].items():
        for key, val in st.items():
            if key == "step":
                meta["steps"][str(idx)] = float(val)
            else:
                arrays[f"{prefix}.{idx}.{key}"] = val
    return arrays, meta


def _restore_opt(prefix: str, opt, arrays: dict, meta: dict) -> None:
    sd = opt.state_dict()
    groups = []
    for group in meta["param_groups"]:
        g = dict(group)
        if "betas" in g:
            g["betas"] = tuple(g["betas"])
        groups.append(g)
    state = {}
    for idx_s, step_val in meta["steps"].items():
        idx = int(idx_s)
        entry = {"step": torch.tensor(step_val)}
        for key in ("exp_avg", "exp_avg_sq"):
            name = f"{prefix}.{idx}.{key}"
            if name in arrays:
                entry[key] = torch.from_numpy(arrays[name].copy())
        state[idx] = entry
    sd["param_groups"] = groups
    sd["state"] = state
    opt.load_state_dict(sd)


def save_training_checkpoint(path, cfg: TrainConfig, step: int, gen, disc, opt_g, opt_d, ada: AdaState, sup_digests: dict):
    arrays = {f"gen.{k}": v for k, v in gen.state_dict().items()}
    arrays.update({f"disc.{k}": v for k, v in disc.state_dict().items()})
    og_arrays, og_meta = _opt_arrays("opt_g", opt_g)
    od_arrays, od_meta = _opt_arrays("opt_d", opt_d)
    arrays.update(og_arrays)
    arrays.update(od_arrays)
    manifest = {
        "format": CKPT_FORMAT,
        "kind": "train",
        "step": step,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "ada": ada.to_dict(),
        "supervisor_digests": sup_digests,
        "gen_digest": state_dict_digest(gen.state_dict()),
        "opt_g": og_meta,
        "opt_d": od_meta,
    }
    save_archive(path, manifest, arrays)


def _build_gen_disc(cfg: TrainConfig):
    gen = build_generator(cfg.generator_config(), seed=cfg.seed)
    disc = PatchDiscriminator3d(in_channels=2, base_width=16, n_layers=3)
    from .generators import init_weights

    init_weights(disc, cfg.seed + 1)
    return gen, disc


def load_training_checkpoint(path):
    """-> (manifest, cfg, gen, disc, opt_g, opt_d, ada) restored from the archive."""
    try:
        manifest, arrays = load_archive(path)
    except FileNotFoundError as e:
        raise MissingArtifact(str(e)) from e
    if manifest.get("kind") != "train":
        raise MissingArtifact(f"{path} is not a training checkpoint")
    cfg = TrainConfig.from_dict(manifest["config"])
    gen, disc = _build_gen_disc(cfg)
    for module, prefix in ((gen, "gen."), (disc, "disc.")):
        state = {}
        for name, param in module.state_dict().items():
            arr = arrays.get(prefix + name)
            if arr is None:
                raise MissingArtifact(f"checkpoint {path} missing tensor {prefix + name}")
            state[name] = torch.from_numpy(arr.copy())
        module.load_state_dict(state)
    got = state_dict_digest(gen.state_dict())
    if got != manifest["gen_digest"]:
        raise TrainAbort(f"generator digest mismatch in {path}")
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    _restore_opt("opt_g", opt_g, arrays, manifest["opt_g"])
    _restore_opt("opt_d", opt_d, arrays, manifest["opt_d"])
    ada = AdaState.from_dict(manifest["ada"])
    return manifest, cfg, gen, disc, opt_g, opt_d, ada


def load_generator_from_checkpoint(path):
    manifest, cfg, gen, _, _, _, _ = load_training_checkpoint(path)
    gen.eval()
    return manifest, cfg, gen


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------


def _finite_or_abort(name: str, value, step: int) -> float:
    if isinstance(value, torch.Tensor):
        value = value.detach()
    v = float(value)
    if not math.isfinite(v):
        raise TrainAbort(f"loss term {name!r} became non-finite ({v}) at step {step}", term=name, step=step)
    return v


def _verify_sup_digests(vsm_net, hfc_nets, sup_digests: dict, step: int) -> None:
    if vsm_net is not None:
        got = state_dict_digest(vsm_net.state_dict())
        if got != sup_digests["vsm"]:
            raise TrainAbort(f"VSM digest drifted at step {step}: frozen supervisor was modified", step=step)
    for slab, net in hfc_nets.items():
        got = state_dict_digest(net.state_dict())
        if got != sup_digests[f"hfc_{slab}"]:
            raise TrainAbort(f"HFC[{slab}] digest drifted at step {step}", step=step)


def train(cfg: TrainConfig) -> Path:
    """Run one training job; returns the final checkpoint path."""
    if deterministic_mode_requested():
        apply_determinism()
    torch.manual_seed(cfg.seed)
    out_dir = Path(cfg.out_dir) if cfg.out_dir else Path("runs") / f"{cfg.direction}_{cfg.seed}"
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_dir / "config.yaml")

    train_ids, _, _ = _split_ids(cfg.data_root, cfg)
    data = _pair_tensors(cfg.data_root, train_ids, cfg.direction, cfg.dims)
    vsm_net, hfc_nets, sup_digests = _load_supervisors(cfg)

    gen, disc = _build_gen_disc(cfg)
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    ada = cfg.ada_state()
    w = cfg.weights
    is_o2a = cfg.direction == "oct2octa"

    order_rng = seed_rng(cfg.seed, 0, "pair-order")
    order = list(order_rng.permutation(len(data)))
    sign_buffer: list[np.ndarray] = []
    ckpt_path = out_dir / "checkpoint.ckpt"
    t0 = time.time()

    try:
        with L.LossCsvWriter(out_dir / "loss.csv") as log:
            for step in range(cfg.steps):
                picks = []
                for _ in range(min(cfg.batch_size, len(data))):
                    if not order:
                        order = list(seed_rng(cfg.seed, step, "pair-order").permutation(len(data)))
                    picks.append(order.pop(0))
                cond = torch.cat([data[i][1] for i in picks], dim=0)
                target = torch.cat([data[i][2] for i in picks], dim=0)

                fake = gen.translate(cond)

                # --- discriminator update (fake detached) ---
                aug_rng_real = seed_rng(cfg.seed, step, "aug-real")
                aug_rng_fake = seed_rng(cfg.seed, step, "aug-fake")
                cond_r, cand_r = augment_pair(cond, target, ada.p, aug_rng_real)
                cond_f, cand_f = augment_pair(cond, fake.detach(), ada.p, aug_rng_fake)
                d_real_logits = disc(cond_r, cand_r)
                d_fake_logits = disc(cond_f, cand_f)
                adv_d = L.d_adv_loss(d_real_logits, d_fake_logits)
                _finite_or_abort("adv_d", adv_d, step)
                opt_d.zero_grad(set_to_none=True)
                adv_d.backward()
                opt_d.step()

                sign_buffer.append(torch.sign(d_real_logits.detach()).numpy().ravel())
                if (step + 1) % ada.interval == 0:
                    ada = ada_update(ada, np.concatenate(sign_buffer))
                    sign_buffer = []

                # --- generator update (fresh transform, grads flow through aug) ---
                aug_rng_gen = seed_rng(cfg.seed, step, "aug-gen")
                cond_g, cand_g = augment_pair(cond, fake, ada.p, aug_rng_gen)
                adv_g = L.g_adv_loss(disc(cond_g, cand_g))
                l1 = L.l1_3d(fake, target)
                terms = {
                    "adv_d": float(adv_d.detach()),
                    "adv_g": _finite_or_abort("adv_g", adv_g.detach(), step),
                    "l1": _finite_or_abort("l1", l1.detach(), step),
                }
                if is_o2a:
                    total = L.gan_term(adv_g, l1, w)
                    if vsm_net is not None:
                        vsm_term = vsm_loss(vsm_net, fake, target)
                        terms["vsm"] = _finite_or_abort("vsm", vsm_term.detach(), step)
                        total = total + w.lambda_c * vsm_term
                    if hfc_nets:
                        proj = L.proj_loss(target, fake)
                        ilm = L.layer_proj_loss(hfc_nets["ilm_opl"], target, fake)
                        opl = L.layer_proj_loss(hfc_nets["opl_bm"], target, fake)
                        tv = L.tv3d(fake, mean_normalized=cfg.tv_mean_normalized)
                        terms["proj"] = _finite_or_abort("proj", proj.detach(), step)
                        terms["ilm_opl"] = _finite_or_abort("ilm_opl", ilm.detach(), step)
                        terms["opl_bm"] = _finite_or_abort("opl_bm", opl.detach(), step)
                        terms["tv3d"] = _finite_or_abort("tv3d", tv.detach(), step)
                        hfc_tot = L.hfc_total(proj, ilm, opl, tv, w)
                        terms["hfc_total"] = _finite_or_abort("hfc_total", hfc_tot.detach(), step)
                        total = total + hfc_tot
                else:
                    total = L.oct_total(adv_g, l1, w)
                terms["total"] = _finite_or_abort("total", total.detach(), step)

                opt_g.zero_grad(set_to_none=True)
                total.backward()
                opt_g.step()

                if step % cfg.log_every == 0 or step == cfg.steps - 1:
                    log.write(L.LossReport(step=step, terms=terms))

                if (step + 1) % cfg.checkpoint_every == 0 or step == cfg.steps - 1:
                    _verify_sup_digests(vsm_net, hfc_nets, sup_digests, step)
                    save_training_checkpoint(ckpt_path, cfg, step + 1, gen, disc, opt_g, opt_d, ada, sup_digests)
    except TrainAbort as abort:
        report = out_dir / "abort_report.txt"
        report.write_text(
            f"training aborted\nterm: {abort.term}\nstep: {abort.step}\nreason: {abort}\n"
        )
        raise

    (out_dir / "done.txt").write_text(
        f"steps {cfg.steps}\nwall_seconds {time.time() - t0:.1f}\nada_p {ada.p}\n"
    )
    return ckpt_path


# ---------------------------------------------------------------------------
# inference / evaluation / ablation
# ---------------------------------------------------------------------------


def translate_volume(ckpt_path, in_path, out_path, direction: str) -> Path:
    """Translate one volume file with a trained generator; writes [0,1] output."""
    manifest, cfg, gen = load_generator_from_checkpoint(ckpt_path)
    if cfg.direction != direction:
        raise ConfigError(f"checkpoint is {cfg.direction}, requested {direction}")
    vol = load_volume(in_path)
    factor = 2**cfg.n_stages
    if any(d % factor for d in vol.dims):
        raise ConfigError(f"input dims {vol.dims} not divisible by 2^{cfg.n_stages}")
    x = torch.from_numpy(vol.data)[None, None]
    with torch.no_grad():
        y = gen.translate(x)[0, 0].numpy()
    out = Volume3D(np.clip(y, 0.0, 1.0).astype(np.float32), value_range=(0.0, 1.0))
    out_path = Path(out_path)
    save_volume(out, out_path)
    return out_path


def _translate_fn(gen):
    def fn(vol: Volume3D) -> Volume3D:
        x = torch.from_numpy(vol.data)[None, None]
        with torch.no_grad():
            y = gen.translate(x)[0, 0].numpy()
        return Volume3D(np.clip(y, 0.0, 1.0).astype(np.float32), value_range=(0.0, 1.0))

    return fn


def evaluate_checkpoint(ckpt_path, split: str, out_dir=None, data_root=None) -> MetricsReport:
    """Evaluate a checkpoint on one split; writes metrics CSV + table."""
    manifest, cfg, gen = load_generator_from_checkpoint(ckpt_path)
    root = data_root or cfg.data_root
    train_ids, val_ids, test_ids = _split_ids(root, cfg)
    ids = {"train": train_ids, "val": val_ids, "test": test_ids}.get(split)
    if ids is None:
        raise ConfigError(f"split must be train/val/test, got {split!r}")
    if not ids:
        raise MissingArtifact(f"split {split!r} is empty for {root}")
    data = _pair_tensors(root, ids, cfg.direction, cfg.dims)
    fn = _translate_fn(gen)
    triples = []
    for pid, cond, target, pair in data:
        inp = pair.oct if cfg.direction == "oct2octa" else pair.octa
        tgt = pair.octa if cfg.direction == "oct2octa" else pair.oct
        triples.append((pid, inp, tgt))
    report = evaluate_pairs(fn, triples, split)
    out_dir = Path(out_dir) if out_dir else Path(ckpt_path).parent / f"eval_{split}"
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_csv(out_dir / "metrics.csv")
    (out_dir / "table.txt").write_text(report.format_table(f"{cfg.direction}/{split}"))
    return report


def run_ablation(base_cfg: TrainConfig, cells, out_dir, eval_split: str = "test") -> list:
    """Train/evaluate one run per grid cell; failures are recorded, not fatal.

    ``cells`` is a list of {"label": str, "overrides": {field: value}}.
    Returns rows of (label, psnr, ssim_raw, mae) with Nones on failure.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for cell in cells:
        label = cell["label"]
        cfg_d = base_cfg.to_dict()
        cfg_d.update(cell.get("overrides", {}))
        cfg_d["out_dir"] = str(out_dir / label)
        try:
            cfg = TrainConfig.from_dict(cfg_d)
            ckpt = train(cfg)
            report = evaluate_checkpoint(ckpt, eval_split, out_dir=out_dir / label / f"eval_{eval_split}")
            m = report.mean()
            rows.append((label, m["psnr"], m["ssim"], m["mae"]))
        except Exception as e:  # record the failure, keep the grid going
            (out_dir / f"{label}_error.txt").write_text(f"{type(e).__name__}: {e}\n")
            rows.append((label, None, None, None))
    table = format_grid_table(rows)
    (out_dir / "ablation_table.txt").write_text(table)
    with open(out_dir / "ablation.csv", "w", newline="") as fh:
        import csv as _csv

        writer = _csv.writer(fh)
        writer.writerow(["label", "psnr", "ssim", "mae"])
        for label, p, s, m in rows:
            writer.writerow([label, "" if p is None else repr(p), "" if s is None else repr(s), "" if m is None else repr(m)])
    return rows
