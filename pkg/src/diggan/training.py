"""Staged training: angle-discriminator pretraining (A), autoencoding
warm-up (B1), cross-view training (B2), and triplet fine-tuning (C).

One discriminator step (both discriminators) alternates with one
generator/encoder step. The triplet term is forced to zero everywhere
except stage C.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import torch

from .checkpoint import Checkpoint, save_checkpoint
from .data import (
    SampleRecord,
    dataset_views,
    make_angle_pretrain_batch,
    n_views,
    one_hot,
    sample_pair_batch,
    sample_triplet_batch,
)
from .errors import (
    ArchitectureMismatchError,
    NonFiniteLossError,
    ShapeError,
    StageOrderError,
)
from .losses import (
    LossWeights,
    angle_adv_losses,
    id_adv_losses,
    recon_loss,
    total_generator_objective,
    triplet_loss,
)
from .networks import DEFAULT_IMAGE_DIMS, ModelParams, init_params

_PROB_EPS = 1e-6  # keeps log() finite when a discriminator saturates
_STAGE_BEFORE = {"B1": "A", "B2": "B1", "C": "B2"}
_STAGE_ORDINAL = {"A": 1, "B1": 2, "B2": 3, "C": 4}

LOG_FIELDS = ("step", "stage", "loss_d_angle", "loss_d_id", "loss_g_angle",
              "loss_g_id", "loss_rec", "loss_triplet", "total")


@dataclass(frozen=True)
class TrainConfig:
    steps_a: int = 300
    steps_b1: int = 200
    steps_b2: int = 500
    steps_c: int = 1000
    batch_size: int = 8
    pretrain_batch: int = 32
    lr_encoder: float = 2e-4
    lr_generator: float = 2e-4
    lr_d_angle: float = 2e-4
    lr_d_id: float = 2e-4
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    checkpoint_every: int = 0
    d_z: int = 128
    n_views: int = 4
    image_dims: tuple = DEFAULT_IMAGE_DIMS
    base_channels: int = 16
    allow_stage_skip: bool = False
    deterministic: bool = False

    def __post_init__(self):
        for name in ("steps_a", "steps_b1", "steps_b2", "steps_c"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.pretrain_batch % 2 != 0:
            raise ValueError("pretrain_batch must be even")

    def to_mapping(self) -> dict:
        m = {
            "steps_a": self.steps_a, "steps_b1": self.steps_b1,
            "steps_b2": self.steps_b2, "steps_c": self.steps_c,
            "batch_size": self.batch_size, "pretrain_batch": self.pretrain_batch,
            "lr_encoder": self.lr_encoder, "lr_generator": self.lr_generator,
            "lr_d_angle": self.lr_d_angle, "lr_d_id": self.lr_d_id,
            "w_triplet": self.weights.w_triplet, "w_rec": self.weights.w_rec,
            "w_angle": self.weights.w_angle, "w_id": self.weights.w_id,
            "margin": self.weights.margin,
            "seed": self.seed, "checkpoint_every": self.checkpoint_every,
            "d_z": self.d_z, "n_views": self.n_views,
            "image_dims": f"{self.image_dims[0]}x{self.image_dims[1]}",
            "base_channels": self.base_channels,
            "allow_stage_skip": int(self.allow_stage_skip),
            "deterministic": int(self.deterministic),
        }
        return m

    @staticmethod
    def from_mapping(m: dict) -> "TrainConfig":
        def geti(k, d):
            return int(m.get(k, d))

        def getf(k, d):
            return float(m.get(k, d))

        dims = m.get("image_dims", "128x88")
        if isinstance(dims, str):
            h, w = (int(t) for t in dims.lower().split("x"))
        else:
            h, w = dims
        return TrainConfig(
            steps_a=geti("steps_a", 300), steps_b1=geti("steps_b1", 200),
            steps_b2=geti("steps_b2", 500), steps_c=geti("steps_c", 1000),
            batch_size=geti("batch_size", 8),
            pretrain_batch=geti("pretrain_batch", 32),
            lr_encoder=getf("lr_encoder", 2e-4),
            lr_generator=getf("lr_generator", 2e-4),
            lr_d_angle=getf("lr_d_angle", 2e-4),
            lr_d_id=getf("lr_d_id", 2e-4),
            weights=LossWeights(
                w_triplet=getf("w_triplet", 1.0), w_rec=getf("w_rec", 1.0),
                w_angle=getf("w_angle", 1.0), w_id=getf("w_id", 1.0),
                margin=getf("margin", 0.2),
            ),
            seed=geti("seed", 0), checkpoint_every=geti("checkpoint_every", 0),
            d_z=geti("d_z", 128), n_views=geti("n_views", 4),
            image_dims=(h, w), base_channels=geti("base_channels", 16),
            allow_stage_skip=bool(geti("allow_stage_skip", 0)),
            deterministic=bool(geti("deterministic", 0)),
        )


def deterministic_mode_requested(config: Optional[TrainConfig] = None) -> bool:
    if os.environ.get("DIGGAN_DETERMINISTIC") == "1":
        return True
    return bool(config and config.deterministic)


def _apply_determinism(config: TrainConfig) -> None:
    if deterministic_mode_requested(config):
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def _validate_data(config: TrainConfig, records: Sequence[SampleRecord]) -> None:
    nv = n_views(records)
    if nv != config.n_views:
        raise ShapeError(f"config expects {config.n_views} views, dataset has {nv}")
    shape = records[0].pixels().shape
    if tuple(shape) != tuple(config.image_dims):
        raise ShapeError(f"config image_dims {config.image_dims} vs data {shape}")


class _Session:
    """Live networks plus per-network Adam state for one or more stages."""

    def __init__(self, config: TrainConfig, checkpoint: Optional[Checkpoint] = None):
        self.config = config
        _apply_determinism(config)
        if checkpoint is None:
            self.params = init_params(
                d_z=config.d_z, n_views=config.n_views,
                image_dims=config.image_dims, seed=config.seed,
                base_channels=config.base_channels,
            )
            self.global_step = 0
        else:
            self.params = checkpoint.params
            self.global_step = checkpoint.global_step
        p = self.params
        betas = (0.5, 0.999)
        self.opt_g = torch.optim.Adam(
            [
                {"params": list(p.encoder.parameters()), "lr": config.lr_encoder},
                {"params": list(p.generator.parameters()), "lr": config.lr_generator},
            ],
            betas=betas,
        )
        self.opt_da = torch.optim.Adam(p.d_angle.parameters(),
                                       lr=config.lr_d_angle, betas=betas)
        self.opt_di = torch.optim.Adam(p.d_id.parameters(),
                                       lr=config.lr_d_id, betas=betas)
        if checkpoint is not None and checkpoint.optimizer_state:
            st = checkpoint.optimizer_state
            for name, opt in (("g", self.opt_g), ("d_angle", self.opt_da),
                              ("d_id", self.opt_di)):
                if st.get(name) and st[name]["state"]:
                    opt.load_state_dict(st[name])

    def optimizer_state(self) -> dict:
        return {"g": self.opt_g.state_dict(),
                "d_angle": self.opt_da.state_dict(),
                "d_id": self.opt_di.state_dict()}

    def to_checkpoint(self, stage: str, log: list) -> Checkpoint:
        return Checkpoint(
            params=self.params, config=self.config.to_mapping(), stage=stage,
            optimizer_state=self.optimizer_state(),
            global_step=self.global_step, loss_log=log,
        )

    def stack_images(self, records_or_pixels) -> torch.Tensor:
        arrs = [r.pixels() if isinstance(r, SampleRecord) else r
                for r in records_or_pixels]
        x = np.stack(arrs)[:, None].astype(np.float32)
        return torch.as_tensor(x, dtype=self.params.dtype)

    def stack_views(self, one_hots) -> torch.Tensor:
        return torch.as_tensor(np.stack(one_hots), dtype=self.params.dtype)


def _clamp(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(_PROB_EPS, 1.0 - _PROB_EPS)


def _ensure_finite(stage: str, step: int, values: dict) -> None:
    for name, v in values.items():
        if not np.isfinite(v):
            raise NonFiniteLossError(
                f"{name} became {v} at stage {stage} step {step}; "
                f"all losses this step: {values}"
            )


def _check_stage_order(config: TrainConfig, checkpoint: Checkpoint, stage: str) -> None:
    expected = _STAGE_BEFORE[stage]
    if checkpoint.stage != expected:
        msg = (f"stage {stage} expects a checkpoint from stage {expected}, "
               f"got {checkpoint.stage!r}")
        if config.allow_stage_skip:
            import warnings

            warnings.warn(msg + " (allow_stage_skip is set, continuing)")
        else:
            raise StageOrderError(msg)


def _rng_for(config: TrainConfig, stage: str) -> np.random.Generator:
    return np.random.default_rng([0x7A13, config.seed, _STAGE_ORDINAL[stage]])


def train_stage_A(config: TrainConfig, records: Sequence[SampleRecord],
                  steps: Optional[int] = None) -> Checkpoint:
    """Pretrain the angle discriminator on half-true, half-false labels.

    Only D_angle parameters change; encoder, generator and D_id stay at
    their seeded initialization.
    """
    _validate_data(config, records)
    session = _Session(config)
    rng = _rng_for(config, "A")
    log = []
    n_steps = config.steps_a if steps is None else steps
    for _ in range(n_steps):
        batch = make_angle_pretrain_batch(records, config.pretrain_batch, rng)
        x = session.stack_images([s.record for s in batch])
        v = session.stack_views([s.label_one_hot for s in batch])
        t = torch.as_tensor([float(s.truth_bit) for s in batch],
                            dtype=session.params.dtype)
        scores = _clamp(session.params.d_angle(x, v))
        bce = -(t * torch.log(scores) + (1 - t) * torch.log(1 - scores)).mean()
        session.opt_da.zero_grad()
        bce.backward()
        session.opt_da.step()
        session.global_step += 1
        vals = {"loss_d_angle": bce.item(), "loss_d_id": 0.0,
                "loss_g_angle": 0.0, "loss_g_id": 0.0, "loss_rec": 0.0,
                "loss_triplet": 0.0, "total": 0.0}
        _ensure_finite("A", session.global_step, vals)
        log.append({"step": session.global_step, "stage": "A"} | vals)
    return session.to_checkpoint("A", log)


def _gan_step(session: _Session, records, rng, stage: str) -> dict:
    cfg = session.config
    p = session.params
    pairs = sample_pair_batch(records, cfg.batch_size, rng,
                              force_same_view=(stage == "B1"))
    x_p = session.stack_images([s.source for s in pairs])
    x_k = session.stack_images([s.target for s in pairs])
    v_k = session.stack_views([s.target_one_hot for s in pairs])

    # Discriminator step on detached fakes.
    with torch.no_grad():
        x_fake_d = p.generator(p.encoder(x_p), v_k)
    da_real = _clamp(p.d_angle(x_k, v_k))
    da_fake = _clamp(p.d_angle(x_fake_d, v_k))
    l_da, _ = angle_adv_losses(da_real, da_fake)
    di_real = _clamp(p.d_id(x_p, x_k))
    di_fake = _clamp(p.d_id(x_p, x_fake_d))
    l_di, _ = id_adv_losses(di_real, di_fake)
    session.opt_da.zero_grad()
    session.opt_di.zero_grad()
    (l_da + l_di).backward()
    session.opt_da.step()
    session.opt_di.step()

    # Generator/encoder step.
    z = p.encoder(x_p)
    x_fake = p.generator(z, v_k)
    ga = _clamp(p.d_angle(x_fake, v_k))
    gi = _clamp(p.d_id(x_p, x_fake))
    _, l_g_angle = angle_adv_losses(da_real.detach(), ga)
    _, l_g_id = id_adv_losses(di_real.detach(), gi)
    l_rec = recon_loss(x_fake[:, 0], x_k[:, 0])
    if stage == "C" and cfg.weights.w_triplet > 0:
        trips = sample_triplet_batch(records, cfg.batch_size, rng)
        stacked = session.stack_images(
            [t.anchor for t in trips] + [t.positive for t in trips]
            + [t.negative for t in trips]
        )
        codes = p.encoder(stacked)
        b = len(trips)
        l_tri = triplet_loss(codes[:b], codes[b : 2 * b], codes[2 * b :],
                             cfg.weights.margin)
        weights = cfg.weights
    else:
        l_tri = torch.zeros((), dtype=session.params.dtype)
        weights = replace(cfg.weights, w_triplet=0.0)
    total = total_generator_objective(l_tri, l_rec, l_g_angle, l_g_id, weights)
    session.opt_g.zero_grad()
    total.backward()
    session.opt_g.step()

    session.global_step += 1
    vals = {"loss_d_angle": l_da.item(), "loss_d_id": l_di.item(),
            "loss_g_angle": l_g_angle.item(), "loss_g_id": l_g_id.item(),
            "loss_rec": l_rec.item(), "loss_triplet": l_tri.item(),
            "total": total.item()}
    _ensure_finite(stage, session.global_step, vals)
    return {"step": session.global_step, "stage": stage} | vals


def train_stage_B(config: TrainConfig, records: Sequence[SampleRecord],
                  checkpoint: Checkpoint, substage: str,
                  steps: Optional[int] = None) -> Checkpoint:
    """Warm-up substages without the triplet term.

    B1 feeds each image as its own target (autoencoding); B2 switches to
    cross-view (source, target) pairs.
    """
    if substage not in ("B1", "B2"):
        raise ValueError(f"substage must be B1 or B2, got {substage}")
    _validate_data(config, records)
    _check_stage_order(config, checkpoint, substage)
    session = _Session(config, checkpoint)
    rng = _rng_for(config, substage)
    log = []
    n_steps = (config.steps_b1 if substage == "B1" else config.steps_b2) \
        if steps is None else steps
    for _ in range(n_steps):
        log.append(_gan_step(session, records, rng, substage))
    return session.to_checkpoint(substage, log)


def train_stage_C(config: TrainConfig, records: Sequence[SampleRecord],
                  checkpoint: Checkpoint, steps: Optional[int] = None) -> Checkpoint:
    """Fine-tune the whole network with the triplet term switched on."""
    _validate_data(config, records)
    _check_stage_order(config, checkpoint, "C")
    session = _Session(config, checkpoint)
    rng = _rng_for(config, "C")
    log = []
    n_steps = config.steps_c if steps is None else steps
    for _ in range(n_steps):
        log.append(_gan_step(session, records, rng, "C"))
    return session.to_checkpoint("final", log)


def fine_tune(config: TrainConfig, records: Sequence[SampleRecord],
              checkpoint: Checkpoint, steps: Optional[int] = None) -> Checkpoint:
    """Resume stage-C-style training from a trained model on a new dataset."""
    p = checkpoint.params
    nv = n_views(records)
    if nv != p.n_views:
        raise ArchitectureMismatchError(
            f"checkpoint was built for {p.n_views} views, dataset has {nv} "
            f"(one-hot widths differ)"
        )
    if config.d_z != p.d_z:
        raise ArchitectureMismatchError(
            f"config d_z {config.d_z} vs checkpoint d_z {p.d_z}"
        )
    cfg = replace(config, n_views=p.n_views, image_dims=p.image_dims,
                  d_z=p.d_z, base_channels=p.base_channels)
    _validate_data(cfg, records)
    session = _Session(cfg, checkpoint)
    rng = _rng_for(cfg, "C")
    log = []
    n_steps = cfg.steps_c if steps is None else steps
    for _ in range(n_steps):
        log.append(_gan_step(session, records, rng, "C"))
    return session.to_checkpoint("final", log)


def snapshot_views(params: ModelParams, probe: SampleRecord,
                   views: Sequence[float]) -> np.ndarray:
    """Row of generated images for one probe, one tile per dataset view."""
    from .networks import encode, generate

    z = encode(params, probe.pixels()[None])
    tiles = []
    for vi in range(len(views)):
        v = one_hot(vi, len(views))
        tiles.append(generate(params, z, v[None])[0])
    return np.concatenate(tiles, axis=1)


def write_loss_log(log: list, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=LOG_FIELDS)
        w.writeheader()
        for row in log:
            w.writerow({k: (row[k] if k in ("step", "stage") else f"{row[k]:.6f}")
                        for k in LOG_FIELDS})


def run_curriculum(config: TrainConfig, records: Sequence[SampleRecord],
                   out_dir=None) -> Checkpoint:
    """Chain A -> B1 -> B2 -> C, saving per-stage probe snapshots, the loss
    log and the final checkpoint when out_dir is given."""
    from .pgm import write_pgm

    views = dataset_views(records)
    probe = records[0]
    log: list = []
    snaps = {}

    ck = train_stage_A(config, records)
    log += ck.loss_log
    snaps["A"] = snapshot_views(ck.params, probe, views)
    ck = train_stage_B(config, records, ck, "B1")
    log += ck.loss_log
    snaps["B1"] = snapshot_views(ck.params, probe, views)
    ck = train_stage_B(config, records, ck, "B2")
    log += ck.loss_log
    snaps["B2"] = snapshot_views(ck.params, probe, views)
    ck = train_stage_C(config, records, ck)
    log += ck.loss_log
    snaps["C"] = snapshot_views(ck.params, probe, views)
    ck.loss_log = log

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for tag, img in snaps.items():
            write_pgm(os.path.join(out_dir, f"snapshot_stage_{tag}.pgm"),
                      np.round(img * 255.0).astype(np.uint8))
        write_loss_log(log, os.path.join(out_dir, "loss_log.csv"))
        save_checkpoint(ck, os.path.join(out_dir, "final.ckpt"))
    return ck
