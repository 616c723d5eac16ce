"""Stage-2 training driver: optimizes the denoiser on a frozen codec's
latents, with gradient accumulation and per-epoch deterministic shuffling.

Per-target timesteps and noise are pre-drawn for the whole epoch from an
epoch-seeded generator, so micro-batching (and therefore the accumulation
setting) cannot change which (t, eps) a given record sees. Consecutive
micro-batches form one accumulation group; accum=2 at batch b matches
accum=1 at batch 2b up to summation order.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .codec import CodecCheckpoint, decode_batch, encode_batch
from .config import ExperimentConfig
from .diffusion import NoiseSchedule, make_schedule, sample
from .errors import DataError, NumericsError
from .checkpoint import load_arrays, save_arrays
from .scenegen.camera import CameraPose
from .scenegen.dataset import DatasetManifest, load_image
from .unet import Denoiser, DenoiserCheckpoint


@dataclass
class EncodedDataset:
    """All latents for one split, encoded once up front (codec is frozen)."""

    record_ids: list[str]            # "<object_id>/frame_<f>"
    z_src: torch.Tensor              # (R, c, h, w)
    z_tgt: torch.Tensor              # (R, N, c, h, w)
    skels: torch.Tensor              # (R, N, c, h, w)
    g: torch.Tensor                  # (R, e)
    cams: list[list[CameraPose]]     # per record, per target
    target_ids: list[list[str]]      # "<object_id>/frame_<f>/tgt_<j>"
    ious: list[list[float]]

    @property
    def records(self) -> int:
        return len(self.record_ids)

    @property
    def targets_per_record(self) -> int:
        return self.z_tgt.shape[1]


def encode_split(manifest: DatasetManifest, codec: CodecCheckpoint, split: str) -> EncodedDataset:
    recs = manifest.split_records(split)
    if not recs:
        raise DataError(f"manifest has no {split!r} records")
    n_targets = {len(r["targets"]) for r in recs}
    if len(n_targets) != 1:
        raise DataError(f"records disagree on target count: {sorted(n_targets)}")

    ids, cams, target_ids, ious = [], [], [], []
    src_imgs, tgt_imgs, skel_imgs = [], [], []
    for r in recs:
        ids.append(f"{r['object_id']}/frame_{r['frame_index']:02d}")
        src_imgs.append(load_image(manifest.root / r["source"]["file"]))
        cams.append([CameraPose.from_dict(t["camera"]) for t in r["targets"]])
        target_ids.append([f"{ids[-1]}/tgt_{j}" for j in range(len(r["targets"]))])
        ious.append([float(t["bbox_iou"]) for t in r["targets"]])
        for t in r["targets"]:
            tgt_imgs.append(load_image(manifest.root / t["image"]))
            skel_imgs.append(load_image(manifest.root / t["skeleton"]))

    n = n_targets.pop()
    z_src = torch.from_numpy(encode_batch(np.stack(src_imgs), codec))
    z_tgt = torch.from_numpy(encode_batch(np.stack(tgt_imgs), codec))
    skels = torch.from_numpy(encode_batch(np.stack(skel_imgs), codec))
    r = len(recs)
    pooled = z_src.mean(dim=(2, 3)).numpy()
    proj = codec.params["global_proj"]
    g = torch.from_numpy(pooled @ proj.T)
    return EncodedDataset(
        record_ids=ids,
        z_src=z_src,
        z_tgt=z_tgt.reshape(r, n, *z_tgt.shape[1:]),
        skels=skels.reshape(r, n, *skels.shape[1:]),
        g=g,
        cams=cams,
        target_ids=target_ids,
        ious=ious,
    )


def _epoch_plan(ds: EncodedDataset, seed: int, epoch: int, timesteps: int, cond_dropout: float):
    """Deterministic per-epoch record order plus per-target (t, eps, keep)."""
    r, n = ds.records, ds.targets_per_record
    order = np.random.default_rng(np.random.SeedSequence([seed % 2**64, epoch, 0x0E0])).permutation(r)
    gen = torch.Generator().manual_seed((seed * 2654435761 + epoch * 40503 + 7) & 0x7FFFFFFFFFFFFFFF)
    t_all = torch.randint(0, timesteps, (r, n), generator=gen)
    eps_all = torch.randn(ds.z_tgt.shape, generator=gen, dtype=ds.z_tgt.dtype)
    if cond_dropout > 0:
        keep = (torch.rand((r, n), generator=gen) >= cond_dropout).to(ds.z_tgt.dtype)
    else:
        keep = torch.ones((r, n), dtype=ds.z_tgt.dtype)
    return order, t_all, eps_all, keep


def _flat_batch_loss(model, ds: EncodedDataset, idx: np.ndarray, sched_ab: torch.Tensor,
                     t_all, eps_all, keep, uses_skeleton: bool, uses_rays: bool):
    """Loss over the records in idx, all targets flattened into one forward."""
    n = ds.targets_per_record
    b = len(idx)
    ii = torch.from_numpy(np.ascontiguousarray(idx))
    z0 = ds.z_tgt[ii].reshape(b * n, *ds.z_tgt.shape[2:])
    eps = eps_all[ii].reshape_as(z0)
    t = t_all[ii].reshape(b * n)
    kp = keep[ii].reshape(b * n, 1, 1, 1)
    ab_t = sched_ab[t].view(-1, 1, 1, 1)
    z_t = ab_t.sqrt() * z0 + (1.0 - ab_t).sqrt() * eps
    z_src = ds.z_src[ii].repeat_interleave(n, dim=0)
    skel = ds.skels[ii].reshape(b * n, *ds.skels.shape[2:]) * kp
    g = ds.g[ii].repeat_interleave(n, dim=0)
    g = g * kp[:, :, 0, 0]
    cams = None
    if uses_rays:
        cams = [cam for k in idx for cam in ds.cams[k]]
    pred = model(z_t, t, z_src, skel if uses_skeleton else None, g, cams)
    return torch.mean((eps - pred) ** 2)


def _optimizer_arrays(opt: torch.optim.Adam, model: Denoiser) -> dict[str, np.ndarray]:
    arrays = {}
    names = [n for n, _ in model.named_parameters()]
    params = list(model.parameters())
    for name, p in zip(names, params):
        st = opt.state.get(p)
        if not st:
            continue
        arrays[f"opt.{name}.exp_avg"] = st["exp_avg"].numpy().copy()
        arrays[f"opt.{name}.exp_avg_sq"] = st["exp_avg_sq"].numpy().copy()
        arrays[f"opt.{name}.step"] = np.asarray(
            st["step"].item() if torch.is_tensor(st["step"]) else st["step"], dtype=np.float64
        )
    return arrays


def _restore_optimizer(opt: torch.optim.Adam, model: Denoiser, arrays: dict[str, np.ndarray]) -> None:
    for name, p in model.named_parameters():
        key = f"opt.{name}.exp_avg"
        if key not in arrays:
            continue
        # the step scalar may come back 0-d or 1-d depending on the container
        step = np.asarray(arrays[f"opt.{name}.step"]).reshape(-1)[0]
        opt.state[p] = {
            "step": torch.tensor(float(step)),
            "exp_avg": torch.from_numpy(arrays[f"opt.{name}.exp_avg"].copy()),
            "exp_avg_sq": torch.from_numpy(arrays[f"opt.{name}.exp_avg_sq"].copy()),
        }


def train_denoiser(
    manifest: DatasetManifest,
    codec: CodecCheckpoint,
    cfg: ExperimentConfig,
    out_dir: str | Path,
    warm_start: str | Path | None = None,
    resume: str | Path | None = None,
    codec_ref: str = "",
) -> DenoiserCheckpoint:
    """Train the denoiser; writes epoch checkpoints and a loss-curve CSV to
    out_dir and returns the final checkpoint."""
    cfg.validate()
    tr = cfg.training
    if tr.threads > 0:
        torch.set_num_threads(tr.threads)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    sched = make_schedule(cfg.diffusion.timesteps, cfg.diffusion.beta_min, cfg.diffusion.beta_max)
    sched.validate()
    ds = encode_split(manifest, codec, "train")
    c = ds.z_tgt.shape[2]

    torch.manual_seed(tr.seed)
    model = Denoiser(cfg.unet, c, ds.skels.shape[2], ds.g.shape[1])
    start_epoch = 0
    opt = torch.optim.Adam(model.parameters(), lr=tr.lr)

    if warm_start is not None and resume is not None:
        raise DataError("warm_start and resume are mutually exclusive")
    if warm_start is not None:
        base = DenoiserCheckpoint.load(warm_start)
        own = model.state_dict()
        loadable = {k: torch.from_numpy(v) for k, v in base.params.items() if k in own}
        model.load_state_dict(loadable, strict=False)
    if resume is not None:
        prev = DenoiserCheckpoint.load(resume)
        if dataclasses.asdict(prev.unet) != dataclasses.asdict(cfg.unet):
            raise DataError("resume checkpoint was trained with a different unet config")
        model.load_state_dict({k: torch.from_numpy(v) for k, v in prev.params.items()})
        arrays, _ = load_arrays(resume)
        _restore_optimizer(opt, model, arrays)
        start_epoch = int(prev.meta.get("epochs_run", 0))

    if ds.records == 0:
        raise DataError("train split is empty")
    ab = torch.as_tensor(sched.alpha_bar, dtype=ds.z_tgt.dtype)
    # shrink for datasets smaller than one batch/accumulation group; the tail
    # beyond the last full microbatch is dropped (classic drop-last batching)
    micro = min(tr.batch_size, ds.records)
    accum = min(tr.accum, ds.records // micro)
    loss_rows: list[tuple[int, int, float]] = []
    opt_steps = 0
    stop = False

    def checkpoint(path: Path, epochs_run: int) -> DenoiserCheckpoint:
        params = {k: v.detach().numpy().copy() for k, v in model.state_dict().items()}
        ck = DenoiserCheckpoint(
            unet=cfg.unet,
            diffusion=cfg.diffusion,
            params=params,
            latent_channels=c,
            skel_channels=ds.skels.shape[2],
            global_dim=ds.g.shape[1],
            codec_ref=codec_ref,
            meta={"epochs_run": epochs_run, "opt_steps": opt_steps, "mode": cfg.unet.mode},
        )
        arrays = dict(params)
        arrays.update(_optimizer_arrays(opt, model))
        meta = {
            "kind": "denoiser",
            "unet": dataclasses.asdict(cfg.unet),
            "diffusion": dataclasses.asdict(cfg.diffusion),
            "latent_channels": c,
            "skel_channels": ds.skels.shape[2],
            "global_dim": ds.g.shape[1],
            "codec_ref": codec_ref,
            **ck.meta,
        }
        save_arrays(path, arrays, meta)
        return ck

    epoch = start_epoch - 1
    for epoch in range(start_epoch, tr.epochs):
        order, t_all, eps_all, keep = _epoch_plan(
            ds, tr.seed, epoch, sched.timesteps, tr.cond_dropout
        )
        n_micro = ds.records // micro
        n_groups = n_micro // accum
        for gidx in range(n_groups):
            opt.zero_grad(set_to_none=True)
            group_loss = 0.0
            for m in range(accum):
                lo = (gidx * accum + m) * micro
                idx = order[lo : lo + micro]
                loss = _flat_batch_loss(
                    model, ds, idx, ab, t_all, eps_all, keep,
                    cfg.unet.uses_skeleton, cfg.unet.uses_rays,
                ) / accum
                loss.backward()
                group_loss += float(loss.detach())
            if not np.isfinite(group_loss):
                raise NumericsError(f"non-finite loss at epoch {epoch}, step {opt_steps}")
            opt.step()
            opt_steps += 1
            loss_rows.append((opt_steps, epoch, group_loss))
            if tr.max_steps and opt_steps >= tr.max_steps:
                stop = True
                break
        if tr.checkpoint_every_epoch:
            checkpoint(out / f"denoiser_epoch_{epoch:04d}.ckpt", epoch + 1)
        if stop:
            break

    epochs_run = max(start_epoch, epoch + 1)
    final = checkpoint(out / "denoiser.ckpt", epochs_run)

    with open(out / "loss.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "epoch", "loss"])
        for row in loss_rows:
            writer.writerow([row[0], row[1], f"{row[2]:.8f}"])
    return final


def generate_split(
    manifest: DatasetManifest,
    codec: CodecCheckpoint,
    ckpt: DenoiserCheckpoint,
    sampler_cfg,
    split: str = "test",
    limit: int | None = None,
    progress=None,
) -> dict[str, np.ndarray]:
    """Sample every target of a split; returns {target_id: (H, W, 3) image}.

    `limit` caps the number of records (manifest order); `progress` is an
    optional callback(record_index, record_total).
    """
    model = ckpt.build()
    sched = make_schedule(ckpt.diffusion.timesteps, ckpt.diffusion.beta_min, ckpt.diffusion.beta_max)
    ds = encode_split(manifest, codec, split)
    n_rec = ds.records if limit is None else min(limit, ds.records)
    out: dict[str, np.ndarray] = {}
    for i in range(n_rec):
        if progress is not None:
            progress(i, n_rec)
        lat = sample(
            model,
            ds.z_src[i],
            ds.skels[i] if ckpt.unet.uses_skeleton else torch.zeros_like(ds.skels[i]),
            ds.g[i],
            sampler_cfg,
            sched,
            cams=ds.cams[i] if ckpt.unet.uses_rays else None,
        )
        imgs = decode_batch(lat.numpy(), codec)
        for j, tid in enumerate(ds.target_ids[i]):
            out[tid] = imgs[j].astype(np.float64)
    return out
