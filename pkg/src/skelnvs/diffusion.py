"""Noise schedule, forward process, the conditional noise-prediction loss,
and DDPM/DDIM samplers.

The loss treats every target independently: target j is predicted from its
own noised latent, timestep, and skeleton embedding plus the shared source
latent and global embedding — no information flows between targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .config import SamplerConfig
from .errors import ConfigurationError, NumericsError


@dataclass
class NoiseSchedule:
    beta: np.ndarray       # (T,)
    alpha: np.ndarray      # 1 - beta
    alpha_bar: np.ndarray  # cumulative product of alpha

    @property
    def timesteps(self) -> int:
        return len(self.beta)

    def validate(self) -> None:
        """Full invariant check, including the near-noiseless start required
        of training schedules (alpha_bar[0] >= 0.99)."""
        b = self.beta
        if not (np.all(b > 0) and np.all(b < 1)):
            raise ConfigurationError("beta must lie strictly in (0, 1)")
        if not np.all(np.diff(b) > 0):
            raise ConfigurationError("beta must be strictly increasing")
        ab = self.alpha_bar
        if not (np.all(np.diff(ab) < 0) and np.all(ab > 0) and np.all(ab <= 1)):
            raise ConfigurationError("alpha_bar must be strictly decreasing in (0, 1]")
        if ab[0] < 0.99:
            raise ConfigurationError(
                f"alpha_bar[0] = {ab[0]:.4f} < 0.99: beta_min too large for training"
            )


def make_schedule(T: int, beta_min: float, beta_max: float) -> NoiseSchedule:
    if T < 2:
        raise ConfigurationError("schedule needs T >= 2")
    if not (0.0 < beta_min < beta_max < 1.0):
        raise ConfigurationError("need 0 < beta_min < beta_max < 1")
    beta = np.linspace(beta_min, beta_max, T, dtype=np.float64)
    alpha = 1.0 - beta
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


@dataclass
class DiffusionBatch:
    """One training sample: a source latent, N target latents with their
    skeleton embeddings, a global embedding, per-target timesteps and noise.

    ``cams`` carries the per-target cameras needed only by ray-conditioned
    model modes; it is ignored otherwise.
    """

    z_src: torch.Tensor      # (c, h, w)
    z_tgt: torch.Tensor      # (N, c, h, w)
    skeletons: torch.Tensor  # (N, c_s, h, w)
    g: torch.Tensor          # (e,)
    t: torch.Tensor          # (N,) int64
    eps: torch.Tensor        # (N, c, h, w)
    cams: list | None = None

    def validate(self) -> None:
        n = self.z_tgt.shape[0]
        if n == 0:
            raise ValueError("batch has no targets")
        if not (self.skeletons.shape[0] == self.t.shape[0] == self.eps.shape[0] == n):
            raise ValueError("per-target fields must share leading dimension N")
        if self.eps.shape != self.z_tgt.shape:
            raise ValueError("eps must match z_tgt shape")
        if self.cams is not None and len(self.cams) != n:
            raise ValueError("cams must have one entry per target")


def q_sample(z0, t: int, eps, sched: NoiseSchedule):
    """Forward-noise z0 to timestep t: sqrt(ab)*z0 + sqrt(1-ab)*eps."""
    if not (0 <= t < sched.timesteps):
        raise ValueError(f"timestep {t} outside schedule of length {sched.timesteps}")
    if tuple(eps.shape) != tuple(z0.shape):
        raise ValueError("eps shape must match z0 shape")
    ab = sched.alpha_bar[t]
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def training_loss(batch: DiffusionBatch, model, sched: NoiseSchedule) -> torch.Tensor:
    """Mean squared error between true and predicted noise, averaged over all
    targets and elements. Each target is denoised independently."""
    batch.validate()
    n = batch.z_tgt.shape[0]
    ab = torch.as_tensor(sched.alpha_bar, dtype=batch.z_tgt.dtype, device=batch.z_tgt.device)
    coef_sig = ab[batch.t].sqrt().view(n, 1, 1, 1)
    coef_eps = (1.0 - ab[batch.t]).sqrt().view(n, 1, 1, 1)
    z_t = coef_sig * batch.z_tgt + coef_eps * batch.eps
    z_src = batch.z_src.unsqueeze(0).expand(n, -1, -1, -1)
    g = batch.g.unsqueeze(0).expand(n, -1)
    pred = model(z_t, batch.t, z_src, batch.skeletons, g, batch.cams)
    return torch.mean((batch.eps - pred) ** 2)


def _ddim_step_indices(T: int, steps: int) -> np.ndarray:
    """`steps` schedule indices from T-1 down to 0, evenly spaced."""
    if steps == 1:
        return np.array([T - 1], dtype=np.int64)
    return np.unique(np.linspace(0, T - 1, steps).round().astype(np.int64))[::-1].copy()


@torch.no_grad()
def sample(
    model,
    z_src: torch.Tensor,
    skeletons: torch.Tensor,
    g: torch.Tensor,
    cfg: SamplerConfig,
    sched: NoiseSchedule,
    cams: list | None = None,
    noise: torch.Tensor | None = None,
) -> torch.Tensor:
    """Reverse process. Returns (N, c, h, w) latents, one per skeleton.

    Targets are generated independently, conditioned on their own skeleton
    (and camera, for ray modes) plus the shared source latent. ``noise``
    optionally fixes the initial latents; per-step noise (ddpm or eta > 0)
    comes from a per-target generator seeded by (cfg.seed, target index), so
    a target's trajectory depends only on its own conditioning.
    """
    cfg.validate(timesteps=sched.timesteps)
    n = skeletons.shape[0]
    c, h, w = z_src.shape
    dtype = z_src.dtype

    if noise is None:
        gen = torch.Generator().manual_seed(cfg.seed & 0x7FFFFFFFFFFFFFFF)
        noise = torch.randn((n, c, h, w), generator=gen, dtype=dtype)
    elif tuple(noise.shape) != (n, c, h, w):
        raise ValueError(f"noise must be ({n}, {c}, {h}, {w}), got {tuple(noise.shape)}")

    ab = torch.as_tensor(sched.alpha_bar, dtype=dtype)
    outs = []
    for j in range(n):
        z = noise[j : j + 1].clone()
        src = z_src.unsqueeze(0)
        skel = skeletons[j : j + 1]
        gg = g.unsqueeze(0)
        cam = [cams[j]] if cams is not None else None
        step_gen = torch.Generator().manual_seed((cfg.seed * 1000003 + j) & 0x7FFFFFFFFFFFFFFF)

        if cfg.kind == "ddpm":
            ts = np.arange(sched.timesteps - 1, -1, -1)
        else:
            ts = _ddim_step_indices(sched.timesteps, cfg.steps)

        for i, t in enumerate(ts):
            t_batch = torch.full((1,), int(t), dtype=torch.int64)
            eps_hat = model(z, t_batch, src, skel, gg, cam)
            ab_t = ab[t]
            x0 = (z - (1.0 - ab_t).sqrt() * eps_hat) / ab_t.sqrt()
            t_prev = int(ts[i + 1]) if i + 1 < len(ts) else -1
            ab_prev = ab[t_prev] if t_prev >= 0 else torch.ones((), dtype=dtype)

            if cfg.kind == "ddpm":
                beta_t = float(sched.beta[t])
                alpha_t = float(sched.alpha[t])
                mean = (z - beta_t / np.sqrt(1.0 - float(ab_t)) * eps_hat) / np.sqrt(alpha_t)
                if t > 0:
                    var = beta_t * (1.0 - float(ab_prev)) / (1.0 - float(ab_t))
                    z = mean + np.sqrt(var) * torch.randn(z.shape, generator=step_gen, dtype=dtype)
                else:
                    z = mean
            else:
                sigma = cfg.eta * torch.sqrt(
                    (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev)
                )
                dir_coef = torch.clamp(1.0 - ab_prev - sigma**2, min=0.0).sqrt()
                z = ab_prev.sqrt() * x0 + dir_coef * eps_hat
                if cfg.eta > 0 and t_prev >= 0:
                    z = z + sigma * torch.randn(z.shape, generator=step_gen, dtype=dtype)

        if not torch.isfinite(z).all():
            raise NumericsError("sampler produced non-finite latents")
        outs.append(z[0])
    return torch.stack(outs)
