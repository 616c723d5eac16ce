"""The conditional denoiser: a small UNet whose normalization layers are
modulated by encoded skeleton images (scn), per-pixel camera-ray encodings
(rcn), both (scn+rcn, ray modulation applied first), or neither (baseline).

The modulation branches end in zero-initialized layers, so a freshly
initialized scn model computes exactly the same function as a baseline model
sharing its other weights. That equivalence is what makes the ablation
measure conditioning alone, and it is what the warm-start path relies on.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .checkpoint import load_arrays, save_arrays
from .config import DiffusionConfig, UNetConfig, section_from_dict
from .errors import DataError
from .scenegen.camera import CameraPose, camera_basis


def group_normalize(x, groups: int, eps: float = 1e-5):
    """(x - mean) / sqrt(var + eps) per group of channels, statistics taken
    over (channels-in-group, h, w). Accepts (c,h,w) or (n,c,h,w), numpy or
    torch; biased variance."""
    if isinstance(x, np.ndarray):
        t = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float64))
        return group_normalize(t, groups, eps).numpy()
    squeeze = x.ndim == 3
    if squeeze:
        x = x.unsqueeze(0)
    n, c, h, w = x.shape
    if c % groups:
        raise ValueError(f"group count {groups} does not divide {c} channels")
    g = x.reshape(n, groups, c // groups, h, w)
    mean = g.mean(dim=(2, 3, 4), keepdim=True)
    var = g.var(dim=(2, 3, 4), unbiased=False, keepdim=True)
    out = ((g - mean) / torch.sqrt(var + eps)).reshape(n, c, h, w)
    return out.squeeze(0) if squeeze else out


def resize_features(s: torch.Tensor, h: int, w: int) -> torch.Tensor:
    """Resize (n, c, H, W) conditioning features to (h, w): average-pool when
    shrinking, nearest-neighbor when growing."""
    if s.shape[-2:] == (h, w):
        return s
    if s.shape[-2] >= h and s.shape[-1] >= w:
        return F.adaptive_avg_pool2d(s, (h, w))
    return F.interpolate(s, size=(h, w), mode="nearest")


class ModulationMLP(nn.Module):
    """Position-shared 2-layer MLP mapping conditioning channels to per-pixel
    (gamma, beta). Final layer zero-initialized: (0, 0) at init."""

    def __init__(self, cond_channels: int, out_channels: int, hidden_factor: int = 4):
        super().__init__()
        hidden = hidden_factor * out_channels
        self.fc1 = nn.Conv2d(cond_channels, hidden, 1)
        self.fc2 = nn.Conv2d(hidden, 2 * out_channels, 1)
        nn.init.zeros_(self.fc2.weight)
        nn.init.zeros_(self.fc2.bias)

    def forward(self, cond: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        out = self.fc2(F.silu(self.fc1(cond)))
        return torch.chunk(out, 2, dim=1)


def scn_modulate(x, cond, mlp: ModulationMLP, groups: int, eps: float = 1e-5):
    """group_normalize(x) * (1 + gamma) + beta, with (gamma, beta) predicted
    from the conditioning features resized to x's spatial grid."""
    if isinstance(x, np.ndarray):
        dtype = next(mlp.parameters()).dtype
        t = torch.from_numpy(np.ascontiguousarray(x)).to(dtype)
        c = torch.from_numpy(np.ascontiguousarray(cond)).to(dtype)
        return scn_modulate(t, c, mlp, groups, eps).detach().numpy()
    squeeze = x.ndim == 3
    if squeeze:
        x, cond = x.unsqueeze(0), cond.unsqueeze(0)
    gamma, beta = mlp(resize_features(cond, x.shape[-2], x.shape[-1]))
    out = group_normalize(x, groups, eps) * (1.0 + gamma) + beta
    return out.squeeze(0) if squeeze else out


def ray_map(cam: CameraPose, h: int, w: int) -> np.ndarray:
    """(6, h, w) Plücker ray encoding (unit direction, origin × direction)
    for an h×w grid of pixel centers spanning the camera's image plane."""
    center, right, up, forward = camera_basis(cam)
    # latent-grid pixel centers mapped into full-resolution pixel coordinates
    uu = (np.arange(w) + 0.5) * (cam.width / w) - 0.5
    vv = (np.arange(h) + 0.5) * (cam.height / h) - 0.5
    cx, cy = (cam.width - 1) / 2.0, (cam.height - 1) / 2.0
    du = (uu - cx) / cam.focal
    dv = (vv - cy) / cam.focal
    d = (
        forward[None, None, :]
        + du[None, :, None] * right[None, None, :]
        - dv[:, None, None] * up[None, None, :]
    )
    d = d / np.linalg.norm(d, axis=2, keepdims=True)
    m = np.cross(np.broadcast_to(center, d.shape), d)
    out = np.concatenate([d, m], axis=2).transpose(2, 0, 1)
    return np.ascontiguousarray(out, dtype=np.float64)


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard transformer-style timestep embedding, (n,) -> (n, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float64) / max(half - 1, 1)
    ).to(t.device)
    args = t.double().unsqueeze(1) * freqs.unsqueeze(0)
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


class ModulatedNorm(nn.Module):
    """One normalization site. Baseline: plain group norm. scn/rcn modes add
    the corresponding modulation branches; scn+rcn applies ray modulation
    first, then skeleton modulation."""

    def __init__(self, channels: int, cfg: UNetConfig, skel_channels: int):
        super().__init__()
        self.groups = cfg.groups
        self.eps = cfg.eps
        if cfg.uses_rays:
            self.mlp_ray = ModulationMLP(6, channels, cfg.mlp_hidden_factor)
        if cfg.uses_skeleton:
            self.mlp_skel = ModulationMLP(skel_channels, channels, cfg.mlp_hidden_factor)

    def forward(self, x: torch.Tensor, cond: dict) -> torch.Tensor:
        h = group_normalize(x, self.groups, self.eps)
        size = x.shape[-2:]
        if hasattr(self, "mlp_ray"):
            gamma, beta = self.mlp_ray(cond["rays"][size])
            h = h * (1.0 + gamma) + beta
        if hasattr(self, "mlp_skel"):
            gamma, beta = self.mlp_skel(cond["skel"][size])
            h = h * (1.0 + gamma) + beta
        return h


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, time_dim: int, cfg: UNetConfig, skel_channels: int):
        super().__init__()
        self.norm1 = ModulatedNorm(in_ch, cfg, skel_channels)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = ModulatedNorm(out_ch, cfg, skel_channels)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor, cond: dict) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x, cond)))
        h = h + self.time_proj(t_emb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h, cond)))
        return h + self.skip(x)


class GlobalAttention(nn.Module):
    """Cross-attention from pixels to a handful of tokens derived from the
    global source embedding. Output projection zero-initialized; the pre-norm
    is a modulated site like every other normalization in the network."""

    def __init__(self, channels: int, global_dim: int, cfg: UNetConfig, skel_channels: int):
        super().__init__()
        self.heads = cfg.attention_heads
        self.tokens = cfg.global_tokens
        self.norm = ModulatedNorm(channels, cfg, skel_channels)
        self.to_tokens = nn.Linear(global_dim, self.tokens * channels)
        self.q = nn.Conv2d(channels, channels, 1)
        self.k = nn.Linear(channels, channels)
        self.v = nn.Linear(channels, channels)
        self.proj = nn.Conv2d(channels, channels, 1)
        nn.init.zeros_(self.proj.weight)
        nn.init.zeros_(self.proj.bias)

    def forward(self, x: torch.Tensor, g: torch.Tensor, cond: dict) -> torch.Tensor:
        n, c, h, w = x.shape
        hd = c // self.heads
        tok = self.to_tokens(g).reshape(n, self.tokens, c)
        q = self.q(self.norm(x, cond)).reshape(n, self.heads, hd, h * w).transpose(2, 3)
        k = self.k(tok).reshape(n, self.tokens, self.heads, hd).permute(0, 2, 1, 3)
        v = self.v(tok).reshape(n, self.tokens, self.heads, hd).permute(0, 2, 1, 3)
        att = torch.softmax(q @ k.transpose(2, 3) / math.sqrt(hd), dim=-1)
        out = (att @ v).transpose(2, 3).reshape(n, c, h, w)
        return x + self.proj(out)


class Denoiser(nn.Module):
    """ε_θ(z_t, t, z_src, s, g[, cam]) -> predicted noise, same shape as z_t.

    The source latent is channel-concatenated with the noised target; the
    sinusoidal time embedding feeds every residual block; cross-attention
    attends to the global embedding at the configured levels and mid-block.
    """

    def __init__(self, cfg: UNetConfig, latent_channels: int, skel_channels: int, global_dim: int):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.latent_channels = latent_channels
        self.skel_channels = skel_channels
        self.global_dim = global_dim

        chans = [cfg.base_channels * m for m in cfg.channel_mults]
        t_hidden = 4 * cfg.base_channels
        self.time_dim = cfg.time_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.time_dim, t_hidden), nn.SiLU(), nn.Linear(t_hidden, t_hidden)
        )

        mk_res = lambda ci, co: ResBlock(ci, co, t_hidden, cfg, skel_channels)
        self.stem = nn.Conv2d(2 * latent_channels, chans[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.down_attn = nn.ModuleList()
        self.downs = nn.ModuleList()
        prev = chans[0]
        for i, ch in enumerate(chans):
            self.down_blocks.append(mk_res(prev, ch))
            self.down_attn.append(
                GlobalAttention(ch, global_dim, cfg, skel_channels) if i in cfg.attention_levels else nn.Identity()
            )
            self.downs.append(
                nn.Conv2d(ch, ch, 3, stride=2, padding=1) if i < len(chans) - 1 else nn.Identity()
            )
            prev = ch

        self.mid1 = mk_res(chans[-1], chans[-1])
        self.mid_attn = (
            GlobalAttention(chans[-1], global_dim, cfg, skel_channels) if cfg.attention_levels else nn.Identity()
        )
        self.mid2 = mk_res(chans[-1], chans[-1])

        self.up_blocks = nn.ModuleList()
        self.up_attn = nn.ModuleList()
        self.ups = nn.ModuleList()
        prev = chans[-1]
        for i in range(len(chans) - 1, -1, -1):
            self.up_blocks.append(mk_res(prev + chans[i], chans[i]))
            self.up_attn.append(
                GlobalAttention(chans[i], global_dim, cfg, skel_channels) if i in cfg.attention_levels else nn.Identity()
            )
            self.ups.append(
                nn.Conv2d(chans[i], chans[i], 3, padding=1) if i > 0 else nn.Identity()
            )
            prev = chans[i]

        self.out_norm = ModulatedNorm(chans[0], cfg, skel_channels)
        self.out_conv = nn.Conv2d(chans[0], latent_channels, 3, padding=1)
        if cfg.zero_init_output:
            nn.init.zeros_(self.out_conv.weight)
            nn.init.zeros_(self.out_conv.bias)

    def _conditioning(self, skel: torch.Tensor | None, cams, shape, dtype) -> dict:
        n, _, h0, w0 = shape
        sizes = []
        h, w = h0, w0
        for _ in self.cfg.channel_mults:
            sizes.append((h, w))
            h, w = (h + 1) // 2, (w + 1) // 2
        cond: dict = {}
        if self.cfg.uses_skeleton:
            if skel is None:
                raise ValueError(f"mode {self.cfg.mode!r} requires skeleton embeddings")
            cond["skel"] = {s: resize_features(skel, *s) for s in set(sizes)}
        if self.cfg.uses_rays:
            if cams is None:
                raise ValueError(f"mode {self.cfg.mode!r} requires per-target cameras")
            cond["rays"] = {}
            for s in set(sizes):
                maps = np.stack([ray_map(cam, *s) for cam in cams])
                cond["rays"][s] = torch.from_numpy(maps).to(dtype)
        return cond

    def forward(self, z_t, t, z_src, skel=None, g=None, cams=None):
        if z_t.shape != z_src.shape:
            raise ValueError("z_t and z_src must have identical shapes")
        if g is None:
            raise ValueError("global embedding g is required")
        cond = self._conditioning(skel, cams, z_t.shape, z_t.dtype)
        t_emb = self.time_mlp(sinusoidal_embedding(t, self.time_dim).to(z_t.dtype))

        x = self.stem(torch.cat([z_t, z_src], dim=1))
        skips = []
        for block, attn, down in zip(self.down_blocks, self.down_attn, self.downs):
            x = block(x, t_emb, cond)
            if not isinstance(attn, nn.Identity):
                x = attn(x, g, cond)
            skips.append(x)
            x = down(x)

        x = self.mid1(x, t_emb, cond)
        if not isinstance(self.mid_attn, nn.Identity):
            x = self.mid_attn(x, g, cond)
        x = self.mid2(x, t_emb, cond)

        for block, attn, up in zip(self.up_blocks, self.up_attn, self.ups):
            skip = skips.pop()
            if x.shape[-2:] != skip.shape[-2:]:
                x = F.interpolate(x, size=skip.shape[-2:], mode="nearest")
            x = block(torch.cat([x, skip], dim=1), t_emb, cond)
            if not isinstance(attn, nn.Identity):
                x = attn(x, g, cond)
            if not isinstance(up, nn.Identity):
                x = up(F.interpolate(x, scale_factor=2, mode="nearest"))

        return self.out_conv(F.silu(self.out_norm(x, cond)))


def denoiser_forward(z_t, t: int, z_src, s, g, cam, model: Denoiser):
    """Single-sample functional forward. Accepts numpy or torch inputs;
    returns the predicted noise in the input's type."""
    was_numpy = isinstance(z_t, np.ndarray)
    dtype = next(model.parameters()).dtype
    to_t = lambda a: (torch.from_numpy(np.ascontiguousarray(a)) if isinstance(a, np.ndarray) else a).to(dtype)
    z_t_, z_src_, g_ = to_t(z_t).unsqueeze(0), to_t(z_src).unsqueeze(0), to_t(g).unsqueeze(0)
    s_ = to_t(s).unsqueeze(0) if s is not None else None
    cams = [cam] if cam is not None else None
    tt = torch.full((1,), int(t), dtype=torch.int64)
    with torch.no_grad():
        out = model(z_t_, tt, z_src_, s_, g_, cams)[0]
    return out.numpy() if was_numpy else out


@dataclass
class DenoiserCheckpoint:
    unet: UNetConfig
    diffusion: DiffusionConfig
    params: dict[str, np.ndarray]
    latent_channels: int
    skel_channels: int
    global_dim: int
    codec_ref: str = ""
    meta: dict = field(default_factory=dict)

    def build(self) -> Denoiser:
        model = Denoiser(self.unet, self.latent_channels, self.skel_channels, self.global_dim)
        model.load_state_dict({k: torch.from_numpy(v) for k, v in self.params.items()})
        model.eval()
        return model

    def save(self, path) -> None:
        meta = {
            "kind": "denoiser",
            "unet": dataclasses.asdict(self.unet),
            "diffusion": dataclasses.asdict(self.diffusion),
            "latent_channels": self.latent_channels,
            "skel_channels": self.skel_channels,
            "global_dim": self.global_dim,
            "codec_ref": self.codec_ref,
            **self.meta,
        }
        save_arrays(path, self.params, meta)

    @classmethod
    def load(cls, path) -> "DenoiserCheckpoint":
        arrays, meta = load_arrays(path)
        if meta.get("kind") != "denoiser":
            raise DataError(f"not a denoiser checkpoint: {path}")
        # optimizer state rides along for resume; it is not a model parameter
        arrays = {k: v for k, v in arrays.items() if not k.startswith("opt.")}
        return cls(
            unet=section_from_dict(UNetConfig, meta.pop("unet")),
            diffusion=section_from_dict(DiffusionConfig, meta.pop("diffusion")),
            params=arrays,
            latent_channels=meta.pop("latent_channels"),
            skel_channels=meta.pop("skel_channels"),
            global_dim=meta.pop("global_dim"),
            codec_ref=meta.pop("codec_ref", ""),
            meta={k: v for k, v in meta.items() if k != "kind"},
        )
