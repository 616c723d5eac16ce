"""Convolutional autoencoder: the latent space, skeleton embeddings, and the
global source embedding.

The codec is trained once on the dataset's train images (skins and skeletons
mixed, since the same encoder must embed both) and then frozen. ``identity``
mode bypasses the network entirely — images become 3×H×W latents — which
isolates diffusion tests from codec quality.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .checkpoint import load_arrays, save_arrays
from .config import CodecConfig, section_from_dict
from .errors import DataError
from .scenegen.dataset import DatasetManifest, load_image


@dataclass
class Latent:
    """Encoded image, channels-first (c, h, w) float32."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValueError(f"latent must be (c, h, w), got shape {self.data.shape}")


# A skeleton embedding is an ordinary latent; the encoder is reused unchanged
# and no positional augmentation is applied to the features.
SkeletonEmbedding = Latent


@dataclass
class GlobalEmbedding:
    """Pooled-and-projected image code, shape (e,) float32."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 1:
            raise ValueError(f"global embedding must be a vector, got shape {self.data.shape}")


def _scale_widths(cfg: CodecConfig) -> list[int]:
    """Channel width per downsampled scale, doubling each time (capped 4x).

    The first entry is the width right after the stride-2 stem, so the only
    full-resolution work is the stem itself and the final output conv —
    that keeps single-core step time tolerable.
    """
    n = int(round(np.log2(cfg.downsample)))
    return [min(cfg.base_width * 2**k, cfg.base_width * 4) for k in range(max(n, 1))]


def _gn(ch: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, ch), ch)


class _ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.norm1 = _gn(cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.norm2 = _gn(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x):
        h = self.conv1(F.silu(self.norm1(x)))
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class _ConvEncoder(nn.Module):
    def __init__(self, cfg: CodecConfig):
        super().__init__()
        ws = _scale_widths(cfg)
        layers: list[nn.Module] = [nn.Conv2d(3, ws[0], 3, stride=2, padding=1), _ResBlock(ws[0], ws[0])]
        for a, b in zip(ws[:-1], ws[1:]):
            layers += [nn.Conv2d(a, b, 3, stride=2, padding=1), _ResBlock(b, b)]
        layers += [_gn(ws[-1]), nn.SiLU(), nn.Conv2d(ws[-1], cfg.latent_channels, 3, padding=1)]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class _ConvDecoder(nn.Module):
    def __init__(self, cfg: CodecConfig):
        super().__init__()
        ws = _scale_widths(cfg)
        layers: list[nn.Module] = [
            nn.Conv2d(cfg.latent_channels, ws[-1], 3, padding=1),
            _ResBlock(ws[-1], ws[-1]),
        ]
        for a, b in zip(ws[:0:-1], ws[-2::-1]):
            # conv to 4x channels then pixel-shuffle: sharper than nearest+conv
            layers += [nn.Conv2d(a, 4 * b, 3, padding=1), nn.PixelShuffle(2), _ResBlock(b, b)]
        # final upsample straight to RGB resolution at half width
        wout = max(ws[0] // 2, 8)
        layers += [
            nn.Conv2d(ws[0], 4 * wout, 3, padding=1),
            nn.PixelShuffle(2),
            _gn(wout),
            nn.SiLU(),
            nn.Conv2d(wout, 3, 3, padding=1),
        ]
        self.net = nn.Sequential(*layers)

    def forward(self, z):
        return self.net(z)


def _global_projection(cfg: CodecConfig) -> np.ndarray:
    """Fixed seeded projection (e × c) with orthonormal columns.

    Orthonormal columns keep the operator norm at exactly 1, so pooling +
    projection can never amplify latent differences.
    """
    c = 3 if cfg.latent_mode == "identity" else cfg.latent_channels
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed % 2**64, 0x61]))
    g = rng.standard_normal((cfg.global_dim, c))
    q, r = np.linalg.qr(g)
    # fix signs so the factorization is unique
    q = q * np.sign(np.diag(r))[np.newaxis, :]
    return q.astype(np.float32)


@dataclass
class CodecCheckpoint:
    config: CodecConfig
    params: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)
    _modules: tuple[nn.Module, nn.Module] | None = field(default=None, repr=False, compare=False)

    @property
    def latent_channels(self) -> int:
        return 3 if self.config.latent_mode == "identity" else self.config.latent_channels

    @property
    def downsample(self) -> int:
        return 1 if self.config.latent_mode == "identity" else self.config.downsample

    def modules(self) -> tuple[nn.Module, nn.Module]:
        if self.config.latent_mode == "identity":
            raise ValueError("identity codec has no network modules")
        if self._modules is None:
            enc, dec = _ConvEncoder(self.config), _ConvDecoder(self.config)
            enc.load_state_dict(
                {k[len("enc."):]: torch.from_numpy(v) for k, v in self.params.items() if k.startswith("enc.")}
            )
            dec.load_state_dict(
                {k[len("dec."):]: torch.from_numpy(v) for k, v in self.params.items() if k.startswith("dec.")}
            )
            enc.eval()
            dec.eval()
            for p in enc.parameters():
                p.requires_grad_(False)
            for p in dec.parameters():
                p.requires_grad_(False)
            self._modules = (enc, dec)
        return self._modules

    def save(self, path) -> None:
        arrays = dict(self.params)
        meta = {
            "kind": "codec",
            "config": dataclasses.asdict(self.config),
            **self.meta,
        }
        save_arrays(path, arrays, meta)

    @classmethod
    def load(cls, path) -> "CodecCheckpoint":
        arrays, meta = load_arrays(path)
        if meta.get("kind") != "codec":
            raise DataError(f"not a codec checkpoint: {path}")
        cfg = section_from_dict(CodecConfig, meta.pop("config"))
        meta.pop("kind", None)
        return cls(config=cfg, params=arrays, meta=meta)


def _check_image(img: np.ndarray, ckpt: CodecCheckpoint) -> np.ndarray:
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {img.shape}")
    size = ckpt.meta.get("image_size")
    if size is not None and (img.shape[0] != size or img.shape[1] != size):
        raise ValueError(f"image is {img.shape[0]}x{img.shape[1]}, checkpoint expects {size}x{size}")
    d = ckpt.downsample
    if img.shape[0] % d or img.shape[1] % d:
        raise ValueError(f"image size {img.shape[:2]} not divisible by downsample {d}")
    return img


def encode_batch(imgs: np.ndarray, ckpt: CodecCheckpoint) -> np.ndarray:
    """(N, H, W, 3) images -> (N, c, H/d, W/d) latents.

    Trained checkpoints carry a latent_scale that normalizes latents to
    roughly unit standard deviation, so the diffusion noise schedule sees a
    sane signal-to-noise ratio. Identity mode never scales.
    """
    x = np.ascontiguousarray(np.transpose(np.asarray(imgs, dtype=np.float32), (0, 3, 1, 2)))
    if ckpt.config.latent_mode == "identity":
        return x
    enc, _ = ckpt.modules()
    with torch.no_grad():
        z = enc(torch.from_numpy(x))
    return z.numpy() * np.float32(ckpt.meta.get("latent_scale", 1.0))


def decode_batch(zs: np.ndarray, ckpt: CodecCheckpoint) -> np.ndarray:
    """(N, c, h, w) latents -> (N, H, W, 3) images clamped to [0, 1]."""
    zs = np.asarray(zs, dtype=np.float32)
    if ckpt.config.latent_mode == "identity":
        x = zs
    else:
        _, dec = ckpt.modules()
        with torch.no_grad():
            x = dec(torch.from_numpy(zs) / float(ckpt.meta.get("latent_scale", 1.0))).numpy()
    return np.clip(np.transpose(x, (0, 2, 3, 1)), 0.0, 1.0)


def encode(img: np.ndarray, ckpt: CodecCheckpoint) -> Latent:
    img = _check_image(img, ckpt)
    return Latent(encode_batch(img[np.newaxis], ckpt)[0])


def decode(z: Latent, ckpt: CodecCheckpoint) -> np.ndarray:
    data = z.data if isinstance(z, Latent) else np.asarray(z, dtype=np.float32)
    if data.shape[0] != ckpt.latent_channels:
        raise ValueError(f"latent has {data.shape[0]} channels, checkpoint expects {ckpt.latent_channels}")
    return decode_batch(data[np.newaxis], ckpt)[0].astype(np.float64)


def embed_skeleton(skel: np.ndarray, ckpt: CodecCheckpoint) -> SkeletonEmbedding:
    return encode(skel, ckpt)


def embed_global(img: np.ndarray, ckpt: CodecCheckpoint) -> GlobalEmbedding:
    z = encode(img, ckpt)
    pooled = z.data.mean(axis=(1, 2))
    proj = ckpt.params["global_proj"]
    return GlobalEmbedding(proj @ pooled)


def _train_image_paths(manifest: DatasetManifest) -> list:
    paths = []
    for rec in manifest.split_records("train"):
        paths.append(manifest.root / rec["source"]["file"])
        for tgt in rec["targets"]:
            paths.append(manifest.root / tgt["image"])
            paths.append(manifest.root / tgt["skeleton"])
    return paths


def train_codec(manifest: DatasetManifest, cfg: CodecConfig) -> CodecCheckpoint:
    """Stage-1 training: minimize MSE reconstruction over train images.

    Deterministic given cfg.seed. Identity mode returns a zero-step
    pass-through checkpoint.
    """
    cfg.validate()
    image_size = int(manifest.config.get("image_size", 0)) or None

    if cfg.latent_mode == "identity":
        ckpt = CodecCheckpoint(
            config=cfg,
            params={"global_proj": _global_projection(cfg)},
            meta={"steps": 0, "final_train_psnr": 99.0},
        )
        if image_size:
            ckpt.meta["image_size"] = image_size
        return ckpt

    paths = _train_image_paths(manifest)
    if not paths:
        raise DataError("cannot train codec: manifest has no train images")
    imgs = np.stack([load_image(p) for p in paths]).astype(np.float32)
    x_all = torch.from_numpy(np.transpose(imgs, (0, 3, 1, 2))).contiguous()

    torch.manual_seed(cfg.seed)
    enc, dec = _ConvEncoder(cfg), _ConvDecoder(cfg)
    opt = torch.optim.Adam(list(enc.parameters()) + list(dec.parameters()), lr=cfg.lr)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed % 2**64, 0x0DEC]))

    n = len(paths)
    for step in range(cfg.steps):
        # cosine decay to 10% of the base rate over the step budget
        frac = step / max(cfg.steps - 1, 1)
        for group in opt.param_groups:
            group["lr"] = cfg.lr * (0.1 + 0.45 * (1.0 + np.cos(np.pi * frac)))
        idx = rng.integers(0, n, size=min(cfg.batch_size, n))
        x = x_all[torch.from_numpy(idx)]
        recon = dec(enc(x))
        loss = torch.mean((recon - x) ** 2)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()

    enc.eval()
    dec.eval()
    with torch.no_grad():
        # reconstruction PSNR and raw-latent spread over a fixed train subset
        k = min(n, 512)
        mses, zstds = [], []
        for start in range(0, k, 64):
            x = x_all[start : start + 64]
            z = enc(x)
            recon = torch.clamp(dec(z), 0.0, 1.0)
            mses.append(torch.mean((recon - x) ** 2, dim=(1, 2, 3)))
            zstds.append(z)
        mse = torch.cat(mses)
        psnr = torch.where(mse > 0, 10.0 * torch.log10(1.0 / mse.clamp_min(1e-12)), torch.full_like(mse, 99.0))
        final_psnr = float(psnr.clamp(max=99.0).mean())
        zstd = float(torch.cat(zstds).std())
    # normalize latents to unit std for the diffusion stage
    latent_scale = 1.0 / zstd if zstd > 1e-6 else 1.0

    params = {f"enc.{k}": v.detach().numpy().copy() for k, v in enc.state_dict().items()}
    params.update({f"dec.{k}": v.detach().numpy().copy() for k, v in dec.state_dict().items()})
    params["global_proj"] = _global_projection(cfg)
    meta = {
        "steps": cfg.steps,
        "final_train_psnr": final_psnr,
        "train_images": n,
        "latent_scale": latent_scale,
    }
    if image_size:
        meta["image_size"] = image_size
    return CodecCheckpoint(config=cfg, params=params, meta=meta)
