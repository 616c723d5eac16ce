"""Frozen random convolutional features and the perceptual/Fréchet proxy
metrics built on them.

Pretrained perceptual backbones are out of scope, so both proxies share one
seeded random conv stack. The numbers are internally comparable across models
evaluated with the same spec, and not comparable to published LPIPS/FID.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FeatureNetSpec:
    seed: int = 1234
    widths: tuple = (8, 16, 32)
    strides: tuple = (2, 2, 2)

    def __post_init__(self):
        if len(self.widths) != len(self.strides) or not self.widths:
            raise ValueError("widths and strides must be non-empty and equal length")

    @property
    def pooled_dim(self) -> int:
        return int(sum(self.widths))


_WEIGHT_CACHE: dict = {}


def _weights(spec: FeatureNetSpec) -> list[np.ndarray]:
    key = (spec.seed, tuple(spec.widths), tuple(spec.strides))
    if key not in _WEIGHT_CACHE:
        rng = np.random.default_rng(spec.seed)
        ws = []
        c_in = 3
        for w in spec.widths:
            scale = np.sqrt(2.0 / (c_in * 9))
            ws.append(rng.standard_normal((w, c_in, 3, 3)) * scale)
            c_in = w
        _WEIGHT_CACHE[key] = ws
    return _WEIGHT_CACHE[key]


def _conv2d(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """3x3 same-padded strided convolution, (c_in, h, w) -> (c_out, h', w')."""
    c_in, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    view = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    view = view[:, ::stride, ::stride]  # (c_in, h', w', 3, 3)
    return np.einsum("cijkl,ockl->oij", view, w, optimize=True)


def extract_features(img: np.ndarray, spec: FeatureNetSpec) -> list[np.ndarray]:
    """Per-level ReLU feature maps of an (H, W, 3) image in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got {img.shape}")
    x = img.transpose(2, 0, 1) * 2.0 - 1.0
    feats = []
    for w, s in zip(_weights(spec), spec.strides):
        x = np.maximum(_conv2d(x, w, s), 0.0)
        feats.append(x)
    return feats


def _unit_normalize(f: np.ndarray) -> np.ndarray:
    norm = np.sqrt((f**2).sum(axis=0, keepdims=True))
    return f / (norm + 1e-10)


def lpips_proxy(a: np.ndarray, b: np.ndarray, spec: FeatureNetSpec | None = None) -> float:
    """Mean over levels of the MSE between per-pixel unit-normalized feature
    vectors. Symmetric; zero iff the feature stacks coincide."""
    spec = spec or FeatureNetSpec()
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    fa = extract_features(a, spec)
    fb = extract_features(b, spec)
    dists = [np.mean((_unit_normalize(x) - _unit_normalize(y)) ** 2) for x, y in zip(fa, fb)]
    return float(np.mean(dists))


def pooled_features(img: np.ndarray, spec: FeatureNetSpec) -> np.ndarray:
    """Concatenated per-level spatial means: the Fréchet feature vector."""
    return np.concatenate([f.mean(axis=(1, 2)) for f in extract_features(img, spec)])


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    """Symmetric matrix square root, negative eigenvalues clamped to zero."""
    vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(mu_a, sigma_a, mu_b, sigma_b) -> float:
    """||mu_a-mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2})."""
    diff = float(np.sum((mu_a - mu_b) ** 2))
    sa = _sqrtm_psd(sigma_a)
    inner = _sqrtm_psd(sa @ sigma_b @ sa)  # same trace as sqrtm(S_a S_b)
    trace = float(np.trace(sigma_a) + np.trace(sigma_b) - 2.0 * np.trace(inner))
    return diff + trace


def fid_proxy(set_a, set_b, spec: FeatureNetSpec | None = None) -> float:
    """Fréchet distance between the pooled-feature Gaussians of two image
    sets. Order of images within each set is irrelevant."""
    spec = spec or FeatureNetSpec()
    set_a, set_b = list(set_a), list(set_b)
    if len(set_a) < 2 or len(set_b) < 2:
        raise ValueError("fid_proxy needs at least 2 images per set")
    fa = np.stack([pooled_features(img, spec) for img in set_a])
    fb = np.stack([pooled_features(img, spec) for img in set_b])
    shrink = 1e-6 * np.eye(spec.pooled_dim)
    mu_a, sig_a = fa.mean(axis=0), np.cov(fa, rowvar=False) + shrink
    mu_b, sig_b = fb.mean(axis=0), np.cov(fb, rowvar=False) + shrink
    return frechet_distance(mu_a, sig_a, mu_b, sig_b)
