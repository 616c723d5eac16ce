"""Shared fixtures.

The expensive fixtures are session-scoped: a tiny rendered dataset, a briefly
trained codec on it, an overfit bundle (8 memorized samples driven to low
loss), and the full two-model experiment, which is materialized on disk under
.test_artifacts/ by tests/experiment_harness.py and reused across sessions.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    derandomize=True,
    deadline=None,
    max_examples=40,
    suppress_health_check=(HealthCheck.too_slow,),
)
settings.load_profile("suite")

from skelnvs.codec import train_codec
from skelnvs.config import ExperimentConfig
from skelnvs.diffusion import make_schedule
from skelnvs.scenegen.dataset import generate_dataset
from skelnvs.training import encode_split, train_denoiser

import experiment_harness


def tiny_config() -> ExperimentConfig:
    """6 objects at 32x32, two frames each, one target per record."""
    cfg = ExperimentConfig()
    ds = cfg.dataset
    ds.objects = 6
    ds.split = 1.0 / 3.0
    ds.frame_budget = 8
    ds.frame_stride = 4
    ds.views_per_frame = 2
    ds.image_size = 32
    ds.focal = 28.0
    ds.degradation_levels = [0.0, 0.6]
    ds.seed = 5
    cfg.codec.base_width = 16
    cfg.codec.steps = 120
    cfg.codec.seed = 1
    cfg.validate()
    return cfg


def overfit_config() -> ExperimentConfig:
    """The memorization harness: 8 single-frame records, a short fat-beta
    schedule (so sampling starts from noise statistics the model trained on),
    and 200 single-batch epochs."""
    cfg = ExperimentConfig()
    ds = cfg.dataset
    ds.objects = 8
    ds.split = 0.0
    ds.frame_budget = 4
    ds.frame_stride = 4
    ds.views_per_frame = 2
    ds.image_size = 32
    ds.focal = 28.0
    ds.seed = 11
    cfg.codec.base_width = 16
    cfg.codec.steps = 1500
    cfg.codec.seed = 1
    cfg.diffusion.timesteps = 32
    cfg.diffusion.beta_max = 0.25
    u = cfg.unet
    u.mode = "scn"
    u.base_channels = 32
    u.channel_mults = [1, 2]
    u.time_dim = 32
    u.attention_levels = [1]
    u.global_tokens = 2
    u.attention_heads = 2
    tr = cfg.training
    tr.batch_size = 8
    tr.accum = 1
    tr.epochs = 200
    tr.lr = 2e-3
    tr.seed = 3
    cfg.evaluation.sampler.steps = 32
    cfg.validate()
    return cfg


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    cfg = tiny_config()
    root = tmp_path_factory.mktemp("tiny_data")
    manifest = generate_dataset(cfg.dataset, root)
    return {"cfg": cfg, "manifest": manifest}


@pytest.fixture(scope="session")
def tiny_codec(tiny_dataset):
    return train_codec(tiny_dataset["manifest"], tiny_dataset["cfg"].codec)


@pytest.fixture(scope="session")
def identity_codec(tiny_dataset):
    cfg = tiny_config()
    cfg.codec.latent_mode = "identity"
    cfg.codec.downsample = 1
    return train_codec(tiny_dataset["manifest"], cfg.codec)


@pytest.fixture(scope="session")
def overfit_bundle(tmp_path_factory):
    """Dataset + codec + denoiser trained to memorize 8 samples.

    Returns everything the overfit-based tests need, including the wall-clock
    seconds the build took (training only, excluding sampling).
    """
    cfg = overfit_config()
    root = tmp_path_factory.mktemp("overfit")
    t0 = time.monotonic()
    manifest = generate_dataset(cfg.dataset, root / "data")
    codec = train_codec(manifest, cfg.codec)
    ckpt = train_denoiser(manifest, codec, cfg, root / "run")
    build_seconds = time.monotonic() - t0
    losses = np.loadtxt(root / "run" / "loss.csv", delimiter=",", skiprows=1, usecols=2)
    sched = make_schedule(cfg.diffusion.timesteps, cfg.diffusion.beta_min, cfg.diffusion.beta_max)
    return {
        "cfg": cfg,
        "manifest": manifest,
        "codec": codec,
        "ckpt": ckpt,
        "sched": sched,
        "losses": np.atleast_1d(losses),
        "encoded": encode_split(manifest, codec, "train"),
        "build_seconds": build_seconds,
        "run_dir": root / "run",
    }


@pytest.fixture(scope="session")
def experiment():
    """The cached two-model experiment (see tests/experiment_harness.py)."""
    root = experiment_harness.experiment_dir()
    if not experiment_harness.is_built(root):
        experiment_harness.build(root)
    return root
