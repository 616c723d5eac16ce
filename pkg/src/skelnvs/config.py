"""Experiment configuration: typed sections, JSON round-trip, validation.

The config file is the single source of truth for a run. Every subcommand
snapshots its config before doing work, and unknown keys are rejected so a
snapshot can always be replayed against the code that understands it.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigurationError

UNET_MODES = ("baseline", "scn", "scn+rcn", "rcn")


@dataclass
class GeneratorConfig:
    """Controls procedural articulated-object sampling."""

    bones_min: int = 2
    bones_max: int = 7
    frame_count: int = 24
    extent: float = 1.0          # max reach of any joint chain, scene units
    radius_min: float = 0.05     # capsule radius range, scene units
    radius_max: float = 0.13
    max_angle: float = 0.9       # joint angle amplitude bound, radians
    max_step: float = 0.35       # per-frame angle delta bound, radians

    def validate(self) -> None:
        if not (2 <= self.bones_min <= self.bones_max <= 16):
            raise ConfigurationError(
                f"bone-count range [{self.bones_min}, {self.bones_max}] must lie within [2, 16]"
            )
        if self.frame_count < 1:
            raise ConfigurationError("frame_count must be >= 1")
        if self.extent <= 0:
            raise ConfigurationError("extent must be positive")
        if not (0 < self.radius_min <= self.radius_max):
            raise ConfigurationError("capsule radius range must satisfy 0 < min <= max")
        if self.max_angle <= 0 or self.max_step <= 0:
            raise ConfigurationError("angle bounds must be positive")


@dataclass
class DatasetConfig:
    """Controls dataset rendering and on-disk layout."""

    objects: int = 80
    split: float = 0.2           # fraction of objects held out as test
    frame_stride: int = 4
    frame_budget: int = 24
    views_per_frame: int = 3     # one source camera plus views_per_frame-1 targets
    image_size: int = 64
    focal: float = 56.0          # pixels
    camera_radius: float = 3.0   # scene units
    elevation_min: float = 0.1   # radians
    elevation_max: float = 0.7
    degradation_levels: list[float] = field(default_factory=lambda: [0.0])
    seed: int = 0
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def validate(self) -> None:
        self.generator.validate()
        if self.objects < 1:
            raise ConfigurationError("objects must be >= 1")
        if not (0.0 <= self.split < 1.0):
            raise ConfigurationError("split must be in [0, 1)")
        if self.frame_stride < 1 or self.frame_budget < 1:
            raise ConfigurationError("frame_stride and frame_budget must be >= 1")
        if self.frame_budget > self.generator.frame_count:
            raise ConfigurationError("frame_budget cannot exceed the animation frame_count")
        if self.views_per_frame < 2:
            raise ConfigurationError("views_per_frame must be >= 2 (one source and at least one target)")
        if self.image_size < 16:
            raise ConfigurationError("image_size must be >= 16")
        if self.camera_radius <= self.generator.extent:
            raise ConfigurationError("camera_radius must exceed the object extent")
        if not self.degradation_levels:
            raise ConfigurationError("degradation_levels must be non-empty")
        for lv in self.degradation_levels:
            if not (0.0 <= lv <= 1.0):
                raise ConfigurationError(f"degradation level {lv} outside [0, 1]")


@dataclass
class CodecConfig:
    """Autoencoder that defines the latent space."""

    latent_mode: str = "conv"    # "conv" or "identity"
    latent_channels: int = 4
    downsample: int = 4          # spatial factor; must be a power of two
    base_width: int = 32
    global_dim: int = 128
    steps: int = 3000
    batch_size: int = 32
    lr: float = 2e-3
    seed: int = 0

    def validate(self) -> None:
        if self.latent_mode not in ("conv", "identity"):
            raise ConfigurationError(f"unknown latent_mode {self.latent_mode!r}")
        if self.latent_mode == "conv":
            d = self.downsample
            if d < 1 or (d & (d - 1)) != 0:
                raise ConfigurationError("downsample must be a power of two")
            if self.latent_channels < 1 or self.base_width < 1:
                raise ConfigurationError("latent_channels and base_width must be >= 1")
        if self.global_dim < 1:
            raise ConfigurationError("global_dim must be >= 1")
        if self.steps < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigurationError("invalid codec training settings")


@dataclass
class DiffusionConfig:
    timesteps: int = 256
    beta_min: float = 1e-4
    beta_max: float = 2e-2

    def validate(self) -> None:
        if self.timesteps < 2:
            raise ConfigurationError("timesteps must be >= 2")
        if not (0.0 < self.beta_min < self.beta_max < 1.0):
            raise ConfigurationError("need 0 < beta_min < beta_max < 1")


@dataclass
class UNetConfig:
    mode: str = "scn"            # baseline | scn | scn+rcn | rcn
    base_channels: int = 64
    channel_mults: list[int] = field(default_factory=lambda: [1, 2, 2])
    groups: int = 8
    eps: float = 1e-5
    mlp_hidden_factor: int = 4   # modulation MLP hidden width = factor * channels
    time_dim: int = 128
    attention_levels: list[int] = field(default_factory=lambda: [2])
    global_tokens: int = 4
    attention_heads: int = 4
    zero_init_output: bool = True

    def validate(self) -> None:
        if self.mode not in UNET_MODES:
            raise ConfigurationError(f"unet mode must be one of {UNET_MODES}, got {self.mode!r}")
        if self.base_channels < 1 or not self.channel_mults:
            raise ConfigurationError("base_channels must be >= 1 and channel_mults non-empty")
        for m in self.channel_mults:
            if (self.base_channels * m) % self.groups != 0:
                raise ConfigurationError(
                    f"group count {self.groups} must divide every level width "
                    f"(violated at {self.base_channels * m} channels)"
                )
        for lv in self.attention_levels:
            if not (0 <= lv < len(self.channel_mults)):
                raise ConfigurationError(f"attention level {lv} out of range")
        if self.eps <= 0 or self.mlp_hidden_factor < 1 or self.time_dim < 2:
            raise ConfigurationError("invalid unet settings")

    @property
    def uses_skeleton(self) -> bool:
        return self.mode in ("scn", "scn+rcn")

    @property
    def uses_rays(self) -> bool:
        return self.mode in ("rcn", "scn+rcn")


@dataclass
class TrainingConfig:
    batch_size: int = 16
    accum: int = 2               # gradient accumulation steps per optimizer update
    epochs: int = 8
    max_steps: int = 0           # optimizer-step cap; 0 means no cap
    lr: float = 1e-4
    seed: int = 0
    cond_dropout: float = 0.0    # probability of zeroing conditioning per target; off by default
    threads: int = 0             # torch thread count; 0 keeps the library default
    checkpoint_every_epoch: bool = True

    def validate(self) -> None:
        if self.batch_size < 1 or self.accum < 1 or self.epochs < 0:
            raise ConfigurationError("invalid training settings")
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if not (0.0 <= self.cond_dropout <= 1.0):
            raise ConfigurationError("cond_dropout must be in [0, 1]")
        if self.max_steps < 0 or self.threads < 0:
            raise ConfigurationError("max_steps and threads must be >= 0")


@dataclass
class SamplerConfig:
    kind: str = "ddim"           # "ddim" or "ddpm"
    steps: int = 50
    eta: float = 0.0
    seed: int = 0

    def validate(self, timesteps: int | None = None) -> None:
        if self.kind not in ("ddim", "ddpm"):
            raise ConfigurationError(f"sampler kind must be ddim or ddpm, got {self.kind!r}")
        if self.steps < 1:
            raise ConfigurationError("sampler steps must be >= 1")
        if timesteps is not None and self.steps > timesteps:
            raise ConfigurationError(f"sampler steps {self.steps} exceed schedule length {timesteps}")
        if not (0.0 <= self.eta <= 1.0):
            raise ConfigurationError("eta must be in [0, 1]")


@dataclass
class EvaluationConfig:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    iou_bins: int = 5
    bootstrap_samples: int = 1000
    bootstrap_seed: int = 0
    featnet_seed: int = 1234
    featnet_widths: list[int] = field(default_factory=lambda: [8, 16, 32])
    featnet_strides: list[int] = field(default_factory=lambda: [2, 2, 2])

    def validate(self) -> None:
        self.sampler.validate()
        if self.iou_bins < 1:
            raise ConfigurationError("iou_bins must be >= 1")
        if self.bootstrap_samples < 2:
            raise ConfigurationError("bootstrap_samples must be >= 2")
        if len(self.featnet_widths) != len(self.featnet_strides) or not self.featnet_widths:
            raise ConfigurationError("featnet widths and strides must be non-empty and same length")


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    unet: UNetConfig = field(default_factory=UNetConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def validate(self) -> None:
        self.dataset.validate()
        self.codec.validate()
        self.diffusion.validate()
        self.unet.validate()
        self.training.validate()
        self.evaluation.validate()
        self.evaluation.sampler.validate(self.diffusion.timesteps)


def _from_dict(cls: type, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigurationError(f"{path or 'config'}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        sub = f"{path}.{name}" if path else name
        if dataclasses.is_dataclass(f.type) or (isinstance(f.type, str) and f.type in _SECTION_TYPES):
            subcls = _SECTION_TYPES[f.type] if isinstance(f.type, str) else f.type
            kwargs[name] = _from_dict(subcls, value, sub)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"{path or 'config'}: {exc}") from exc


_SECTION_TYPES = {
    "GeneratorConfig": GeneratorConfig,
    "DatasetConfig": DatasetConfig,
    "CodecConfig": CodecConfig,
    "DiffusionConfig": DiffusionConfig,
    "UNetConfig": UNetConfig,
    "TrainingConfig": TrainingConfig,
    "SamplerConfig": SamplerConfig,
    "EvaluationConfig": EvaluationConfig,
    "ExperimentConfig": ExperimentConfig,
}


def config_from_dict(data: dict) -> ExperimentConfig:
    cfg = _from_dict(ExperimentConfig, data, "")
    cfg.validate()
    return cfg


def section_from_dict(cls: type, data: dict):
    """Parse one config section (e.g. a checkpoint's embedded snapshot)."""
    cfg = _from_dict(cls, data, cls.__name__)
    cfg.validate()
    return cfg


def config_to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def config_to_json(cfg) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {p} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def save_config(cfg, path: str | Path) -> None:
    Path(path).write_text(config_to_json(cfg))
