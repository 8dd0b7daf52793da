"""Configuration dataclasses and their YAML round trip."""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ._validation import InvalidConfigError

RECON_METRICS = ("l1", "perceptual", "code_l1", "adversarial")
RECON_DIRECTIONS = ("source_only", "target_only", "both")


@dataclass
class LossConfig:
    lambda1: float = 1.0
    lambda2: float = 1.0
    recon_metric: str = "perceptual"
    recon_direction: str = "both"
    patch_weight: float = 0.5

    def validate(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidConfigError("lambda1 and lambda2 must be >= 0")
        if self.recon_metric not in RECON_METRICS:
            raise InvalidConfigError(
                f"recon_metric must be one of {RECON_METRICS}, got {self.recon_metric!r}"
            )
        if self.recon_direction not in RECON_DIRECTIONS:
            raise InvalidConfigError(
                f"recon_direction must be one of {RECON_DIRECTIONS}, got {self.recon_direction!r}"
            )
        if not 0.0 <= self.patch_weight <= 1.0:
            raise InvalidConfigError("patch_weight must lie in [0, 1]")
        return self


@dataclass
class ModelConfig:
    """Sizes shared by every network; ``resolution`` is the single source of truth."""

    resolution: int = 32
    z_dim: int = 128
    mapping_layers: int = 2
    g_channels: int = 32
    d_channels: int = 16
    f_channels: int = 16
    noise_seed: int = 1234

    def validate(self):
        if self.resolution not in (32, 64):
            raise InvalidConfigError(f"resolution must be 32 or 64, got {self.resolution}")
        if self.z_dim < 1:
            raise InvalidConfigError("z_dim must be >= 1")
        if not 2 <= self.mapping_layers <= 4:
            raise InvalidConfigError("mapping_layers must lie in [2, 4]")
        return self


@dataclass
class TrainingConfig:
    iterations: int = 2000
    f_steps_per_iter: int = 4
    batch_size: int = 8
    lr_d: float = 2e-3
    lr_g: float = 2e-3
    lr_f: float = 1e-3
    betas: tuple = (0.0, 0.99)
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    k_shot: int = 10
    seed: int = 0
    checkpoint_interval: int = 500
    baseline_mode: bool = False
    share_z: bool = False
    perceptual: str = "random"
    eval_samples: int = 1000
    balance_constant: float = 1000.0

    def validate(self, dataset_size=None):
        if self.iterations < 0:
            raise InvalidConfigError("iterations must be >= 0")
        if self.batch_size < 1:
            raise InvalidConfigError("batch_size must be >= 1")
        if not self.baseline_mode and self.f_steps_per_iter < 1:
            raise InvalidConfigError("f_steps_per_iter must be >= 1 unless baseline_mode")
        if self.k_shot < 1:
            raise InvalidConfigError("k_shot must be >= 1")
        if dataset_size is not None and self.k_shot > dataset_size:
            raise InvalidConfigError(
                f"k_shot={self.k_shot} exceeds target dataset size {dataset_size}"
            )
        if self.checkpoint_interval < 1:
            raise InvalidConfigError("checkpoint_interval must be >= 1")
        if len(self.betas) != 2 or not all(0.0 <= b < 1.0 for b in self.betas):
            raise InvalidConfigError("betas must be two values in [0, 1)")
        if self.perceptual not in ("random", "vgg"):
            raise InvalidConfigError("perceptual must be 'random' or 'vgg'")
        self.loss.validate()
        self.model.validate()
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            loss = LossConfig(**(data.pop("loss", None) or {}))
            model = ModelConfig(**(data.pop("model", None) or {}))
        except TypeError as exc:
            raise InvalidConfigError(str(exc)) from exc
        if "betas" in data:
            data["betas"] = tuple(float(b) for b in data["betas"])
        return cls(loss=loss, model=model, **data)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def load_config(path):
    path = Path(path)
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise InvalidConfigError(f"config {path} must be a mapping")
    return TrainingConfig.from_dict(data).validate()


def save_config(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
