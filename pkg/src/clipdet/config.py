"""Run configuration: JSON round-trippable, unknown keys rejected."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .augment import KINDS

VARIANTS = {
    "basic": (False, False),
    "basic+inter": (True, False),
    "basic+intra": (False, True),
    "full": (True, True),
}

EVAL_MODES = ("class-agnostic", "class-aware")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int = 64
    backbone_channels: tuple[int, int, int] = (32, 64, 128)
    num_queries: int = 10
    enc_layers: int = 2
    dec_layers: int = 2
    num_heads: int = 4
    ffn_dim: int = 128
    inter_similarity: str = "eq"
    fusion_residual: bool = False

    def validate(self) -> "ModelConfig":
        if self.feature_dim < self.num_heads or self.feature_dim % self.num_heads:
            raise ConfigError(f"feature_dim {self.feature_dim} not divisible by {self.num_heads} heads")
        if len(self.backbone_channels) != 3:
            raise ConfigError(f"backbone_channels needs 3 entries, got {self.backbone_channels}")
        if self.num_queries < 1:
            raise ConfigError("num_queries must be positive")
        if self.inter_similarity not in ("eq", "text"):
            raise ConfigError(f"inter_similarity must be 'eq' or 'text', got {self.inter_similarity!r}")
        return self


@dataclass(frozen=True)
class RunConfig:
    dataset: str = ""
    variant: str = "full"
    use_video_classifier: bool = True
    augmentation: str = "random_pepper"
    whole_sample_aug: bool = True
    epochs: int = 50
    learning_rate: float = 2e-4
    weight_decay: float = 1e-4
    warmup_steps: int = 0
    grad_clip: float = 10.0
    seed: int = 0
    lambda_cls: float = 2.0
    lambda_l1: float = 5.0
    lambda_giou: float = 2.0
    lambda_video: float = 1.0
    no_object_weight: float = 0.1
    eval_mode: str = "class-agnostic"
    max_steps: int | None = None
    debug_checks: bool = False
    notes: str = ""
    model: ModelConfig = ModelConfig()

    def validate(self) -> "RunConfig":
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {sorted(VARIANTS)}, got {self.variant!r}")
        if self.augmentation not in KINDS:
            raise ConfigError(f"augmentation must be one of {KINDS}, got {self.augmentation!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        for name in ("weight_decay", "lambda_cls", "lambda_l1", "lambda_giou",
                     "lambda_video", "no_object_weight", "grad_clip"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.eval_mode not in EVAL_MODES:
            raise ConfigError(f"eval_mode must be one of {EVAL_MODES}, got {self.eval_mode!r}")
        self.model.validate()
        return self

    @property
    def fusion_switches(self) -> tuple[bool, bool]:
        """(use_inter, use_intra) for this variant."""
        return VARIANTS[self.variant]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"]["backbone_channels"] = list(self.model.backbone_channels)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _from_mapping(cls, data: dict, context: str):
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown {context} keys: {unknown}")
    return known


def model_config_from_dict(data: dict) -> ModelConfig:
    _from_mapping(ModelConfig, data, "model config")
    if "backbone_channels" in data:
        data = dict(data)
        data["backbone_channels"] = tuple(data["backbone_channels"])
    return ModelConfig(**data).validate()


def run_config_from_dict(data: dict) -> RunConfig:
    _from_mapping(RunConfig, data, "run config")
    data = dict(data)
    if "model" in data:
        if not isinstance(data["model"], dict):
            raise ConfigError("'model' must be an object")
        data["model"] = model_config_from_dict(data["model"])
    return RunConfig(**data).validate()


def load_run_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return run_config_from_dict(data)
