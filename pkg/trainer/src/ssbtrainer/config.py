"""Training configuration: objective weight, schedule, and the codec architecture."""

from __future__ import annotations

from dataclasses import dataclass, field

from ssbcodec import CodecConfig, DimensionError, FormatError, config_from_text, config_to_text

# Trainer-only keys; every other key in a config file belongs to the architecture.
_TRAIN_FIELDS = {
    "beta": float,
    "learning_rate": float,
    "steps": int,
    "crop_size": int,
    "seed": int,
}


@dataclass(frozen=True)
class TrainConfig:
    beta: float = 2048.0
    learning_rate: float = 1e-3
    steps: int = 200
    crop_size: int = 32
    seed: int = 0
    architecture: CodecConfig = field(default_factory=CodecConfig)

    def validate(self) -> "TrainConfig":
        if self.beta <= 0:
            raise DimensionError(f"beta must be positive, got {self.beta}")
        if self.learning_rate <= 0:
            raise DimensionError(f"learning rate must be positive, got {self.learning_rate}")
        if self.steps <= 0:
            raise DimensionError(f"step count must be positive, got {self.steps}")
        arch = self.architecture.validate()
        if self.crop_size <= 0 or self.crop_size % arch.block_size:
            raise DimensionError(
                f"crop size {self.crop_size} must be a positive multiple "
                f"of block size {arch.block_size}")
        return self


def train_config_to_text(cfg: TrainConfig) -> str:
    lines = [f"{name} = {getattr(cfg, name)}" for name in _TRAIN_FIELDS]
    return "\n".join(lines) + "\n" + config_to_text(cfg.architecture)


def train_config_from_text(text: str) -> TrainConfig:
    """Parse the flat key = value form; non-trainer keys go to the codec parser."""
    overrides = {}
    arch_lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip()
        if key in _TRAIN_FIELDS:
            try:
                overrides[key] = _TRAIN_FIELDS[key](val.strip())
            except ValueError as exc:
                raise FormatError(f"config line {lineno}: bad value {val.strip()!r}") from exc
        else:
            arch_lines.append(raw)
    arch = config_from_text("\n".join(arch_lines))
    return TrainConfig(architecture=arch, **overrides).validate()
