"""Codec configuration: architecture widths, coding constants, ablation switches."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import DimensionError, FormatError

# Four x2 stages in each direction.
TOTAL_STRIDE = 16
STAGE_STRIDES = (2, 4, 8, 16)
HYPER_STRIDE = 4  # on top of TOTAL_STRIDE


@dataclass(frozen=True)
class CodecConfig:
    channels: tuple[int, int, int, int] = (48, 64, 96, 128)
    depths: tuple[int, int, int, int] = (1, 1, 2, 1)
    window_size: int = 4
    heads: tuple[int, int, int, int] = (2, 2, 4, 4)
    latent_channels: int = 32
    hyper_channels: int = 48
    slices: int = 10
    charm_enabled: bool = True
    block_size: int = 32
    sigma_min: float = 0.11
    symbol_bound: int = 64
    cdf_precision: int = 16
    group_attention: bool = True

    def validate(self) -> "CodecConfig":
        if len(self.channels) != 4 or len(self.depths) != 4 or len(self.heads) != 4:
            raise DimensionError("channels/depths/heads must list all four stages")
        for c, d, h in zip(self.channels, self.depths, self.heads):
            if c <= 0 or d <= 0 or h <= 0:
                raise DimensionError("stage sizes must be positive")
            if c % h:
                raise DimensionError(f"stage width {c} not divisible by {h} heads")
        if self.window_size <= 0:
            raise DimensionError("window size must be positive")
        if self.block_size <= 0 or self.block_size % TOTAL_STRIDE:
            raise DimensionError(
                f"block size {self.block_size} must be a positive multiple of {TOTAL_STRIDE}")
        if self.latent_channels <= 0 or self.hyper_channels <= 0:
            raise DimensionError("latent/hyper channel counts must be positive")
        if not 1 <= self.slices <= self.latent_channels:
            raise DimensionError(
                f"slices {self.slices} outside [1, {self.latent_channels}]")
        if self.sigma_min <= 0:
            raise DimensionError("sigma_min must be positive")
        if self.symbol_bound < 1:
            raise DimensionError("symbol bound must be at least 1")
        if not 9 <= self.cdf_precision <= 16:
            raise DimensionError(f"cdf precision {self.cdf_precision} outside [9, 16]")
        return self

    def slice_widths(self) -> list[int]:
        """Channel widths of the autoregressive slices; remainder goes last."""
        if not self.charm_enabled:
            return [self.latent_channels]
        base = self.latent_channels // self.slices
        widths = [base] * self.slices
        widths[-1] += self.latent_channels - base * self.slices
        return widths


_TUPLE_FIELDS = {"channels", "depths", "heads"}
_BOOL_FIELDS = {"charm_enabled", "group_attention"}
_FLOAT_FIELDS = {"sigma_min"}


def config_to_text(cfg: CodecConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in _TUPLE_FIELDS:
            v = ",".join(str(x) for x in v)
        elif f.name in _BOOL_FIELDS:
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> CodecConfig:
    """Parse the flat key = value form; unknown keys are rejected."""
    known = {f.name for f in fields(CodecConfig)}
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in known:
            raise FormatError(f"config line {lineno}: unknown key {key!r}")
        try:
            if key in _TUPLE_FIELDS:
                overrides[key] = tuple(int(x) for x in val.split(","))
            elif key in _BOOL_FIELDS:
                if val.lower() not in ("true", "false"):
                    raise ValueError(val)
                overrides[key] = val.lower() == "true"
            elif key in _FLOAT_FIELDS:
                overrides[key] = float(val)
            else:
                overrides[key] = int(val)
        except ValueError as exc:
            raise FormatError(f"config line {lineno}: bad value {val!r}") from exc
    return replace(CodecConfig(), **overrides).validate()
