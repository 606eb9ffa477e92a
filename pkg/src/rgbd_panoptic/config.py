"""Flat ``key = value`` pipeline configuration.

Blank lines and ``#`` comments are ignored. Unknown keys are rejected; missing
keys keep their defaults. ``stuff_classes`` is a comma-separated list of ids.
"""

import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import FrozenSet, Union

from rgbd_panoptic.fusion import FusionConfig, Variant
from rgbd_panoptic.losses import EmbeddingLossParams, FocalParams, PanopticLossWeights
from rgbd_panoptic.postprocess import DEFAULT_STUFF_CLASSES, PostprocessConfig


class ConfigError(ValueError):
    def __init__(self, message: str, key: str = ""):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class PipelineConfig:
    delta_cen: float = 0.5
    delta_emb: float = 0.5
    theta: float = 0.5
    delta_a: float = 0.1
    delta_r: float = 1.0
    lam: float = 1.5
    alpha: float = 0.1
    tau: float = 2.0
    w1: float = 1.0
    w2: float = 0.1
    w3: float = 10.0
    beta1: float = 1.0
    beta2: float = 1.0
    beta3: float = 0.001
    d_emb: int = 32
    p_drop: float = 0.0
    stuff_classes: FrozenSet[int] = DEFAULT_STUFF_CLASSES

    def postprocess(self) -> PostprocessConfig:
        return PostprocessConfig(self.delta_cen, self.delta_emb, self.theta, self.stuff_classes)

    def focal(self) -> FocalParams:
        return FocalParams(self.alpha, self.tau)

    def embedding(self) -> EmbeddingLossParams:
        return EmbeddingLossParams(self.delta_a, self.delta_r, self.beta1, self.beta2, self.beta3)

    def loss_weights(self) -> PanopticLossWeights:
        return PanopticLossWeights(self.w1, self.w2, self.w3)

    def fusion(self, variant: Variant = Variant.RESIDUAL_EXCITE) -> FusionConfig:
        return FusionConfig(variant=variant, lam=self.lam)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "stuff_classes":
                value = ",".join(str(c) for c in sorted(value))
            lines.append(f"{_FILE_KEYS.get(f.name, f.name)} = {value}")
        return "\n".join(lines) + "\n"


# "lambda" is a Python keyword, so the field is named lam
_FILE_KEYS = {"lam": "lambda"}
_FIELD_BY_KEY = {_FILE_KEYS.get(f.name, f.name): f for f in fields(PipelineConfig)}


def parse_config(text: str) -> PipelineConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_BY_KEY:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", key)
        f = _FIELD_BY_KEY[key]
        if f.name in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}", key)
        try:
            if f.name == "stuff_classes":
                values[f.name] = frozenset(int(v) for v in value.split(",") if v.strip())
            elif f.name == "d_emb":
                values[f.name] = int(value)
            else:
                values[f.name] = float(value)
                if not math.isfinite(values[f.name]):
                    raise ValueError(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: invalid value {value!r} for {key!r}", key) from None
    for name, value in values.items():
        check, expected = _RANGES[name]
        if not check(value):
            key = _FILE_KEYS.get(name, name)
            raise ConfigError(f"{key} must be {expected}, got {value}", key)
    cfg = PipelineConfig(**values)
    if not cfg.delta_r > cfg.delta_a:
        raise ConfigError(f"delta_r ({cfg.delta_r}) must exceed delta_a ({cfg.delta_a})", "delta_r")
    return cfg


def _nonneg(v):
    return v >= 0


_RANGES = {
    "delta_cen": (lambda v: 0 < v < 1, "in (0, 1)"),
    "delta_emb": (lambda v: v > 0, "positive"),
    "theta": (lambda v: v > 0, "positive"),
    "alpha": (lambda v: 0 < v < 1, "in (0, 1)"),
    "p_drop": (lambda v: 0 <= v <= 1, "in [0, 1]"),
    "d_emb": (lambda v: v >= 1, "a positive integer"),
    "stuff_classes": (lambda v: all(c >= 0 for c in v), "non-negative class ids"),
}
for _name in ("delta_a", "delta_r", "lam", "tau", "w1", "w2", "w3", "beta1", "beta2", "beta3"):
    _RANGES[_name] = (_nonneg, "non-negative")


def load_config(path: Union[str, Path, None]) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return parse_config(Path(path).read_text())
