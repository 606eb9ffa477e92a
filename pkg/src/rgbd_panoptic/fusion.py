"""Merging of RGB and depth encoder features.

Four strategies are available:

* ``ADDITION``: plain sum of the two maps.
* ``SQUEEZE_EXCITE``: per-channel gates computed from spatially pooled features.
* ``EXCITE_ONLY``: per-entry gates, ``lam * (E(x_rgb) * x_rgb + E(x_depth) * x_depth)``.
* ``RESIDUAL_EXCITE``: ``x_rgb + lam * (E(x_rgb) * x_rgb + E(x_depth) * x_depth)``.

``E`` is a stack of 1x1 convolutions followed by a sigmoid. A missing modality
contributes zero to every term, and all gradients flowing into it are zero.
"""

import enum
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from rgbd_panoptic.tensorcore import ShapeError, conv1x1, sigmoid

Layer = Tuple[np.ndarray, np.ndarray]


class Variant(str, enum.Enum):
    ADDITION = "addition"
    SQUEEZE_EXCITE = "squeeze-excite"
    EXCITE_ONLY = "excite-only"
    RESIDUAL_EXCITE = "residual-excite"

    @classmethod
    def parse(cls, name: str) -> "Variant":
        key = name.strip().lower().replace("_", "-")
        aliases = {"add": "addition", "se": "squeeze-excite", "e": "excite-only", "re": "residual-excite"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class ExcitationParams:
    """Weights of the 1x1 convolution stack; every layer is square (C x C)."""

    layers: Tuple[Layer, ...]

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("excitation needs at least one layer")
        layers = []
        channels = None
        for weights, bias in self.layers:
            weights = np.array(weights, dtype=np.float64)
            bias = np.array(bias, dtype=np.float64)
            if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
                raise ShapeError(f"excitation weights must be square, got {weights.shape}")
            if bias.shape != (weights.shape[0],):
                raise ShapeError(f"bias shape {bias.shape} does not match weights {weights.shape}")
            if channels is not None and weights.shape[0] != channels:
                raise ShapeError("all excitation layers must share the channel count")
            channels = weights.shape[0]
            layers.append((weights, bias))
        object.__setattr__(self, "layers", tuple(layers))

    @property
    def channels(self) -> int:
        return self.layers[0][0].shape[0]

    @classmethod
    def constant(cls, channels: int, depth: int = 1, weight: float = 0.0, bias: float = 0.0):
        return cls(tuple(
            (np.full((channels, channels), weight), np.full(channels, bias)) for _ in range(depth)
        ))

    @classmethod
    def random(cls, channels: int, rng: np.random.Generator, depth: int = 1, scale: float = 0.5):
        return cls(tuple(
            (rng.normal(0.0, scale, (channels, channels)), rng.normal(0.0, scale, channels))
            for _ in range(depth)
        ))

    def zeros_like(self) -> List[Layer]:
        return [(np.zeros_like(w), np.zeros_like(b)) for w, b in self.layers]


@dataclass(frozen=True)
class FusionConfig:
    variant: Variant = Variant.RESIDUAL_EXCITE
    lam: float = 1.5
    rgb_present: bool = True
    depth_present: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.lam < 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if not (self.rgb_present or self.depth_present):
            raise ValueError("at least one modality must be present")


@dataclass
class FusionGrads:
    x_rgb: np.ndarray
    x_depth: np.ndarray
    p_rgb: List[Layer]
    p_depth: List[Layer]


def _gate_forward(x: np.ndarray, p: ExcitationParams) -> Tuple[np.ndarray, List[np.ndarray]]:
    if x.shape[0] != p.channels:
        raise ShapeError(f"input has {x.shape[0]} channels, excitation expects {p.channels}")
    acts = [x]
    for weights, bias in p.layers:
        acts.append(conv1x1(acts[-1], weights, bias))
    return sigmoid(acts[-1]), acts


def _gate_backward(
    dgate: np.ndarray, gate: np.ndarray, acts: List[np.ndarray], p: ExcitationParams
) -> Tuple[np.ndarray, List[Layer]]:
    dz = dgate * gate * (1.0 - gate)
    grads: List[Layer] = []
    for (weights, _), a_in in zip(reversed(p.layers), reversed(acts[:-1])):
        grads.append((np.einsum("ohw,ihw->oi", dz, a_in), dz.sum(axis=(1, 2))))
        dz = np.einsum("oi,ohw->ihw", weights, dz)
    grads.reverse()
    return dz, grads


def excite(x: np.ndarray, p: ExcitationParams) -> np.ndarray:
    """Per-entry gate in (0, 1) with the same shape as ``x``."""
    x = np.asarray(x, dtype=np.float64)
    return _gate_forward(x, p)[0]


def channel_gate(x: np.ndarray, p: ExcitationParams) -> np.ndarray:
    """Squeeze-and-excitation gate of shape (C, 1, 1): excitation of the spatial mean."""
    x = np.asarray(x, dtype=np.float64)
    return _gate_forward(x.mean(axis=(1, 2), keepdims=True), p)[0]


def _term_forward(x, p, variant):
    if variant is Variant.ADDITION:
        return x, None
    if variant is Variant.SQUEEZE_EXCITE:
        gate, acts = _gate_forward(x.mean(axis=(1, 2), keepdims=True), p)
    else:
        gate, acts = _gate_forward(x, p)
    return gate * x, (gate, acts)


def _term_backward(dterm, x, p, variant, cache):
    if variant is Variant.ADDITION:
        return dterm.copy(), p.zeros_like()
    gate, acts = cache
    dx = gate * dterm
    if variant is Variant.SQUEEZE_EXCITE:
        dgate = (dterm * x).sum(axis=(1, 2), keepdims=True)
        dpooled, dp = _gate_backward(dgate, gate, acts, p)
        dx = dx + dpooled / (x.shape[1] * x.shape[2])
    else:
        dx_gate, dp = _gate_backward(dterm * x, gate, acts, p)
        dx = dx + dx_gate
    return dx, dp


def _present_inputs(x_rgb, x_depth, p_rgb, p_depth, cfg):
    inputs = {}
    for name, x, p, present in (
        ("rgb", x_rgb, p_rgb, cfg.rgb_present),
        ("depth", x_depth, p_depth, cfg.depth_present),
    ):
        if not present:
            continue
        if x is None:
            raise ValueError(f"{name} is flagged present but no features were given")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3:
            raise ShapeError(f"{name} features must be (C, H, W), got {x.shape}")
        if cfg.variant is not Variant.ADDITION and x.shape[0] != p.channels:
            raise ShapeError(f"{name} features have {x.shape[0]} channels, params expect {p.channels}")
        inputs[name] = (x, p)
    shapes = {v[0].shape for v in inputs.values()}
    if len(shapes) > 1:
        raise ShapeError(f"shape mismatch: rgb {inputs['rgb'][0].shape} vs depth {inputs['depth'][0].shape}")
    return inputs


def _term_scale(cfg: FusionConfig) -> float:
    if cfg.variant in (Variant.EXCITE_ONLY, Variant.RESIDUAL_EXCITE):
        return cfg.lam
    return 1.0


def fuse(
    x_rgb: Optional[np.ndarray],
    x_depth: Optional[np.ndarray],
    p_rgb: ExcitationParams,
    p_depth: ExcitationParams,
    cfg: FusionConfig,
) -> np.ndarray:
    """Merge the two branches into a new map; inputs are not modified.

    Values passed for a branch whose flag is off are ignored entirely.
    """
    inputs = _present_inputs(x_rgb, x_depth, p_rgb, p_depth, cfg)
    scale = _term_scale(cfg)
    residual = cfg.variant is Variant.RESIDUAL_EXCITE and "rgb" in inputs
    if scale == 0.0:
        # excitation switched off: skip it so the residual passes through untouched
        shape = next(iter(inputs.values()))[0].shape
        return inputs["rgb"][0].copy() if residual else np.zeros(shape)
    out = None
    for x, p in inputs.values():
        term, _ = _term_forward(x, p, cfg.variant)
        out = term if out is None else out + term
    if scale != 1.0:
        out = scale * out
    if residual:
        out = inputs["rgb"][0] + out
    return out


def fuse_backward(
    grad_out: np.ndarray,
    x_rgb: Optional[np.ndarray],
    x_depth: Optional[np.ndarray],
    p_rgb: ExcitationParams,
    p_depth: ExcitationParams,
    cfg: FusionConfig,
) -> FusionGrads:
    """Gradients of ``sum(grad_out * fuse(...))`` w.r.t. inputs and excitation params."""
    inputs = _present_inputs(x_rgb, x_depth, p_rgb, p_depth, cfg)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    shape = next(iter(inputs.values()))[0].shape
    if grad_out.shape != shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match features {shape}")
    scale = _term_scale(cfg)
    grads = {
        "rgb": (np.zeros(shape), p_rgb.zeros_like()),
        "depth": (np.zeros(shape), p_depth.zeros_like()),
    }
    for name, (x, p) in inputs.items():
        _, cache = _term_forward(x, p, cfg.variant)
        dx, dp = _term_backward(scale * grad_out, x, p, cfg.variant, cache)
        if name == "rgb" and cfg.variant is Variant.RESIDUAL_EXCITE:
            dx = dx + grad_out
        grads[name] = (dx, dp)
    return FusionGrads(
        x_rgb=grads["rgb"][0], x_depth=grads["depth"][0],
        p_rgb=grads["rgb"][1], p_depth=grads["depth"][1],
    )


def flatten_params(layers: Sequence[Layer]) -> np.ndarray:
    return np.concatenate([np.concatenate([np.ravel(w), np.ravel(b)]) for w, b in layers])


def unflatten_params(flat: np.ndarray, like: ExcitationParams) -> ExcitationParams:
    layers = []
    pos = 0
    for weights, bias in like.layers:
        w = flat[pos:pos + weights.size].reshape(weights.shape)
        pos += weights.size
        b = flat[pos:pos + bias.size]
        pos += bias.size
        layers.append((w, b))
    return ExcitationParams(tuple(layers))
