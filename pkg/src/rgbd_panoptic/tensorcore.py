"""Dense feature-map arithmetic and a central-difference gradient checker.

A feature map is a float64 numpy array of shape (channels, height, width),
row-major, so ``arr.ravel()`` gives the canonical linear index used for
tie-breaking elsewhere in the package.
"""

from typing import Callable

import numpy as np
from scipy.special import expit

FeatureMap = np.ndarray


class ShapeError(ValueError):
    """Raised when array dimensions are incompatible."""


class NumericError(ArithmeticError):
    """Raised when a function under differentiation returns a non-finite value."""


def as_feature_map(data, *, check_finite: bool = True) -> FeatureMap:
    """Validate ``data`` as a C x H x W map and return a float64 copy."""
    arr = np.array(data, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"feature map must be rank 3 (C, H, W), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ShapeError(f"feature map dims must be positive, got {arr.shape}")
    if check_finite and not np.all(np.isfinite(arr)):
        raise ValueError("feature map contains non-finite values")
    return arr


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def elementwise_add(a: FeatureMap, b: FeatureMap) -> FeatureMap:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    _same_shape(a, b)
    return a + b


def elementwise_mul(a: FeatureMap, b: FeatureMap) -> FeatureMap:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    _same_shape(a, b)
    return a * b


def conv1x1(x: FeatureMap, weights: np.ndarray, bias: np.ndarray) -> FeatureMap:
    """Pointwise convolution: ``out[o, h, w] = bias[o] + sum_i weights[o, i] * x[i, h, w]``."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"conv1x1 expects a (C, H, W) map, got shape {x.shape}")
    if weights.ndim != 2 or weights.shape[1] != x.shape[0]:
        raise ShapeError(
            f"weights of shape {weights.shape} do not accept {x.shape[0]} input channels"
        )
    if bias.shape != (weights.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} does not match {weights.shape[0]} outputs")
    return np.einsum("oi,ihw->ohw", weights, x) + bias[:, None, None]


def sigmoid(x: FeatureMap) -> FeatureMap:
    # expit saturates to exactly 0/1 instead of overflowing
    return expit(np.asarray(x, dtype=np.float64))


def finite_diff_gradient(
    f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``.

    ``x`` may have any shape; the result has the same shape. Each entry costs two
    evaluations of ``f``, so keep inputs small.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(f(x))
        flat[i] = orig - eps
        f_minus = float(f(x))
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite function value while perturbing index {i}")
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-12) -> float:
    """Max absolute deviation scaled by the larger of the two gradients' max magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    _same_shape(analytic, numeric)
    if analytic.size == 0:
        return 0.0
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), floor)
    return float(np.abs(analytic - numeric).max() / scale)
