"""Training objectives for the three decoder heads.

All pixel-wise losses are reduced by the arithmetic mean over pixels and clamp
probabilities to ``[1e-12, 1 - 1e-12]`` before taking logarithms.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Tuple

import numpy as np

PROB_CLAMP = 1e-12


class ValidationError(ValueError):
    """Raised when loss inputs violate their preconditions."""


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 0.1
    tau: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.tau < 0:
            raise ValueError(f"tau must be non-negative, got {self.tau}")


@dataclass(frozen=True)
class EmbeddingLossParams:
    delta_a: float = 0.1
    delta_r: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    beta3: float = 0.001

    def __post_init__(self):
        if min(self.delta_a, self.delta_r, self.beta1, self.beta2, self.beta3) < 0:
            raise ValueError("embedding loss parameters must be non-negative")
        if not self.delta_r > self.delta_a:
            raise ValueError(f"delta_r ({self.delta_r}) must exceed delta_a ({self.delta_a})")


@dataclass(frozen=True)
class PanopticLossWeights:
    w1: float = 1.0
    w2: float = 0.1
    w3: float = 10.0


@dataclass(frozen=True)
class InstanceAnnotation:
    """Instance id map (0 = no instance) plus one center pixel per instance.

    ``centers`` holds ``(instance_id, (row, col))`` pairs sorted by id.
    """

    instance_ids: np.ndarray
    centers: Tuple[Tuple[int, Tuple[int, int]], ...] = field(default=())

    def __post_init__(self):
        ids = np.asarray(self.instance_ids)
        if ids.ndim != 2:
            raise ValidationError(f"instance map must be H x W, got shape {ids.shape}")
        if ids.size and ids.min() < 0:
            raise ValidationError("instance ids must be non-negative")
        centers = tuple(sorted((int(k), (int(r), int(c))) for k, (r, c) in self.centers))
        listed = [k for k, _ in centers]
        if len(set(listed)) != len(listed):
            raise ValidationError("an instance has more than one center")
        present = set(np.unique(ids).tolist()) - {0}
        if present != set(listed):
            raise ValidationError(
                f"instances {sorted(present)} and centers {sorted(listed)} do not correspond"
            )
        h, w = ids.shape
        for k, (r, c) in centers:
            if not (0 <= r < h and 0 <= c < w):
                raise ValidationError(f"center {(r, c)} of instance {k} lies outside the {h}x{w} map")
            if ids[r, c] != k:
                raise ValidationError(f"center {(r, c)} is not inside instance {k}")
        object.__setattr__(self, "instance_ids", ids.astype(np.int64))
        object.__setattr__(self, "centers", centers)

    @property
    def K(self) -> int:
        return len(self.centers)


class EmbeddingLosses(NamedTuple):
    att: float
    rep: float
    reg: float
    total: float


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-probability of the labelled class."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 3 or labels.shape != probs.shape[1:]:
        raise ValidationError(f"probs {probs.shape} and labels {labels.shape} are inconsistent")
    if not np.allclose(probs.sum(axis=0), 1.0, rtol=0.0, atol=1e-6):
        raise ValidationError("class probabilities are not normalized per pixel")
    if labels.min() < 0 or labels.max() >= probs.shape[0]:
        raise ValidationError(f"labels must lie in [0, {probs.shape[0]})")
    picked = np.take_along_axis(probs, labels[None].astype(np.int64), axis=0)[0]
    return float(np.mean(-np.log(np.maximum(picked, PROB_CLAMP)))) + 0.0  # + 0.0 turns -0.0 into 0.0


def _focal_inputs(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target)
    if pred.ndim == 3 and pred.shape[0] == 1:
        pred2d = pred[0]
    elif pred.ndim == 2:
        pred2d = pred
    else:
        raise ValidationError(f"center prediction must be 1 x H x W, got {pred.shape}")
    if target.ndim == 3 and target.shape[0] == 1:
        target = target[0]
    if target.shape != pred2d.shape:
        raise ValidationError(f"target shape {target.shape} does not match prediction {pred2d.shape}")
    if not np.all((pred2d >= 0.0) & (pred2d <= 1.0)):
        raise ValidationError("center predictions must lie in [0, 1]")
    if not np.all((target == 0) | (target == 1)):
        raise ValidationError("center target must be binary")
    return pred, pred2d, target.astype(bool)


def focal_loss(pred: np.ndarray, target: np.ndarray, p: FocalParams = FocalParams()) -> float:
    _, yhat, pos = _focal_inputs(pred, target)
    yhat = np.clip(yhat, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = np.where(
        pos,
        -p.alpha * (1.0 - yhat) ** p.tau * np.log(yhat),
        -(1.0 - p.alpha) * yhat ** p.tau * np.log(1.0 - yhat),
    )
    return float(loss.mean())


def focal_loss_backward(pred: np.ndarray, target: np.ndarray, p: FocalParams = FocalParams()) -> np.ndarray:
    """d focal_loss / d pred, same shape as ``pred``; zero where the clamp is active."""
    pred, yhat_raw, pos = _focal_inputs(pred, target)
    yhat = np.clip(yhat_raw, PROB_CLAMP, 1.0 - PROB_CLAMP)
    a, t = p.alpha, p.tau
    d_pos = a * t * (1.0 - yhat) ** (t - 1.0) * np.log(yhat) - a * (1.0 - yhat) ** t / yhat
    d_neg = -(1.0 - a) * (t * yhat ** (t - 1.0) * np.log(1.0 - yhat) - yhat ** t / (1.0 - yhat))
    grad = np.where(pos, d_pos, d_neg) / yhat.size
    grad = np.where(yhat == yhat_raw, grad, 0.0)
    return grad.reshape(pred.shape)


def _center_vectors(emb: np.ndarray, ann: InstanceAnnotation) -> np.ndarray:
    h, w = emb.shape[1:]
    if ann.instance_ids.shape != (h, w):
        raise ValidationError(f"instance map {ann.instance_ids.shape} does not match embeddings {emb.shape}")
    for k, (r, c) in ann.centers:
        if not (0 <= r < h and 0 <= c < w):
            raise ValidationError(f"center {(r, c)} of instance {k} lies outside the {h}x{w} map")
    if not ann.centers:
        return np.zeros((emb.shape[0], 0))
    rows = [r for _, (r, _) in ann.centers]
    cols = [c for _, (_, c) in ann.centers]
    return emb[:, rows, cols]


def embedding_loss(
    emb: np.ndarray, ann: InstanceAnnotation, p: EmbeddingLossParams = EmbeddingLossParams()
) -> EmbeddingLosses:
    """Hinged attraction, repulsion and regularization terms on center embeddings.

    Attraction compares each instance pixel with its own center only; repulsion
    averages over unordered pairs of distinct centers; regularization is the mean
    center norm.
    """
    emb = np.asarray(emb, dtype=np.float64)
    if emb.ndim != 3:
        raise ValidationError(f"embeddings must be D x H x W, got {emb.shape}")
    centers = _center_vectors(emb, ann)
    K = ann.K
    if K == 0:
        return EmbeddingLosses(0.0, 0.0, 0.0, 0.0)

    att = 0.0
    for j, (k, _) in enumerate(ann.centers):
        members = emb[:, ann.instance_ids == k]
        dist = np.linalg.norm(members - centers[:, j:j + 1], axis=0)
        att += np.maximum(dist - p.delta_a, 0.0).mean()
    att /= K

    rep = 0.0
    if K > 1:
        iu, ju = np.triu_indices(K, k=1)
        dist = np.linalg.norm(centers[:, iu] - centers[:, ju], axis=0)
        rep = float(np.maximum(p.delta_r - dist, 0.0).mean())

    reg = float(np.linalg.norm(centers, axis=0).mean())
    total = p.beta1 * att + p.beta2 * rep + p.beta3 * reg
    return EmbeddingLosses(float(att), rep, reg, float(total))


def _unit(v: np.ndarray, axis: int = 0) -> np.ndarray:
    norm = np.linalg.norm(v, axis=axis, keepdims=True)
    # subgradient 0 at the non-differentiable origin
    return np.divide(v, norm, out=np.zeros_like(v), where=norm > 0)


def embedding_loss_backward(
    emb: np.ndarray, ann: InstanceAnnotation, p: EmbeddingLossParams = EmbeddingLossParams()
) -> np.ndarray:
    """Gradient of the combined embedding loss (``total``) w.r.t. ``emb``."""
    emb = np.asarray(emb, dtype=np.float64)
    centers = _center_vectors(emb, ann)
    grad = np.zeros_like(emb)
    K = ann.K
    if K == 0:
        return grad
    gcent = np.zeros_like(centers)

    for j, (k, _) in enumerate(ann.centers):
        mask = ann.instance_ids == k
        diff = emb[:, mask] - centers[:, j:j + 1]
        dist = np.linalg.norm(diff, axis=0)
        active = dist - p.delta_a > 0
        g = _unit(diff) * active * (p.beta1 / (K * mask.sum()))
        grad[:, mask] += g
        gcent[:, j] -= g.sum(axis=1)

    if K > 1:
        iu, ju = np.triu_indices(K, k=1)
        diff = centers[:, iu] - centers[:, ju]
        dist = np.linalg.norm(diff, axis=0)
        active = p.delta_r - dist > 0
        g = -_unit(diff) * active * (p.beta2 / iu.size)
        np.add.at(gcent.T, iu, g.T)
        np.add.at(gcent.T, ju, -g.T)

    gcent += _unit(centers) * (p.beta3 / K)
    for j, (_, (r, c)) in enumerate(ann.centers):
        grad[:, r, c] += gcent[:, j]
    return grad


def panoptic_loss(l_sem: float, l_cen: float, l_emb: float, w: PanopticLossWeights = PanopticLossWeights()) -> float:
    return w.w1 * l_sem + w.w2 * l_cen + w.w3 * l_emb
