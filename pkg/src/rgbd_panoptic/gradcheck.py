"""Analytic-vs-numeric gradient comparisons on small random instances."""

from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from rgbd_panoptic.fusion import (
    ExcitationParams,
    FusionConfig,
    Variant,
    flatten_params,
    fuse,
    fuse_backward,
    unflatten_params,
)
from rgbd_panoptic.losses import (
    EmbeddingLossParams,
    FocalParams,
    InstanceAnnotation,
    embedding_loss,
    embedding_loss_backward,
    focal_loss,
    focal_loss_backward,
)
from rgbd_panoptic.postprocess import center_ground_truth
from rgbd_panoptic.tensorcore import finite_diff_gradient, relative_error

EPS = 1e-5
TOLERANCE = 1e-4


def fusion_case(rng, shape=(2, 3, 3), depth=1):
    c = shape[0]
    return {
        "x_rgb": rng.normal(size=shape),
        "x_depth": rng.normal(size=shape),
        "p_rgb": ExcitationParams.random(c, rng, depth=depth),
        "p_depth": ExcitationParams.random(c, rng, depth=depth),
        "grad_out": rng.normal(size=shape),
    }


def check_fusion(
    variant: Variant,
    rng: np.random.Generator,
    lam: float = 1.5,
    rgb_present: bool = True,
    depth_present: bool = True,
    shape=(2, 3, 3),
    depth: int = 1,
) -> Dict[str, float]:
    """Relative error of every fusion gradient for the loss ``sum(G * fuse(...))``."""
    case = fusion_case(rng, shape, depth)
    cfg = FusionConfig(variant, lam, rgb_present, depth_present)
    G = case.pop("grad_out")
    args = dict(case)

    def loss(**override):
        kw = dict(args, **override)
        return float(np.sum(G * fuse(kw["x_rgb"], kw["x_depth"], kw["p_rgb"], kw["p_depth"], cfg)))

    grads = fuse_backward(G, args["x_rgb"], args["x_depth"], args["p_rgb"], args["p_depth"], cfg)
    errors = {
        "x_rgb": relative_error(grads.x_rgb, finite_diff_gradient(lambda x: loss(x_rgb=x), args["x_rgb"], EPS)),
        "x_depth": relative_error(grads.x_depth, finite_diff_gradient(lambda x: loss(x_depth=x), args["x_depth"], EPS)),
    }
    for name, analytic in (("p_rgb", grads.p_rgb), ("p_depth", grads.p_depth)):
        like = args[name]
        numeric = finite_diff_gradient(
            lambda flat: loss(**{name: unflatten_params(flat, like)}), flatten_params(like.layers), EPS
        )
        errors[name] = relative_error(flatten_params(analytic), numeric)
    return errors


def focal_case(rng, shape=(1, 4, 5)):
    pred = rng.uniform(0.02, 0.98, size=shape)
    target = (rng.random(shape[1:]) < 0.3).astype(np.float64)
    return pred, target


def check_focal(rng: np.random.Generator, p: FocalParams = FocalParams()) -> float:
    pred, target = focal_case(rng)
    numeric = finite_diff_gradient(lambda y: focal_loss(y, target, p), pred, EPS)
    return relative_error(focal_loss_backward(pred, target, p), numeric)


def random_annotation(rng, shape=(6, 7), k=3) -> InstanceAnnotation:
    """Random instance layout with ``k`` instances; centers from the interior-center rule."""
    ids = rng.integers(0, k + 1, size=shape)
    ids.flat[rng.choice(ids.size, size=k, replace=False)] = np.arange(1, k + 1)
    return InstanceAnnotation(ids, tuple(center_ground_truth(ids)))


def check_embedding(rng: np.random.Generator, p: EmbeddingLossParams = EmbeddingLossParams()) -> float:
    ann = random_annotation(rng)
    # small scale keeps center pairs inside the repulsion margin so that term is exercised
    emb = rng.normal(0.0, 0.4, size=(3,) + ann.instance_ids.shape)
    numeric = finite_diff_gradient(lambda e: embedding_loss(e, ann, p).total, emb, EPS)
    return relative_error(embedding_loss_backward(emb, ann, p), numeric)


def run_gradcheck(
    variants: Optional[Iterable[Variant]] = None, seed: int = 0, trials: int = 1
) -> List[Tuple[str, float]]:
    """Max relative error per check over ``trials`` random instances."""
    rng = np.random.default_rng(seed)
    variants = list(Variant) if variants is None else list(variants)
    results = []
    for variant in variants:
        worst = 0.0
        for _ in range(trials):
            worst = max(worst, *check_fusion(variant, rng).values())
        results.append((f"fusion/{variant.value}", worst))
    results.append(("loss/focal", max(check_focal(rng) for _ in range(trials))))
    results.append(("loss/embedding", max(check_embedding(rng) for _ in range(trials))))
    return results
