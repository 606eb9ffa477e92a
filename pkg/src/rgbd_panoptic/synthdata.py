"""Synthetic scenes with a known panoptic answer.

A scene is a stuff background (one horizontal band per stuff class) with
non-overlapping rectangular or elliptical thing instances. The simulated decoder
outputs are derived from the ground truth:

* semantics: one-hot class map, each pixel relabelled at random with
  probability ``sem_flip_rate``;
* centers: a peak of 1.0 at each instance's interior center, optionally spread
  into a Gaussian bump truncated at 3 sigma and clipped to the instance;
* embeddings: one constant vector per instance on a (signed) coordinate axis,
  pairwise at least ``embedding_separation`` apart, zeros on stuff, plus
  isotropic Gaussian noise.

Instance ids in the ground truth are numbered in raster order of their centers,
matching what ``panoptic_inference`` produces.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Tuple

import numpy as np

from rgbd_panoptic import formats
from rgbd_panoptic.losses import InstanceAnnotation
from rgbd_panoptic.postprocess import DecoderOutputs, PanopticMask, center_ground_truth


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    height: int = 64
    width: int = 64
    num_classes: int = 8
    stuff_classes: Tuple[int, ...] = (0, 1)
    num_instances: int = 4
    embedding_dim: int = 32
    sem_flip_rate: float = 0.0
    center_sigma: float = 0.0
    emb_noise_sigma: float = 0.0
    seed: int = 0
    embedding_separation: float = 2.0
    max_retries: int = 200

    def __post_init__(self):
        object.__setattr__(self, "stuff_classes", tuple(sorted({int(c) for c in self.stuff_classes})))
        if self.height < 1 or self.width < 1 or self.embedding_dim < 1:
            raise ValueError("height, width and embedding_dim must be positive")
        if self.num_instances < 0:
            raise ValueError("num_instances must be non-negative")
        if not self.stuff_classes or not all(0 <= c < self.num_classes for c in self.stuff_classes):
            raise ValueError(f"stuff classes {self.stuff_classes} must be non-empty ids below {self.num_classes}")
        if self.num_instances > 0 and not self.thing_classes:
            raise ValueError("scenes with instances need at least one thing class")
        if self.num_instances > 2 * self.embedding_dim:
            raise ValueError("at most 2 * embedding_dim instances fit on the signed axes")
        if not 0.0 <= self.sem_flip_rate <= 1.0:
            raise ValueError("sem_flip_rate must lie in [0, 1]")
        if self.center_sigma < 0 or self.emb_noise_sigma < 0:
            raise ValueError("noise levels must be non-negative")

    @property
    def thing_classes(self) -> Tuple[int, ...]:
        return tuple(c for c in range(self.num_classes) if c not in self.stuff_classes)

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scene spec keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stuff_classes"] = list(self.stuff_classes)
        return d


class Scene(NamedTuple):
    gt: PanopticMask
    out: DecoderOutputs
    ann: InstanceAnnotation


def _shape_mask(rng, h, w, H, W):
    top = rng.integers(0, H - h + 1)
    left = rng.integers(0, W - w + 1)
    mask = np.zeros((H, W), dtype=bool)
    if rng.random() < 0.5:
        mask[top:top + h, left:left + w] = True
    else:
        rr, cc = np.mgrid[0:h, 0:w]
        cy, cx = (h - 1) / 2, (w - 1) / 2
        inside = ((rr - cy) / (h / 2)) ** 2 + ((cc - cx) / (w / 2)) ** 2 <= 1.0
        mask[top:top + h, left:left + w] = inside
    return mask


def _place_instances(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    H, W = spec.height, spec.width
    instance_map = np.zeros((H, W), dtype=np.int64)
    max_h, max_w = max(1, H // 3), max(1, W // 3)
    for k in range(1, spec.num_instances + 1):
        for _ in range(spec.max_retries):
            h = int(rng.integers(min(3, max_h), max_h + 1))
            w = int(rng.integers(min(3, max_w), max_w + 1))
            mask = _shape_mask(rng, h, w, H, W)
            if mask.any() and not (instance_map[mask] > 0).any():
                instance_map[mask] = k
                break
        else:
            raise GenerationError(
                f"could not place instance {k} of {spec.num_instances} without overlap "
                f"after {spec.max_retries} tries"
            )
    return instance_map


def _axis_vectors(n: int, dim: int, separation: float) -> np.ndarray:
    # +e_i / -e_i at scale s: distinct axes are s*sqrt(2) apart, opposite ones 2s
    scale = separation / np.sqrt(2.0)
    vecs = np.zeros((n, dim))
    for i in range(n):
        vecs[i, i % dim] = scale if i < dim else -scale
    return vecs


def generate(spec: SceneSpec) -> Scene:
    rng = np.random.default_rng(spec.seed)
    H, W = spec.height, spec.width

    class_map = np.empty((H, W), dtype=np.int64)
    bands = np.array_split(np.arange(H), len(spec.stuff_classes))
    for cls, rows in zip(spec.stuff_classes, bands):
        class_map[rows] = cls

    placed = _place_instances(spec, rng)
    # renumber in raster order of the interior centers
    order = sorted(center_ground_truth(placed), key=lambda kc: kc[1])
    instance_map = np.zeros_like(placed)
    for new_id, (old_id, _) in enumerate(order, start=1):
        instance_map[placed == old_id] = new_id
        class_map[placed == old_id] = rng.choice(spec.thing_classes)
    centers = tuple((new_id, rc) for new_id, (_, rc) in enumerate(order, start=1))
    gt = PanopticMask(class_map, instance_map)

    labels = class_map.copy()
    if spec.sem_flip_rate > 0 and spec.num_classes > 1:
        flip = rng.random((H, W)) < spec.sem_flip_rate
        shift = rng.integers(1, spec.num_classes, size=(H, W))
        labels = np.where(flip, (labels + shift) % spec.num_classes, labels)
    sem = np.zeros((spec.num_classes, H, W))
    np.put_along_axis(sem, labels[None], 1.0, axis=0)
    sem /= sem.sum(axis=0, keepdims=True)

    cen = np.zeros((H, W))
    rows, cols = np.mgrid[0:H, 0:W]
    for k, (r, c) in centers:
        if spec.center_sigma > 0:
            d2 = (rows - r) ** 2 + (cols - c) ** 2
            bump = np.exp(-d2 / (2.0 * spec.center_sigma ** 2))
            bump[d2 > (3.0 * spec.center_sigma) ** 2] = 0.0
            cen = np.maximum(cen, np.where(instance_map == k, bump, 0.0))
        cen[r, c] = 1.0

    emb = np.zeros((spec.embedding_dim, H, W))
    vecs = _axis_vectors(len(centers), spec.embedding_dim, spec.embedding_separation)
    for (k, _), v in zip(centers, vecs):
        emb[:, instance_map == k] = v[:, None]
    if spec.emb_noise_sigma > 0:
        emb += rng.normal(0.0, spec.emb_noise_sigma, emb.shape)

    out = DecoderOutputs(sem, cen[None], emb)
    return Scene(gt, out, InstanceAnnotation(instance_map, centers))


SCENE_FILES = {
    "sem": "sem.pten",
    "cen": "cen.pten",
    "emb": "emb.pten",
    "cen_gt": "cen_gt.pten",
    "gt": "gt.pmsk",
}


def write_scene(scene: Scene, spec: SceneSpec, out_dir) -> Path:
    """Write the scene containers plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = np.zeros((1,) + scene.gt.shape)
    for _, (r, c) in scene.ann.centers:
        target[0, r, c] = 1.0
    formats.write_tensor(out_dir / SCENE_FILES["sem"], scene.out.sem)
    formats.write_tensor(out_dir / SCENE_FILES["cen"], scene.out.cen)
    formats.write_tensor(out_dir / SCENE_FILES["emb"], scene.out.emb)
    formats.write_tensor(out_dir / SCENE_FILES["cen_gt"], target)
    formats.write_mask(out_dir / SCENE_FILES["gt"], scene.gt)
    manifest = {
        "files": SCENE_FILES,
        "spec": spec.to_dict(),
        "seed": spec.seed,
        "num_instances": scene.ann.K,
        "centers": [[k, list(rc)] for k, rc in scene.ann.centers],
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
