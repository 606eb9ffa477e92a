"""Bottom-up panoptic inference from semantic, center and embedding heads.

Pipeline: threshold the center heatmap on thing-class pixels, group the
surviving pixels into 4-connected blobs of one class and similar embeddings,
keep each blob's peak as an instance center, then give every thing pixel to the
closest same-class center in embedding space if it is within ``theta``.
"""

from collections import deque
from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from rgbd_panoptic.losses import InstanceAnnotation
from rgbd_panoptic.tensorcore import ShapeError

Coord = Tuple[int, int]

DEFAULT_STUFF_CLASSES = frozenset({0, 1})


@dataclass(frozen=True)
class DecoderOutputs:
    sem: np.ndarray  # C x H x W class probabilities
    cen: np.ndarray  # 1 x H x W center probabilities
    emb: np.ndarray  # D x H x W embeddings

    def __post_init__(self):
        sem = np.asarray(self.sem, dtype=np.float64)
        cen = np.asarray(self.cen, dtype=np.float64)
        emb = np.asarray(self.emb, dtype=np.float64)
        if cen.ndim == 2:
            cen = cen[None]
        if sem.ndim != 3 or cen.ndim != 3 or emb.ndim != 3 or cen.shape[0] != 1:
            raise ShapeError(f"expected C x H x W, 1 x H x W, D x H x W; got {sem.shape}, {cen.shape}, {emb.shape}")
        if not (sem.shape[1:] == cen.shape[1:] == emb.shape[1:]):
            raise ShapeError(f"spatial dims differ: {sem.shape}, {cen.shape}, {emb.shape}")
        if not np.allclose(sem.sum(axis=0), 1.0, rtol=0.0, atol=1e-6):
            raise ValueError("semantic probabilities are not normalized per pixel")
        if cen.min() < 0.0 or cen.max() > 1.0:
            raise ValueError("center probabilities must lie in [0, 1]")
        object.__setattr__(self, "sem", sem)
        object.__setattr__(self, "cen", cen)
        object.__setattr__(self, "emb", emb)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.sem.shape[1:]


@dataclass(frozen=True)
class PostprocessConfig:
    delta_cen: float = 0.5
    delta_emb: float = 0.5
    theta: float = 0.5
    stuff_classes: FrozenSet[int] = DEFAULT_STUFF_CLASSES

    def __post_init__(self):
        object.__setattr__(self, "stuff_classes", frozenset(int(c) for c in self.stuff_classes))
        if not 0.0 < self.delta_cen < 1.0:
            raise ValueError(f"delta_cen must lie in (0, 1), got {self.delta_cen}")
        if self.delta_emb <= 0 or self.theta <= 0:
            raise ValueError("delta_emb and theta must be positive")


@dataclass(frozen=True)
class PanopticMask:
    class_map: np.ndarray
    instance_map: np.ndarray

    def __post_init__(self):
        class_map = np.asarray(self.class_map, dtype=np.int64)
        instance_map = np.asarray(self.instance_map, dtype=np.int64)
        if class_map.ndim != 2 or class_map.shape != instance_map.shape:
            raise ShapeError(f"class map {class_map.shape} and instance map {instance_map.shape} differ")
        if class_map.size and (class_map.min() < 0 or instance_map.min() < 0):
            raise ValueError("class and instance ids must be non-negative")
        object.__setattr__(self, "class_map", class_map)
        object.__setattr__(self, "instance_map", instance_map)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.class_map.shape

    def __eq__(self, other):
        if not isinstance(other, PanopticMask):
            return NotImplemented
        return np.array_equal(self.class_map, other.class_map) and np.array_equal(
            self.instance_map, other.instance_map
        )


@dataclass(frozen=True)
class Blob:
    pixels: Tuple[Coord, ...]
    class_id: int
    peak: Coord


def semantic_argmax(sem: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the smaller class id on ties
    return np.argmax(np.asarray(sem), axis=0)


def thing_mask(sem_argmax: np.ndarray, stuff_classes: Iterable[int]) -> np.ndarray:
    return ~np.isin(sem_argmax, list(stuff_classes))


def threshold_centers(cen: np.ndarray, sem_argmax: np.ndarray, cfg: PostprocessConfig) -> List[Coord]:
    """Pixels with ``cen >= delta_cen`` predicted as a thing class, in raster order."""
    cen = np.asarray(cen)
    if cen.ndim == 3:
        cen = cen[0]
    if cen.shape != sem_argmax.shape:
        raise ShapeError(f"center map {cen.shape} and class map {sem_argmax.shape} differ")
    keep = (cen >= cfg.delta_cen) & thing_mask(sem_argmax, cfg.stuff_classes)
    return [(int(r), int(c)) for r, c in zip(*np.nonzero(keep))]


def extract_blobs(
    omega: Sequence[Coord],
    sem_argmax: np.ndarray,
    emb: np.ndarray,
    cen: np.ndarray,
    cfg: PostprocessConfig,
) -> List[Blob]:
    """4-connected components of ``omega``.

    Two adjacent pixels are linked when they share the predicted class and their
    embeddings are closer than ``delta_emb``. Each blob's peak is its member with
    the highest center probability, ties going to the smallest linear index.
    """
    cen = np.asarray(cen)
    if cen.ndim == 3:
        cen = cen[0]
    members = set(omega)
    seen = set()
    blobs = []
    for start in sorted(members):
        if start in seen:
            continue
        cls = int(sem_argmax[start])
        component = [start]
        seen.add(start)
        queue = deque([start])
        while queue:
            r, c = queue.popleft()
            for nb in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if nb in seen or nb not in members or int(sem_argmax[nb]) != cls:
                    continue
                if np.linalg.norm(emb[:, r, c] - emb[:, nb[0], nb[1]]) < cfg.delta_emb:
                    seen.add(nb)
                    component.append(nb)
                    queue.append(nb)
        component.sort()
        peak = component[0]
        for px in component[1:]:
            if cen[px] > cen[peak]:
                peak = px
        blobs.append(Blob(tuple(component), cls, peak))
    return blobs


def nms_centers(blobs: Sequence[Blob]) -> List[Tuple[Coord, int]]:
    """One ``(peak, class_id)`` per blob, in raster order."""
    return sorted((b.peak, b.class_id) for b in blobs)


def assign_pixels(
    centers: Sequence[Tuple[Coord, int]],
    sem_argmax: np.ndarray,
    emb: np.ndarray,
    cfg: PostprocessConfig,
) -> PanopticMask:
    """Nearest same-class center within ``theta`` in embedding space, else id 0.

    Exact distance ties go to the center earlier in raster order. Instance ids
    are renumbered 1..N in raster order of the centers that received pixels.
    """
    sem_argmax = np.asarray(sem_argmax, dtype=np.int64)
    emb = np.asarray(emb, dtype=np.float64)
    centers = sorted(centers)
    owner = np.full(sem_argmax.shape, -1, dtype=np.int64)
    things = thing_mask(sem_argmax, cfg.stuff_classes)
    for cls in sorted({c for _, c in centers}):
        if cls in cfg.stuff_classes:
            continue
        idx = [i for i, (_, c) in enumerate(centers) if c == cls]
        cvec = np.stack([emb[:, r, c] for (r, c), _ in (centers[i] for i in idx)], axis=1)
        pix = (sem_argmax == cls) & things
        vecs = emb[:, pix]
        dist = np.linalg.norm(vecs[:, :, None] - cvec[:, None, :], axis=0)
        best = np.argmin(dist, axis=1)
        ok = dist[np.arange(dist.shape[0]), best] < cfg.theta
        owner[pix] = np.where(ok, np.asarray(idx)[best], -1)

    instance_map = np.zeros(sem_argmax.shape, dtype=np.int64)
    next_id = 1
    for i in range(len(centers)):
        hit = owner == i
        if hit.any():
            instance_map[hit] = next_id
            next_id += 1
    return PanopticMask(sem_argmax.copy(), instance_map)


def panoptic_inference(out: DecoderOutputs, cfg: PostprocessConfig = PostprocessConfig()) -> PanopticMask:
    sem_argmax = semantic_argmax(out.sem)
    omega = threshold_centers(out.cen, sem_argmax, cfg)
    blobs = extract_blobs(omega, sem_argmax, out.emb, out.cen, cfg)
    return assign_pixels(nms_centers(blobs), sem_argmax, out.emb, cfg)


def center_ground_truth(instance_map: np.ndarray) -> List[Tuple[int, Coord]]:
    """An interior center per instance: the pixel farthest (city-block) from the mask boundary.

    Ties go to the smallest linear index. Unlike a bounding-box midpoint, the
    result always lies inside the mask, also for concave shapes.
    """
    instance_map = np.asarray(instance_map)
    if instance_map.ndim != 2:
        raise ShapeError(f"instance map must be H x W, got {instance_map.shape}")
    result = []
    slices = ndimage.find_objects(instance_map.astype(np.int64))
    for k, sl in enumerate(slices, start=1):
        if sl is None:
            continue
        mask = instance_map[sl] == k
        # pad so the image border counts as boundary
        dist = ndimage.distance_transform_cdt(np.pad(mask, 1), metric="taxicab")[1:-1, 1:-1]
        r, c = np.unravel_index(int(np.argmax(np.where(mask, dist, -1))), mask.shape)
        result.append((k, (int(r) + sl[0].start, int(c) + sl[1].start)))
    return result


def instance_annotation(instance_map: np.ndarray) -> InstanceAnnotation:
    return InstanceAnnotation(np.asarray(instance_map), tuple(center_ground_truth(instance_map)))


def center_target(instance_map: np.ndarray) -> np.ndarray:
    """Binary H x W map with ones at the interior centers."""
    target = np.zeros(np.shape(instance_map), dtype=np.float64)
    for _, (r, c) in center_ground_truth(instance_map):
        target[r, c] = 1.0
    return target
