"""Mean IoU for semantics and panoptic quality (PQ = SQ * RQ) for the full task.

Stuff classes form one segment per class per image. Thing segments are keyed by
(class, instance id); thing pixels with instance id 0 are unsegmented area and
belong to no segment. A predicted and a ground-truth segment match when they
share the class and their IoU is strictly above 0.5, which makes the matching
unique.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np

from rgbd_panoptic.postprocess import PanopticMask
from rgbd_panoptic.tensorcore import ShapeError

MATCH_IOU = 0.5


def iou(a: Iterable, b: Iterable) -> float:
    """IoU of two pixel sets; two empty sets give 0."""
    a, b = set(a), set(b)
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def mean_iou(pred: np.ndarray, gt: np.ndarray, num_classes: Optional[int] = None) -> float:
    """Mean per-class IoU over classes that occur in ``pred`` or ``gt``."""
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if num_classes is None:
        num_classes = int(max(pred.max(initial=0), gt.max(initial=0))) + 1
    if pred.size and (min(pred.min(), gt.min()) < 0 or max(pred.max(), gt.max()) >= num_classes):
        raise ValueError(f"class ids must lie in [0, {num_classes})")
    confusion = np.bincount(gt.ravel() * num_classes + pred.ravel(), minlength=num_classes ** 2)
    confusion = confusion.reshape(num_classes, num_classes)
    inter = np.diag(confusion).astype(np.float64)
    union = confusion.sum(axis=0) + confusion.sum(axis=1) - inter
    present = union > 0
    if not present.any():
        return 0.0
    return float((inter[present] / union[present]).mean())


@dataclass
class ClassPQ:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    iou_sum: float = 0.0

    @property
    def sq(self) -> float:
        return self.iou_sum / self.tp if self.tp else 0.0

    @property
    def rq(self) -> float:
        denom = self.tp + 0.5 * self.fp + 0.5 * self.fn
        return self.tp / denom if denom else 0.0

    @property
    def pq(self) -> float:
        return self.sq * self.rq

    def merge(self, other: "ClassPQ") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.iou_sum += other.iou_sum


@dataclass
class PQReport:
    per_class: Dict[int, ClassPQ] = field(default_factory=dict)

    def _populated(self):
        return [s for _, s in sorted(self.per_class.items()) if s.tp + s.fp + s.fn > 0]

    @property
    def pq(self) -> float:
        stats = self._populated()
        return float(np.mean([s.pq for s in stats])) if stats else 0.0

    @property
    def sq(self) -> float:
        stats = self._populated()
        return float(np.mean([s.sq for s in stats])) if stats else 0.0

    @property
    def rq(self) -> float:
        stats = self._populated()
        return float(np.mean([s.rq for s in stats])) if stats else 0.0

    def merge(self, other: "PQReport") -> "PQReport":
        """Accumulate counts from another image; ratios are taken only at read time."""
        for cls, stats in other.per_class.items():
            self.per_class.setdefault(cls, ClassPQ()).merge(stats)
        return self

    def format(self) -> str:
        lines = ["class PQ SQ RQ TP FP FN"]
        for cls, s in sorted(self.per_class.items()):
            lines.append(f"{cls} {s.pq:.6f} {s.sq:.6f} {s.rq:.6f} {s.tp} {s.fp} {s.fn}")
        lines.append(f"overall PQ={self.pq:.6f} SQ={self.sq:.6f} RQ={self.rq:.6f}")
        return "\n".join(lines)


def _segment_keys(mask: PanopticMask, stuff: set) -> np.ndarray:
    """Per-pixel segment key ``class << 32 | instance`` (stuff uses instance 0); -1 if unsegmented."""
    inst = np.where(np.isin(mask.class_map, list(stuff)), 0, mask.instance_map)
    keys = mask.class_map.astype(np.int64) * (1 << 32) + inst
    valid = np.isin(mask.class_map, list(stuff)) | (mask.instance_map != 0)
    return np.where(valid, keys, -1)


def panoptic_quality(pred: PanopticMask, gt: PanopticMask, stuff_classes: Iterable[int] = ()) -> PQReport:
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    stuff = {int(c) for c in stuff_classes}
    pkeys = _segment_keys(pred, stuff).ravel()
    gkeys = _segment_keys(gt, stuff).ravel()
    pred_area = dict(zip(*np.unique(pkeys[pkeys >= 0], return_counts=True)))
    gt_area = dict(zip(*np.unique(gkeys[gkeys >= 0], return_counts=True)))

    both = (pkeys >= 0) & (gkeys >= 0) & ((pkeys >> 32) == (gkeys >> 32))
    if both.any():
        pairs, inter = np.unique(np.stack([gkeys[both], pkeys[both]]), axis=1, return_counts=True)
    else:
        pairs, inter = np.zeros((2, 0), dtype=np.int64), np.zeros(0, dtype=np.int64)

    report = PQReport()
    matched_pred, matched_gt = set(), set()
    for (gk, pk), n in zip(pairs.T, inter):
        union = gt_area[gk] + pred_area[pk] - n
        value = n / union
        if value > MATCH_IOU:
            stats = report.per_class.setdefault(int(gk >> 32), ClassPQ())
            stats.tp += 1
            stats.iou_sum += float(value)
            matched_gt.add(gk)
            matched_pred.add(pk)
    for gk in gt_area:
        if gk not in matched_gt:
            report.per_class.setdefault(int(gk >> 32), ClassPQ()).fn += 1
    for pk in pred_area:
        if pk not in matched_pred:
            report.per_class.setdefault(int(pk >> 32), ClassPQ()).fp += 1
    return report
