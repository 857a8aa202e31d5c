"""Box geometry: overlaps, interpolation, clamping and per-class NMS.

Boxes are ``(x_min, y_min, x_max, y_max)`` in continuous pixel coordinates
with the origin at the top-left corner of the image. Areas use the open-set
convention ``max(0, x_max - x_min) * max(0, y_max - y_min)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np


class Box(NamedTuple):
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def area(self) -> float:
        return max(0.0, self.x_max - self.x_min) * max(0.0, self.y_max - self.y_min)

    def as_array(self) -> np.ndarray:
        return np.asarray(self, dtype=np.float64)


def validate_box(box: Sequence[float]) -> Box:
    """Return ``box`` as a :class:`Box`, raising ``ValueError`` if invalid."""
    if len(box) != 4:
        raise ValueError(f"box needs 4 coordinates, got {len(box)}")
    b = Box(*(float(v) for v in box))
    if not all(math.isfinite(v) for v in b):
        raise ValueError(f"non-finite box coordinate in {tuple(b)}")
    if b.x_min > b.x_max or b.y_min > b.y_max:
        raise ValueError(f"inverted box {tuple(b)}")
    return b


@dataclass
class ScoredBox:
    """A box with a ``C+1`` score vector; index 0 is background."""

    box: Box
    scores: np.ndarray

    def __post_init__(self):
        self.box = Box(*(float(v) for v in self.box))
        self.scores = np.asarray(self.scores, dtype=np.float64)


@dataclass
class DetectionFrame:
    """All detections of one video frame, stored column-wise.

    ``boxes`` has shape ``(N, 4)`` and ``scores`` shape ``(N, C+1)``.
    """

    video: str
    t: int
    width: int
    height: int
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    scores: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim == 1:
            self.scores = self.scores.reshape(len(self.boxes), -1)
        if len(self.scores) != len(self.boxes):
            raise ValueError("boxes and scores disagree on detection count")
        if self.t < 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("frame index must be >= 0 and image size > 0")

    def __len__(self) -> int:
        return len(self.boxes)

    @property
    def num_classes(self) -> int:
        """Number of action classes ``C`` (background excluded)."""
        return self.scores.shape[1] - 1

    @classmethod
    def from_scored(cls, video, t, width, height, dets: Sequence[ScoredBox], num_classes=None):
        if dets:
            boxes = np.array([d.box for d in dets], dtype=np.float64)
            scores = np.stack([d.scores for d in dets])
        else:
            boxes = np.zeros((0, 4))
            scores = np.zeros((0, (num_classes or 0) + 1))
        return cls(video, t, width, height, boxes, scores)

    def scored_boxes(self) -> List[ScoredBox]:
        return [ScoredBox(Box(*b), s.copy()) for b, s in zip(self.boxes, self.scores)]

    def clamped(self) -> "DetectionFrame":
        boxes = clamp_array(self.boxes, self.width, self.height)
        return DetectionFrame(self.video, self.t, self.width, self.height, boxes, self.scores.copy())


def area(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64)
    return np.maximum(boxes[..., 2] - boxes[..., 0], 0.0) * np.maximum(boxes[..., 3] - boxes[..., 1], 0.0)


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    """Intersection over union of two boxes; 0 when the union is empty."""
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    inter = max(0.0, ix) * max(0.0, iy)
    union = (max(0.0, a[2] - a[0]) * max(0.0, a[3] - a[1])
             + max(0.0, b[2] - b[0]) * max(0.0, b[3] - b[1]) - inter)
    if union <= 0.0:
        return 0.0
    return float(inter / union)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(N, 4)`` and ``(M, 4)`` box arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ix = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.maximum(ix, 0.0) * np.maximum(iy, 0.0)
    union = area(a)[:, None] + area(b)[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def paired_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Element-wise IoU of two equally shaped ``(N, 4)`` arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ix = np.minimum(a[:, 2], b[:, 2]) - np.maximum(a[:, 0], b[:, 0])
    iy = np.minimum(a[:, 3], b[:, 3]) - np.maximum(a[:, 1], b[:, 1])
    inter = np.maximum(ix, 0.0) * np.maximum(iy, 0.0)
    union = area(a) + area(b) - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def interpolate_pair(b_first: Sequence[float], b_last: Sequence[float], delta: int) -> np.ndarray:
    """Coordinate-wise linear interpolation over ``delta`` frame steps.

    Returns a ``(delta + 1, 4)`` array whose first and last rows are the
    endpoints exactly; coordinates equal at both ends stay exact throughout.
    """
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    first = np.asarray(b_first, dtype=np.float64)
    last = np.asarray(b_last, dtype=np.float64)
    w = (np.arange(delta + 1, dtype=np.float64) / delta)[:, None]
    # first + w * step keeps constant coordinates exact
    out = first[None, :] + w * (last - first)[None, :]
    out[0] = first
    out[-1] = last
    return out


def clamp(b: Sequence[float], width: float, height: float) -> Box:
    if width <= 0 or height <= 0:
        raise ValueError("image size must be positive")
    return Box(*clamp_array(np.asarray(b, dtype=np.float64), width, height).tolist())


def clamp_array(boxes: np.ndarray, width: float, height: float) -> np.ndarray:
    boxes = np.array(boxes, dtype=np.float64, copy=True)
    boxes[..., 0::2] = np.clip(boxes[..., 0::2], 0.0, width)
    boxes[..., 1::2] = np.clip(boxes[..., 1::2], 0.0, height)
    return boxes


def nms_order(boxes: np.ndarray, scores: np.ndarray, threshold: float,
              overlaps: np.ndarray = None, limit: int = None) -> np.ndarray:
    """Indices kept by greedy NMS, in descending score order.

    Equal scores keep input order. ``overlaps`` may carry a precomputed
    IoU matrix for ``boxes``; ``limit`` stops after that many keeps.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = len(scores)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(-scores, kind="stable")
    if overlaps is None:
        overlaps = iou_matrix(boxes, boxes)
    suppressed = np.zeros(n, dtype=bool)
    keep = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(i)
        if limit is not None and len(keep) >= limit:
            break
        suppressed |= overlaps[i] > threshold
    return np.asarray(keep, dtype=np.int64)


def nms_per_class(boxes: Sequence[Tuple[Sequence[float], float]], threshold: float) -> List[Tuple[Box, float]]:
    """Greedy NMS over ``(box, score)`` pairs of a single class."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    if not boxes:
        return []
    arr = np.array([b for b, _ in boxes], dtype=np.float64)
    sc = np.array([s for _, s in boxes], dtype=np.float64)
    return [(Box(*arr[i].tolist()), float(sc[i])) for i in nms_order(arr, sc, threshold)]
