"""Tube-level detection metrics: ST-IoU, AP, video-mAP and its variants."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .geometry import paired_iou
from .tubes import ActionTube, GtTube

SIOU_MODES = ("intersection", "gt")


def default_sweep() -> List[float]:
    return [round(0.5 + 0.05 * k, 2) for k in range(10)]


def default_fractions() -> List[float]:
    return [round(0.1 * k, 1) for k in range(1, 11)]


@dataclass
class EvalConfig:
    delta: float = 0.5
    delta_sweep: List[float] = field(default_factory=default_sweep)
    fractions: List[float] = field(default_factory=default_fractions)
    siou_mode: str = "intersection"

    def __post_init__(self):
        for d in [self.delta, *self.delta_sweep, *self.fractions]:
            if not 0.0 < d <= 1.0:
                raise ValueError(f"thresholds and fractions must lie in (0, 1], got {d}")
        if self.siou_mode not in SIOU_MODES:
            raise ValueError(f"unknown siou_mode {self.siou_mode!r}")


def observed_until(fraction: float, video_length: int) -> int:
    """Last observed frame index after watching ``fraction`` of the video."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    return max(1, math.ceil(round(fraction * video_length, 9))) - 1


def temporal_iou(a, b) -> float:
    inter = min(a.end, b.end) - max(a.start, b.start) + 1
    if inter <= 0:
        return 0.0
    union = max(a.end, b.end) - min(a.start, b.start) + 1
    return inter / union


def st_iou(det, gt, siou_mode: str = "intersection") -> float:
    """Temporal IoU times the mean spatial IoU over the shared frames.

    With ``siou_mode="gt"`` the spatial IoUs are averaged over the whole
    ground-truth duration instead (missing frames count as 0).
    """
    lo, hi = max(det.start, gt.start), min(det.end, gt.end)
    if lo > hi:
        return 0.0
    d = det.boxes[lo - det.start:hi - det.start + 1]
    g = gt.boxes[lo - gt.start:hi - gt.start + 1]
    ious = paired_iou(d, g)
    if siou_mode == "gt":
        spatial = ious.sum() / len(gt.boxes)
    else:
        spatial = ious.mean()
    return float(temporal_iou(det, gt) * spatial)


def average_precision(tp: Sequence[bool], num_gt: int) -> float:
    """All-point interpolated AP from a ranked TP/FP list."""
    if num_gt == 0 or len(tp) == 0:
        return 0.0
    tp = np.asarray(tp, dtype=np.float64)
    ctp = np.cumsum(tp)
    recall = ctp / num_gt
    precision = ctp / np.arange(1, len(tp) + 1)
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def match_detections(dets: Sequence[ActionTube], gts: Sequence[GtTube], delta: float,
                     siou_mode: str = "intersection") -> List[bool]:
    """Greedy TP/FP assignment in descending score order.

    Ties in score are broken by video id, then by input position. Each
    detection takes the unmatched ground truth of its video with the highest
    ST-IoU, provided it reaches ``delta``.
    """
    by_video = defaultdict(list)
    for k, g in enumerate(gts):
        by_video[g.video].append(k)
    used = [False] * len(gts)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].video, i))
    tp = []
    for i in order:
        det = dets[i]
        best, best_ov = -1, -1.0
        for k in by_video.get(det.video, ()):
            if used[k]:
                continue
            ov = st_iou(det, gts[k], siou_mode)
            if ov >= delta and ov > best_ov:
                best, best_ov = k, ov
        if best >= 0:
            used[best] = True
        tp.append(best >= 0)
    return tp


def class_ap(dets: Sequence[ActionTube], gts: Sequence[GtTube], delta: float,
             siou_mode: str = "intersection") -> float:
    """AP of one class's detections (all videos) against its ground truth."""
    return average_precision(match_detections(dets, gts, delta, siou_mode), len(gts))


def per_class_ap(dets: Sequence[ActionTube], gts: Sequence[GtTube], delta: float,
                 siou_mode: str = "intersection") -> Dict[int, float]:
    if not gts:
        raise ValueError("no ground-truth tubes to evaluate against")
    classes = sorted({g.label for g in gts})
    out = {}
    for c in classes:
        out[c] = class_ap([d for d in dets if d.label == c], [g for g in gts if g.label == c],
                          delta, siou_mode)
    return out


def video_map(dets: Sequence[ActionTube], gts: Sequence[GtTube], delta: float,
              siou_mode: str = "intersection") -> float:
    """Mean of the per-class APs over classes present in the ground truth."""
    aps = per_class_ap(dets, gts, delta, siou_mode)
    return float(np.mean(list(aps.values())))


def avg_map(dets: Sequence[ActionTube], gts: Sequence[GtTube], sweep: Optional[Sequence[float]] = None,
            siou_mode: str = "intersection") -> float:
    sweep = default_sweep() if sweep is None else sweep
    return float(np.mean([video_map(dets, gts, d, siou_mode) for d in sweep]))


def completion_map(completed: Sequence[ActionTube], gts: Sequence[GtTube], delta: float,
                   siou_mode: str = "intersection") -> float:
    """video-mAP of tubes completed to the end of the video, against full ground truth."""
    return video_map(completed, gts, delta, siou_mode)


def future_segments(tubes, boundaries: Mapping[str, int], video_lengths: Mapping[str, int]):
    """Parts of ``tubes`` after each video's observation boundary.

    Videos observed to their last frame have no future and are dropped.
    """
    out = []
    for tb in tubes:
        t_now = boundaries.get(tb.video)
        if t_now is None or t_now >= video_lengths[tb.video] - 1:
            continue
        seg = tb.segment(t_now + 1, tb.end)
        if seg is not None:
            out.append(seg)
    return out


def prediction_map(futures: Sequence[ActionTube], gts: Sequence[GtTube], boundaries: Mapping[str, int],
                   video_lengths: Mapping[str, int], delta: float, siou_mode: str = "intersection") -> float:
    """video-mAP of predicted future segments against ground-truth future segments."""
    gt_future = future_segments(gts, boundaries, video_lengths)
    if not gt_future:
        raise ValueError("no ground-truth future segments (all videos fully observed?)")
    det_future = future_segments(futures, boundaries, video_lengths)
    return video_map(det_future, gt_future, delta, siou_mode)


def accuracy(predicted: Mapping[str, Optional[int]], truth: Mapping[str, int]) -> float:
    """Fraction of videos whose predicted label is correct; None counts as wrong."""
    if not truth:
        raise ValueError("no videos to score")
    return sum(1 for v, c in truth.items() if predicted.get(v) == c) / len(truth)


def early_accuracy(predicted: Mapping[str, Sequence[Optional[int]]], truth: Mapping[str, int],
                   fractions: Sequence[float]) -> np.ndarray:
    """Accuracy at every observation fraction.

    ``predicted[video][k]`` is the label guessed after ``fractions[k]`` of the
    video (None when no guess was possible).
    """
    out = np.zeros(len(fractions))
    for k in range(len(fractions)):
        out[k] = accuracy({v: (p[k] if k < len(p) else None) for v, p in predicted.items()}, truth)
    return out


def video_labels(gts: Sequence[GtTube]) -> Dict[str, int]:
    """Video label = class of the first ground-truth tube of the video."""
    out = {}
    for g in gts:
        out.setdefault(g.video, g.label)
    return out
