"""Late fusion of appearance-stream and flow-stream detections."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .geometry import Box, ScoredBox, iou_matrix

STRATEGIES = ("boost", "union", "mean")


@dataclass
class FusionParams:
    strategy: str = "boost"
    tau: float = 0.3
    l1_normalize: bool = False
    mean_match_iou: float = 0.5

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown fusion strategy {self.strategy!r}")
        for name in ("tau", "mean_match_iou"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def _boxes(dets: Sequence[ScoredBox]) -> np.ndarray:
    return np.array([d.box for d in dets], dtype=np.float64).reshape(-1, 4)


def boost_fuse(appearance: Sequence[ScoredBox], flow: Sequence[ScoredBox],
               params: FusionParams = FusionParams()) -> List[ScoredBox]:
    """Boost appearance scores by the best-overlapping flow detection.

    For each appearance box the flow box of maximum IoU is found; when that
    IoU reaches ``tau`` every action-class score is raised by
    ``flow_score * IoU``. Flow boxes overlapping no appearance box by at
    least ``tau`` are appended unchanged.
    """
    if not flow:
        return [ScoredBox(d.box, d.scores.copy()) for d in appearance]
    out = []
    ov = iou_matrix(_boxes(appearance), _boxes(flow)) if appearance else np.zeros((0, len(flow)))
    for i, det in enumerate(appearance):
        scores = det.scores.copy()
        j = int(np.argmax(ov[i]))
        overlap = ov[i, j]
        if overlap >= params.tau:
            scores[1:] += flow[j].scores[1:] * overlap
        if params.l1_normalize:
            total = np.abs(scores).sum()
            if total > 0:
                scores = scores / total
        out.append(ScoredBox(det.box, scores))
    if len(appearance):
        unmatched = ov.max(axis=0) < params.tau
    else:
        unmatched = np.ones(len(flow), dtype=bool)
    out.extend(ScoredBox(flow[j].box, flow[j].scores.copy()) for j in np.flatnonzero(unmatched))
    return out


def union_fuse(appearance: Sequence[ScoredBox], flow: Sequence[ScoredBox]) -> List[ScoredBox]:
    return [ScoredBox(d.box, d.scores.copy()) for d in list(appearance) + list(flow)]


def greedy_pairs(overlaps: np.ndarray, threshold: float) -> List[Tuple[int, int]]:
    """One-to-one matching by descending overlap; ties go to lower indices."""
    if overlaps.size == 0:
        return []
    rows, cols = np.nonzero(overlaps >= threshold)
    vals = overlaps[rows, cols]
    # lexsort: last key is primary
    order = np.lexsort((cols, rows, -vals))
    used_r, used_c, pairs = set(), set(), []
    for k in order:
        r, c = int(rows[k]), int(cols[k])
        if r in used_r or c in used_c:
            continue
        used_r.add(r)
        used_c.add(c)
        pairs.append((r, c))
    return pairs


def mean_fuse(appearance: Sequence[ScoredBox], flow: Sequence[ScoredBox],
              params: FusionParams = FusionParams(strategy="mean")) -> List[ScoredBox]:
    """Average matched appearance/flow pairs; keep unmatched boxes as they are."""
    ov = iou_matrix(_boxes(appearance), _boxes(flow))
    pairs = dict(greedy_pairs(ov, params.mean_match_iou))
    out = []
    for i, det in enumerate(appearance):
        if i in pairs:
            f = flow[pairs[i]]
            box = Box(*((np.asarray(det.box) + np.asarray(f.box)) / 2.0).tolist())
            out.append(ScoredBox(box, (det.scores + f.scores) / 2.0))
        else:
            out.append(ScoredBox(det.box, det.scores.copy()))
    matched_flow = set(pairs.values())
    out.extend(ScoredBox(f.box, f.scores.copy()) for j, f in enumerate(flow) if j not in matched_flow)
    return out


def fuse(appearance: Sequence[ScoredBox], flow: Sequence[ScoredBox], params: FusionParams) -> List[ScoredBox]:
    if params.strategy == "boost":
        return boost_fuse(appearance, flow, params)
    if params.strategy == "union":
        return union_fuse(appearance, flow)
    return mean_fuse(appearance, flow, params)
