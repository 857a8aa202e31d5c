"""Offline tube construction: video-long action paths, then temporal trimming.

The first pass links one detection per frame into class-specific paths that
maximise summed class scores plus ``lambda_o`` times the IoU of consecutive
boxes, extracting paths one after another. The second pass cuts each path
into action tubes with a binary Potts labelling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .geometry import DetectionFrame, iou_matrix, nms_order
from .labelling import potts_labels, runs
from .tubes import ActionTube


@dataclass
class PathParams:
    lambda_o: float = 1.0
    max_paths: int = 20
    min_mean_score: float = 0.01
    nms_threshold: float = 0.45
    top_n: int = 10

    def __post_init__(self):
        if self.lambda_o < 0:
            raise ValueError("lambda_o must be >= 0")
        if self.max_paths < 1 or self.top_n < 1:
            raise ValueError("max_paths and top_n must be >= 1")


@dataclass
class TrimParams:
    lambda_l: float = 1.0
    alpha: Union[float, Dict[int, float]] = 3.0
    top_k: int = 10

    def __post_init__(self):
        values = self.alpha.values() if isinstance(self.alpha, dict) else [self.alpha]
        if any(a < 0 for a in values):
            raise ValueError("alpha must be >= 0")

    def alpha_for(self, label: int) -> float:
        if isinstance(self.alpha, dict):
            return float(self.alpha.get(label, self.alpha.get(0, 3.0)))
        return float(self.alpha)


@dataclass
class ActionPath:
    """Video-long box sequence; ``det_index`` is -1 on ghost frames."""

    label: int
    boxes: np.ndarray
    scores: np.ndarray
    det_index: np.ndarray
    energy: float

    def __len__(self) -> int:
        return len(self.boxes)

    @property
    def ghosts(self) -> int:
        return int(np.count_nonzero(self.det_index < 0))


def _best_path(frames, alive, lam):
    """Viterbi over the alive boxes; empty frames carry ghost copies."""
    T = len(frames)
    first = next(t for t in range(T) if alive[t].any())
    idx = np.flatnonzero(alive[first])
    boxes = frames[first][0][idx]
    value = frames[first][1][idx].astype(np.float64)
    states = [idx]
    pointers = [None]
    cur_boxes = boxes
    for t in range(first + 1, T):
        idx = np.flatnonzero(alive[t])
        if idx.size == 0:
            # ghost: every state repeats its own box, IoU 1 with itself
            states.append(None)
            pointers.append(np.arange(len(value)))
            value = value + lam
            continue
        nb = frames[t][0][idx]
        cand = value[:, None] + lam * iou_matrix(cur_boxes, nb)
        bp = np.argmax(cand, axis=0)
        value = cand[bp, np.arange(len(idx))] + frames[t][1][idx]
        states.append(idx)
        pointers.append(bp)
        cur_boxes = nb
    # back-track
    k = int(np.argmax(value))
    energy = float(value[k]) + lam * first
    chosen = np.full(T, -1, dtype=np.int64)
    for t in range(T - 1, first - 1, -1):
        if states[t - first] is not None:
            chosen[t] = states[t - first][k]
        bp = pointers[t - first]
        if bp is not None:
            k = int(bp[k])
    out_boxes = np.zeros((T, 4))
    out_scores = np.zeros(T)
    last = None
    for t in range(T):
        if chosen[t] >= 0:
            last = frames[t][0][chosen[t]]
            out_scores[t] = frames[t][1][chosen[t]]
        if last is not None:
            out_boxes[t] = last
    # leading ghosts copy the first real box
    out_boxes[:first] = out_boxes[first]
    return out_boxes, out_scores, chosen, energy


def build_paths(frames: Sequence[Tuple[np.ndarray, np.ndarray]], label: int = 1,
                params: PathParams = PathParams()) -> List[ActionPath]:
    """Extract detection-disjoint action paths for one class.

    ``frames[t]`` is ``(boxes (n_t, 4), scores (n_t,))`` holding the class
    scores of the candidate boxes at frame ``t``. Paths are extracted
    greedily (best path, remove its boxes, repeat) and returned in
    extraction order, so the first path is always the global maximiser.
    Energies decrease along the list unless removing boxes created ghost
    frames, whose free pairwise term can lift a later path above an
    earlier one.
    """
    T = len(frames)
    if T == 0:
        raise ValueError("cannot build paths over an empty video")
    frames = [(np.asarray(b, dtype=np.float64).reshape(-1, 4), np.asarray(s, dtype=np.float64).reshape(-1))
              for b, s in frames]
    alive = [np.ones(len(s), dtype=bool) for _, s in frames]
    paths = []
    while len(paths) < params.max_paths:
        empty = sum(1 for a in alive if not a.any())
        if empty * 2 > T or empty == T:
            break
        boxes, scores, chosen, energy = _best_path(frames, alive, params.lambda_o)
        if scores.mean() < params.min_mean_score:
            break
        paths.append(ActionPath(label, boxes, scores, chosen, energy))
        for t, k in enumerate(chosen):
            if k >= 0:
                alive[t][k] = False
    return paths


def path_energy(boxes: np.ndarray, scores: np.ndarray, lambda_o: float) -> float:
    boxes = np.asarray(boxes, dtype=np.float64)
    total = float(np.sum(scores))
    for t in range(1, len(boxes)):
        total += lambda_o * float(iou_matrix(boxes[t - 1], boxes[t])[0, 0])
    return total


def top_k_mean(scores: np.ndarray, k: int) -> float:
    scores = np.sort(np.asarray(scores, dtype=np.float64))[::-1]
    return float(scores[:max(1, min(k, len(scores)))].mean())


def viterbi_trim(path: ActionPath, params: TrimParams = TrimParams(), start: int = 0,
                 video: str = "") -> List[ActionTube]:
    """Cut a path into tubes: maximal runs labelled as the path's class.

    Each tube is scored with the mean of its top ``min(top_k, length)`` box
    scores.
    """
    labels = potts_labels(path.scores, params.alpha_for(path.label), params.lambda_l)
    tubes = []
    for a, b in runs(labels):
        sc = path.scores[a:b + 1]
        tubes.append(ActionTube(path.label, start + a, path.boxes[a:b + 1], sc,
                                top_k_mean(sc, params.top_k), video))
    return tubes


def temporal_detect(frame_scores: np.ndarray, labels: Sequence[int], lam: float = 1.0,
                    alpha: float = 3.0) -> List[Tuple[int, int, int, float]]:
    """Frame-level temporal detection for each candidate class.

    ``frame_scores[t, c]`` is the score of class ``c`` at frame ``t``.
    Returns ``(class, first, last, mean score)`` for every positive run.
    """
    frame_scores = np.asarray(frame_scores, dtype=np.float64)
    if frame_scores.ndim != 2 or len(frame_scores) == 0:
        raise ValueError("frame_scores must be a non-empty (T, classes) array")
    if not labels:
        raise ValueError("need at least one candidate class")
    out = []
    for c in labels:
        seq = frame_scores[:, c]
        for a, b in runs(potts_labels(seq, alpha, lam)):
            out.append((int(c), a, b, float(seq[a:b + 1].mean())))
    return out


def class_candidates(frames: Sequence[DetectionFrame], label: int, params: PathParams):
    """Per-frame NMS + top-n candidate boxes of one class."""
    out = []
    for fr in frames:
        sc = fr.scores[:, label] if len(fr) else np.zeros(0)
        keep = nms_order(fr.boxes, sc, params.nms_threshold)[:params.top_n]
        out.append((fr.boxes[keep], sc[keep]))
    return out


def build_offline_tubes(frames: Sequence[DetectionFrame], num_classes: int,
                        path_params: PathParams = PathParams(),
                        trim_params: TrimParams = TrimParams()) -> List[ActionTube]:
    """Both passes over one video, for every class ``1..num_classes``."""
    if not frames:
        return []
    video = frames[0].video
    start = frames[0].t
    tubes = []
    for c in range(1, num_classes + 1):
        cand = class_candidates(frames, c, path_params)
        if not any(len(s) for _, s in cand):
            continue
        for path in build_paths(cand, c, path_params):
            tubes.extend(viterbi_trim(path, trim_params, start, video))
    return tubes
