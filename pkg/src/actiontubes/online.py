"""Incremental action-tube construction.

Tubes of every class grow one frame (or one micro-tube) at a time: live
tubes are visited by decreasing mean score and each claims the best-scoring
unclaimed box overlapping its last box by more than ``lam``. Unmatched
tubes survive ``k_terminate`` misses; leftover boxes start new tubes. Each
tube is relabelled online with a fixed-lag Potts labelling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .geometry import DetectionFrame, interpolate_pair, iou_matrix, nms_order, paired_iou
from .labelling import OnlineLabeller, runs
from .tubes import ActionTube, MicroTube, PredictionSet


@dataclass
class OnlineParams:
    lam: float = 0.1
    n: int = 10
    k_terminate: int = 5
    m: int = 5
    nms_threshold: float = 0.45
    alpha: Union[float, Dict[int, float]] = 3.0
    lambda_l: float = 1.0
    score_threshold: float = 0.0
    max_tubes_factor: int = 4

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must be in [0, 1]")
        if not 0.0 <= self.nms_threshold <= 1.0:
            raise ValueError("nms_threshold must be in [0, 1]")
        if self.n < 1 or self.k_terminate < 1 or self.m < 1:
            raise ValueError("n, k_terminate and m must be >= 1")

    def alpha_for(self, label: int) -> float:
        if isinstance(self.alpha, dict):
            return float(self.alpha.get(label, self.alpha.get(0, 3.0)))
        return float(self.alpha)


class LiveTube:
    """A tube under construction.

    ``boxes`` holds one box per frame from ``start`` to ``last_frame``;
    frames skipped by misses are filled by interpolation and flagged as
    non-members. Scores and labels exist for member boxes only.
    """

    __slots__ = ("label", "uid", "start", "boxes", "member", "scores", "score_sum",
                 "misses", "labeller", "predictions")

    def __init__(self, label: int, uid: int, t: int, box, score: float, labeller: OnlineLabeller):
        self.label = label
        self.uid = uid
        self.start = t
        self.boxes = [np.asarray(box, dtype=np.float64)]
        self.member = [True]
        self.scores = [float(score)]
        self.score_sum = float(score)
        self.misses = 0
        self.labeller = labeller
        labeller.push(score)
        self.predictions: List[PredictionSet] = []

    @property
    def last_frame(self) -> int:
        return self.start + len(self.boxes) - 1

    @property
    def last_box(self) -> np.ndarray:
        return self.boxes[-1]

    @property
    def mean_score(self) -> float:
        return self.score_sum / len(self.scores)

    def __len__(self) -> int:
        return len(self.boxes)

    def add(self, t: int, box, score: float) -> None:
        box = np.asarray(box, dtype=np.float64)
        gap = t - self.last_frame
        if gap < 1:
            raise ValueError("tube frames must increase")
        if gap > 1:
            fill = interpolate_pair(self.boxes[-1], box, gap)[1:-1]
            self.boxes.extend(fill)
            self.member.extend([False] * (gap - 1))
        self.boxes.append(box)
        self.member.append(True)
        self.scores.append(float(score))
        self.score_sum += float(score)
        self.misses = 0
        self.labeller.push(score)

    def frame_labels(self) -> np.ndarray:
        """Per-frame action flags; gap frames are positive only between positives."""
        member_labels = self.labeller.labels()
        out = np.zeros(len(self.boxes), dtype=bool)
        member_idx = np.flatnonzero(self.member)
        out[member_idx] = member_labels
        for k in np.flatnonzero(~np.asarray(self.member)):
            before = member_idx[member_idx < k][-1]
            after = member_idx[member_idx > k][0]
            out[k] = out[before] and out[after]
        return out

    def frame_scores(self) -> np.ndarray:
        out = np.empty(len(self.boxes))
        member_idx = np.flatnonzero(self.member)
        out[member_idx] = self.scores
        nxt = None
        for k in range(len(self.boxes) - 1, -1, -1):
            if self.member[k]:
                nxt = out[k]
            else:
                out[k] = nxt
        return out

    def to_tubes(self, video: str = "") -> List[ActionTube]:
        """Maximal positively-labelled runs, scored by their mean member score."""
        labels = self.frame_labels()
        scores = self.frame_scores()
        member = np.asarray(self.member)
        boxes = np.asarray(self.boxes)
        out = []
        for a, b in runs(labels):
            sl = slice(a, b + 1)
            out.append(ActionTube(self.label, self.start + a, boxes[sl], scores[sl],
                                  float(scores[sl][member[sl]].mean()), video))
        return out

    def snapshot(self):
        return (self.label, self.uid, self.start, tuple(map(tuple, np.round(self.boxes, 9).tolist())),
                tuple(self.member), tuple(self.scores), self.misses,
                tuple(self.labeller.labels().tolist()))


class OnlineLinker:
    """Per-video online tube builder covering every class ``1..num_classes``.

    Use :meth:`step` for frame-level detections or :meth:`link_microtubes`
    for micro-tube streams; do not mix both on one instance.
    """

    def __init__(self, num_classes: int, params: OnlineParams = OnlineParams(), video: str = ""):
        self.num_classes = num_classes
        self.params = params
        self.video = video
        self.t: Optional[int] = None
        self.delta: Optional[int] = None
        self.active: Dict[int, List[LiveTube]] = {c: [] for c in range(1, num_classes + 1)}
        self.finished: Dict[int, List[LiveTube]] = {c: [] for c in range(1, num_classes + 1)}
        self._uid = 0

    # -- bookkeeping -------------------------------------------------------

    def _new_tube(self, c, t, box, score) -> LiveTube:
        labeller = OnlineLabeller(self.params.alpha_for(c), self.params.lambda_l, self.params.m)
        tube = LiveTube(c, self._uid, t, box, score, labeller)
        self._uid += 1
        return tube

    def _retire(self, tube: LiveTube) -> None:
        if len(tube) >= 2:
            self.finished[tube.label].append(tube)

    def _candidates(self, boxes, scores, c, overlaps=None):
        sc = scores[:, c]
        idx = np.flatnonzero(sc > self.params.score_threshold)
        if idx.size == 0:
            return idx
        sub = overlaps[np.ix_(idx, idx)] if overlaps is not None else None
        keep = nms_order(boxes[idx], sc[idx], self.params.nms_threshold, sub, limit=self.params.n)
        return idx[keep]

    def _associate(self, c: int, tubes: List[LiveTube], cand_boxes, cand_scores):
        """Greedy claim loop; returns {tube position: candidate position} and leftovers."""
        order = sorted(range(len(tubes)), key=lambda i: -tubes[i].mean_score)
        claimed = [False] * len(cand_scores)
        matches = {}
        if tubes and len(cand_scores):
            last = np.array([tb.last_box for tb in tubes])
            ov = iou_matrix(last, cand_boxes).tolist()
            lam = self.params.lam
            for i in order:
                row = ov[i]
                best = -1
                for j, o in enumerate(row):
                    if o > lam and not claimed[j]:
                        if (best < 0 or cand_scores[j] > cand_scores[best]
                                or (cand_scores[j] == cand_scores[best] and o > row[best])):
                            best = j
                if best >= 0:
                    claimed[best] = True
                    matches[i] = best
        leftovers = [j for j in range(len(cand_scores)) if not claimed[j]]
        return matches, leftovers

    def _expire(self, c: int, tubes: List[LiveTube], matched) -> List[LiveTube]:
        keep = []
        for i, tube in enumerate(tubes):
            if i not in matched:
                tube.misses += 1
                if tube.misses > self.params.k_terminate:
                    self._retire(tube)
                    continue
            keep.append(tube)
        return keep

    def _cap(self, tubes: List[LiveTube]) -> List[LiveTube]:
        limit = self.params.max_tubes_factor * self.params.n
        if len(tubes) <= limit:
            return tubes
        ranked = sorted(tubes, key=lambda tb: (-tb.mean_score, tb.uid))
        for tube in ranked[limit:]:
            self._retire(tube)
        survivors = set(id(tb) for tb in ranked[:limit])
        return [tb for tb in tubes if id(tb) in survivors]

    # -- frame mode --------------------------------------------------------

    def step(self, frame: DetectionFrame) -> None:
        """Advance by one frame of (fused) detections."""
        t = frame.t
        if self.t is not None and t != self.t + 1:
            raise ValueError(f"expected frame {self.t + 1}, got {t}")
        if self.delta is not None:
            raise ValueError("linker is in micro-tube mode")
        self.t = t
        boxes, scores = frame.boxes, frame.scores
        for c in range(1, self.num_classes + 1):
            tubes = self.active[c]
            if len(boxes) and c < scores.shape[1]:
                idx = self._candidates(boxes, scores, c)
            else:
                idx = np.zeros(0, dtype=np.int64)
            cb = boxes[idx]
            cs = scores[idx, c].tolist() if idx.size else []
            matches, leftovers = self._associate(c, tubes, cb, cs)
            for i, j in matches.items():
                tubes[i].add(t, cb[j], cs[j])
            tubes = self._expire(c, tubes, matches)
            for j in leftovers:
                tubes.append(self._new_tube(c, t, cb[j], cs[j]))
            self.active[c] = self._cap(tubes)

    # -- micro-tube mode ---------------------------------------------------

    def link_microtubes(self, t: int, microtubes: Sequence[MicroTube], delta: int) -> None:
        """Link micro-tubes spanning ``(t, t + delta)`` onto the live tubes.

        Association happens on the shared frame ``t``: a tube's current last
        box against each incoming first box. The incoming first box replaces
        the tube's box on that frame and the frames up to ``t + delta`` are
        filled by interpolation.
        """
        if delta < 1:
            raise ValueError("delta must be >= 1")
        if self.delta is None:
            if self.t is not None:
                raise ValueError("linker is in frame mode")
        elif delta != self.delta or t != self.t + delta:
            raise ValueError(f"stride mismatch: expected t={self.t + self.delta} delta={self.delta}, "
                             f"got t={t} delta={delta}")
        self.t, self.delta = t, delta
        if microtubes:
            b1 = np.array([m.b1 for m in microtubes])
            b2 = np.array([m.b2 for m in microtubes])
            scores = np.array([m.scores for m in microtubes])
            overlaps = (iou_matrix(b1, b1) + iou_matrix(b2, b2)) / 2.0
        for c in range(1, self.num_classes + 1):
            tubes = self.active[c]
            if microtubes and c < scores.shape[1]:
                idx = self._candidates(b1, scores, c, overlaps)
            else:
                idx = np.zeros(0, dtype=np.int64)
            cs = scores[idx, c].tolist() if idx.size else []
            cb1 = b1[idx] if idx.size else np.zeros((0, 4))
            matches, leftovers = self._associate(c, tubes, cb1, cs)
            for i, j in matches.items():
                self._extend(tubes[i], t, delta, microtubes[idx[j]], cs[j])
            tubes = self._expire(c, tubes, matches)
            for j in leftovers:
                mt = microtubes[idx[j]]
                tube = self._new_tube(c, t, mt.b1, cs[j])
                self._fill(tube, t, delta, mt, cs[j])
                tubes.append(tube)
            self.active[c] = self._cap(tubes)

    def _extend(self, tube: LiveTube, t: int, delta: int, mt: MicroTube, score: float) -> None:
        if tube.last_frame == t:
            tube.boxes[-1] = mt.b1.copy()
        else:
            tube.add(t, mt.b1, score)
        self._fill(tube, t, delta, mt, score)

    @staticmethod
    def _fill(tube: LiveTube, t: int, delta: int, mt: MicroTube, score: float) -> None:
        inner = interpolate_pair(mt.b1, mt.b2, delta)
        for k in range(1, delta + 1):
            tube.add(t + k, inner[k], score)
        if mt.prediction is not None:
            tube.predictions.append(mt.prediction)

    # -- queries -----------------------------------------------------------

    def all_tubes(self) -> List[LiveTube]:
        out = []
        for c in range(1, self.num_classes + 1):
            out.extend(self.finished[c])
            out.extend(self.active[c])
        return out

    def predict_label(self) -> Optional[int]:
        """Class of the highest mean-score tube so far; None before any tube."""
        best_c, best = None, -np.inf
        for c in range(1, self.num_classes + 1):
            for tube in self.finished[c] + self.active[c]:
                if tube.mean_score > best:
                    best, best_c = tube.mean_score, c
        return best_c

    def tubes(self) -> List[ActionTube]:
        """Current labelled tubes (active tubes included, nothing retired)."""
        out = []
        for tube in self.all_tubes():
            if len(tube) >= 2:
                out.extend(tube.to_tubes(self.video))
        return out

    def finalize(self) -> List[ActionTube]:
        """Close every live tube and return all labelled tubes."""
        for c in range(1, self.num_classes + 1):
            for tube in self.active[c]:
                self._retire(tube)
            self.active[c] = []
        out = []
        for c in range(1, self.num_classes + 1):
            for tube in self.finished[c]:
                out.extend(tube.to_tubes(self.video))
        return out

    def snapshot(self):
        return (self.t, self.delta,
                tuple((c, tuple(tb.snapshot() for tb in self.active[c]),
                       tuple(tb.snapshot() for tb in self.finished[c]))
                      for c in range(1, self.num_classes + 1)))


def run_online(frames: Sequence[DetectionFrame], num_classes: int,
               params: OnlineParams = OnlineParams()) -> List[ActionTube]:
    """Process a whole video frame by frame; missing frames count as empty."""
    if not frames:
        return []
    video = frames[0].video
    linker = OnlineLinker(num_classes, params, video)
    expected = frames[0].t
    for fr in frames:
        while expected < fr.t:
            linker.step(DetectionFrame(video, expected, fr.width, fr.height,
                                       np.zeros((0, 4)), np.zeros((0, num_classes + 1))))
            expected += 1
        linker.step(fr)
        expected = fr.t + 1
    return linker.finalize()


def microtube_overlap(a: MicroTube, b: MicroTube) -> float:
    """Mean of the two per-frame IoUs of two micro-tubes."""
    return float(paired_iou(np.stack([a.b1, a.b2]), np.stack([b.b1, b.b2])).mean())
