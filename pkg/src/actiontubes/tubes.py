"""Tube-level records shared by the builders, the predictor and the evaluator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np


def _as_boxes(boxes) -> np.ndarray:
    return np.asarray(boxes, dtype=np.float64).reshape(-1, 4)


@dataclass
class ActionTube:
    """Class-labelled, temporally contiguous box sequence.

    ``boxes[k]`` belongs to frame ``start + k``.
    """

    label: int
    start: int
    boxes: np.ndarray
    scores: np.ndarray = None
    score: float = 0.0
    video: str = ""

    def __post_init__(self):
        self.boxes = _as_boxes(self.boxes)
        if self.scores is None:
            self.scores = np.full(len(self.boxes), float(self.score))
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if len(self.boxes) == 0:
            raise ValueError("a tube needs at least one box")
        if len(self.scores) != len(self.boxes):
            raise ValueError("one score per box required")
        self.score = float(self.score)

    @property
    def end(self) -> int:
        return self.start + len(self.boxes) - 1

    def __len__(self) -> int:
        return len(self.boxes)

    def frames(self) -> np.ndarray:
        return np.arange(self.start, self.end + 1)

    def box_at(self, t: int) -> np.ndarray:
        return self.boxes[t - self.start]

    def segment(self, first: int, last: int) -> Optional["ActionTube"]:
        """Sub-tube restricted to frames ``[first, last]``; None if empty."""
        lo, hi = max(first, self.start), min(last, self.end)
        if lo > hi:
            return None
        sl = slice(lo - self.start, hi - self.start + 1)
        return ActionTube(self.label, lo, self.boxes[sl], self.scores[sl], self.score, self.video)


@dataclass
class GtTube:
    """Ground-truth action instance."""

    video: str
    label: int
    start: int
    boxes: np.ndarray

    def __post_init__(self):
        self.boxes = _as_boxes(self.boxes)
        if len(self.boxes) == 0:
            raise ValueError("ground-truth tube needs at least one box")

    @property
    def end(self) -> int:
        return self.start + len(self.boxes) - 1

    def __len__(self) -> int:
        return len(self.boxes)

    def segment(self, first: int, last: int) -> Optional["GtTube"]:
        lo, hi = max(first, self.start), min(last, self.end)
        if lo > hi:
            return None
        return GtTube(self.video, self.label, lo, self.boxes[lo - self.start:hi - self.start + 1])


@dataclass
class PredictionSet:
    """Past and future boxes regressed alongside a micro-tube anchored at ``t``.

    Future box ``k`` (1-based) belongs to frame ``t + delta_f * k``; the
    optional past box to frame ``t - delta_p``.
    """

    t: int
    delta_f: int
    future: np.ndarray
    delta_p: int = 1
    past: Optional[np.ndarray] = None

    def __post_init__(self):
        self.future = _as_boxes(self.future)
        if self.delta_f < 1:
            raise ValueError("delta_f must be >= 1")
        if self.past is not None:
            self.past = np.asarray(self.past, dtype=np.float64).reshape(4)

    @property
    def n_future(self) -> int:
        return len(self.future)

    def future_frames(self) -> np.ndarray:
        return self.t + self.delta_f * np.arange(1, self.n_future + 1)


@dataclass
class MicroTube:
    """Two boxes on frames ``t`` and ``t + delta`` predicted jointly."""

    b1: np.ndarray
    b2: np.ndarray
    scores: np.ndarray
    prediction: Optional[PredictionSet] = None

    def __post_init__(self):
        self.b1 = np.asarray(self.b1, dtype=np.float64).reshape(4)
        self.b2 = np.asarray(self.b2, dtype=np.float64).reshape(4)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)


@dataclass
class MicroTubeSet:
    """All micro-tubes predicted for the frame pair ``(t, t + delta)``."""

    video: str
    t: int
    delta: int
    tubes: List[MicroTube] = field(default_factory=list)
