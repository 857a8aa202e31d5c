"""Binary Potts labelling of score sequences, batch and fixed-lag online.

Each position carries a class score ``s``; label 1 (action) earns ``s`` and
label 0 (background) earns ``1 - s``. Every label change costs
``lam * alpha``. Ties are resolved towards background, both when choosing
a predecessor and when choosing the final label.
"""

from __future__ import annotations

from collections import deque
from typing import List, Sequence, Tuple

import numpy as np


def _advance(v0: float, v1: float, s: float, penalty: float) -> Tuple[float, float, int, int]:
    """One Viterbi step; returns new values and back-pointers for both labels."""
    switch_to_0 = v1 - penalty
    if switch_to_0 > v0:
        n0, bp0 = switch_to_0, 1
    else:
        n0, bp0 = v0, 0
    switch_to_1 = v0 - penalty
    if v1 > switch_to_1:
        n1, bp1 = v1, 1
    else:
        n1, bp1 = switch_to_1, 0
    return n0 + (1.0 - s), n1 + s, bp0, bp1


def potts_labels(scores: Sequence[float], alpha: float, lam: float = 1.0) -> np.ndarray:
    """Optimal binary labelling (bool array, True = action) of ``scores``."""
    scores = [float(s) for s in scores]
    if not scores:
        return np.zeros(0, dtype=bool)
    penalty = lam * alpha
    v0, v1 = 1.0 - scores[0], scores[0]
    pointers = []
    for s in scores[1:]:
        v0, v1, bp0, bp1 = _advance(v0, v1, s, penalty)
        pointers.append((bp0, bp1))
    label = 1 if v1 > v0 else 0
    out = np.zeros(len(scores), dtype=bool)
    out[-1] = bool(label)
    for k in range(len(pointers) - 1, -1, -1):
        label = pointers[k][label]
        out[k] = bool(label)
    return out


def labelling_energy(scores: Sequence[float], labels: Sequence[bool], alpha: float, lam: float = 1.0) -> float:
    s = np.asarray(scores, dtype=np.float64)
    lab = np.asarray(labels, dtype=bool)
    unary = np.where(lab, s, 1.0 - s).sum()
    switches = np.count_nonzero(lab[1:] != lab[:-1])
    return float(unary - lam * alpha * switches)


def runs(labels: Sequence[bool]) -> List[Tuple[int, int]]:
    """Inclusive ``(first, last)`` index pairs of the maximal True runs."""
    lab = np.asarray(labels, dtype=bool)
    if lab.size == 0:
        return []
    padded = np.concatenate(([False], lab, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


class OnlineLabeller:
    """Fixed-lag Viterbi over a growing score sequence.

    Labels older than ``lag`` positions are committed from the stored
    back-pointers and never revisited; the most recent ``lag`` labels are
    re-derived on demand. With ``lag`` at least the sequence length the
    result equals :func:`potts_labels`.
    """

    __slots__ = ("penalty", "lag", "v0", "v1", "length", "committed", "pointers")

    def __init__(self, alpha: float, lam: float = 1.0, lag: int = 5):
        if lag < 1:
            raise ValueError("lag must be >= 1")
        self.penalty = lam * alpha
        self.lag = lag
        self.v0 = self.v1 = 0.0
        self.length = 0
        self.committed: List[bool] = []
        # back-pointers for positions len(committed)+1 .. length-1
        self.pointers = deque()

    def push(self, score: float) -> None:
        s = float(score)
        if self.length == 0:
            self.v0, self.v1 = 1.0 - s, s
        else:
            self.v0, self.v1, bp0, bp1 = _advance(self.v0, self.v1, s, self.penalty)
            self.pointers.append((bp0, bp1))
        self.length += 1
        while self.length - len(self.committed) > self.lag:
            label = self._best()
            for bp in reversed(self.pointers):
                label = bp[label]
            self.committed.append(bool(label))
            self.pointers.popleft()

    def _best(self) -> int:
        return 1 if self.v1 > self.v0 else 0

    def labels(self) -> np.ndarray:
        if self.length == 0:
            return np.zeros(0, dtype=bool)
        tail = [False] * (self.length - len(self.committed))
        label = self._best()
        tail[-1] = bool(label)
        for k in range(len(self.pointers) - 1, -1, -1):
            label = self.pointers[k][label]
            tail[k] = bool(label)
        return np.array(self.committed + tail, dtype=bool)

    def copy(self) -> "OnlineLabeller":
        other = OnlineLabeller.__new__(OnlineLabeller)
        other.penalty, other.lag = self.penalty, self.lag
        other.v0, other.v1, other.length = self.v0, self.v1, self.length
        other.committed = list(self.committed)
        other.pointers = deque(self.pointers)
        return other
