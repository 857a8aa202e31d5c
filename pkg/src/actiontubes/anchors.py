"""Anchor pyramids and cell-to-cell transition matrices for micro-tube proposals.

A six-level SSD-style pyramid of square grids carries ``r_p`` anchors per
cell. Ground-truth micro-tubes (box pairs ``delta`` frames apart) are
matched to their best anchor pair; counting the matched cell pairs and
normalising the rows gives one transition matrix per level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .geometry import iou_matrix

GRID_SIDES = (38, 19, 10, 5, 3, 1)
ANCHORS_PER_CELL = (4, 6, 6, 6, 4, 4)
AUGMENT_MODES = ("diagonal", "neighbors", "relative_offsets")


@dataclass
class AnchorGrid:
    """Anchors of one pyramid level; ``boxes[cell * r + slot]``."""

    level: int
    side: int
    per_cell: int
    boxes: np.ndarray

    @property
    def cells(self) -> int:
        return self.side * self.side

    @property
    def cell_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.cells), self.per_cell)

    def __len__(self) -> int:
        return len(self.boxes)


def level_scale(p: int, levels: int = 6) -> float:
    return 0.1 + 0.8 * (p - 1) / (levels - 1)


def aspect_ratios(per_cell: int) -> List[float]:
    if per_cell == 4:
        return [1.0, 2.0, 0.5]
    if per_cell == 6:
        return [1.0, 2.0, 0.5, 3.0, 1.0 / 3.0]
    raise ValueError(f"unsupported anchors-per-cell {per_cell}")


def generate_grids(image_w: float, image_h: float, sides: Sequence[int] = GRID_SIDES,
                   per_cell: Sequence[int] = ANCHORS_PER_CELL) -> List[AnchorGrid]:
    """Cell-centred anchors for every level; cells are numbered row-major.

    At level ``p`` the base size is ``s_p * min(W, H)`` with
    ``s_p = 0.1 + 0.8 (p - 1) / 5``; each cell gets the aspect ratios
    ``1, 2, 1/2`` (plus ``3, 1/3`` when ``r = 6``) and one extra square of
    size ``sqrt(s_p s_{p+1})``.
    """
    if image_w <= 0 or image_h <= 0:
        raise ValueError("image dimensions must be positive")
    base = min(image_w, image_h)
    levels = len(sides)
    grids = []
    for p, (side, r) in enumerate(zip(sides, per_cell), start=1):
        s = level_scale(p, levels)
        s_next = level_scale(p + 1, levels)
        shapes = [(s * base * math.sqrt(ar), s * base / math.sqrt(ar)) for ar in aspect_ratios(r)]
        extra = math.sqrt(s * s_next) * base
        shapes.append((extra, extra))
        cy, cx = np.meshgrid((np.arange(side) + 0.5) * image_h / side,
                             (np.arange(side) + 0.5) * image_w / side, indexing="ij")
        cx, cy = cx.reshape(-1), cy.reshape(-1)
        wh = np.array(shapes)
        boxes = np.empty((side * side, r, 4))
        boxes[:, :, 0] = cx[:, None] - wh[None, :, 0] / 2
        boxes[:, :, 1] = cy[:, None] - wh[None, :, 1] / 2
        boxes[:, :, 2] = cx[:, None] + wh[None, :, 0] / 2
        boxes[:, :, 3] = cy[:, None] + wh[None, :, 1] / 2
        grids.append(AnchorGrid(p, side, r, boxes.reshape(-1, 4)))
    return grids


@dataclass
class GtMicroTube:
    label: int
    t: int
    delta: int
    b1: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError("delta must be >= 1")
        self.b1 = np.asarray(self.b1, dtype=np.float64).reshape(4)
        self.b2 = np.asarray(self.b2, dtype=np.float64).reshape(4)


@dataclass
class Match:
    """Best anchor pair: cells ``i`` and ``j`` and flat anchor indices within the level."""

    level: int
    i: int
    j: int
    anchor1: int
    anchor2: int
    overlap: float


def match_gt(gt: GtMicroTube, grids: Sequence[AnchorGrid]) -> Match:
    """Best anchor micro-tube for a ground-truth micro-tube.

    Both anchors come from the same level (their aspect-ratio slots may
    differ); the pair maximises the mean of the two per-frame IoUs, which
    separates into one argmax per frame. Ties go to the lower level, then
    the lower anchor index.
    """
    best = None
    for g in grids:
        u = iou_matrix(gt.b1, g.boxes)[0]
        v = iou_matrix(gt.b2, g.boxes)[0]
        a1, a2 = int(np.argmax(u)), int(np.argmax(v))
        score = (u[a1] + v[a2]) / 2.0
        if best is None or score > best.overlap:
            best = Match(g.level, a1 // g.per_cell, a2 // g.per_cell, a1, a2, float(score))
    return best


@dataclass
class TransitionMatrix:
    """Row-stochastic (or all-zero-row) cell transition matrix of one level."""

    level: int
    side: int
    probs: np.ndarray
    delta: int = 1
    dropped: Optional[np.ndarray] = None

    @property
    def cells(self) -> int:
        return self.side * self.side

    def nonzero(self) -> List[Tuple[int, int, float]]:
        rows, cols = np.nonzero(self.probs)
        return [(int(i), int(j), float(self.probs[i, j])) for i, j in zip(rows, cols)]


def _normalize_rows(counts: np.ndarray) -> np.ndarray:
    sums = counts.sum(axis=1, keepdims=True)
    out = np.zeros_like(counts, dtype=np.float64)
    np.divide(counts, sums, out=out, where=sums > 0)
    return out


def count_transitions(gts: Iterable[GtMicroTube], grids: Sequence[AnchorGrid]) -> Dict[int, np.ndarray]:
    counts = {g.level: np.zeros((g.cells, g.cells)) for g in grids}
    for gt in gts:
        m = match_gt(gt, grids)
        counts[m.level][m.i, m.j] += 1
    return counts


def estimate_transitions(gts: Sequence[GtMicroTube], grids: Sequence[AnchorGrid]) -> List[TransitionMatrix]:
    """Count best-matching cell pairs per level and row-normalise."""
    gts = list(gts)
    if not gts:
        raise ValueError("need at least one ground-truth micro-tube")
    deltas = {gt.delta for gt in gts}
    delta = deltas.pop() if len(deltas) == 1 else 0
    return transitions_from_counts(count_transitions(gts, grids), grids, delta)


def transitions_from_counts(counts: Dict[int, np.ndarray], grids: Sequence[AnchorGrid],
                            delta: int = 1) -> List[TransitionMatrix]:
    """Row-normalised matrices from per-level cell-pair counts."""
    return [TransitionMatrix(g.level, g.side, _normalize_rows(counts[g.level]), delta) for g in grids]


def threshold_transitions(A: TransitionMatrix, theta: float = 0.10) -> Set[Tuple[int, int]]:
    """Cell pairs whose transition probability reaches ``theta``."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must be in [0, 1]")
    rows, cols = np.nonzero(A.probs >= theta)
    return set(zip(rows.tolist(), cols.tolist()))


def proposal_count(matrices: Sequence[TransitionMatrix], theta: float = 0.10) -> int:
    """Total number of sampled cell pairs over all levels."""
    return sum(len(threshold_transitions(A, theta)) for A in matrices)


def identity_transitions(grids: Sequence[AnchorGrid]) -> List[TransitionMatrix]:
    """Cuboid-only matrices: every cell stays where it is."""
    return [TransitionMatrix(g.level, g.side, np.eye(g.cells)) for g in grids]


def _neighbour_pairs(side: int, dr: int, dc: int):
    r, c = np.divmod(np.arange(side * side), side)
    r2, c2 = r + dr, c + dc
    ok = (r2 >= 0) & (r2 < side) & (c2 >= 0) & (c2 < side)
    src = np.flatnonzero(ok)
    return src, r2[ok] * side + c2[ok]


def augment(A: TransitionMatrix, mode: str, theta: float = 0.10) -> TransitionMatrix:
    """Widen a transition matrix into a test-time sampling mask.

    ``diagonal`` sets every self-transition to 1; ``neighbors`` sets the
    transitions to each cell's 3x3 neighbourhood to 1; ``relative_offsets``
    collects the grid displacements of all entries ``>= theta`` and sets
    that displacement to 1 for every cell where it stays inside the grid.
    Values are not renormalised.
    """
    if mode not in AUGMENT_MODES:
        raise ValueError(f"unknown augmentation mode {mode!r}")
    out = A.probs.copy()
    side = A.side
    if mode == "diagonal":
        np.fill_diagonal(out, 1.0)
    elif mode == "neighbors":
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                src, dst = _neighbour_pairs(side, dr, dc)
                out[src, dst] = 1.0
    else:
        rows, cols = np.nonzero(A.probs >= theta)
        offsets = sorted(set(zip((cols // side - rows // side).tolist(),
                                 (cols % side - rows % side).tolist())))
        for dr, dc in offsets:
            src, dst = _neighbour_pairs(side, dr, dc)
            out[src, dst] = 1.0
    return TransitionMatrix(A.level, A.side, out, A.delta)


def compose(A: TransitionMatrix, steps: int) -> TransitionMatrix:
    """``steps``-fold Markov composition (matrix power).

    Mass that flows into all-zero rows is lost; the per-row loss is kept in
    ``dropped``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    result = np.linalg.matrix_power(A.probs, steps)
    start_mass = A.probs.sum(axis=1)
    dropped = np.clip(start_mass - result.sum(axis=1), 0.0, None)
    return TransitionMatrix(A.level, A.side, result, A.delta * steps, dropped)
