"""Completing partially observed tubes into the unobserved future.

Future boxes come from the prediction sets attached to a tube's micro-tubes.
When several predictions cover a frame the newest anchor wins (then the
shorter lookahead). Frames between prediction instants are interpolated and
frames past the last prediction are extrapolated at the average velocity of
the most recent boxes. Every emitted box is clipped to the image.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import clamp_array, interpolate_pair
from .tubes import ActionTube, PredictionSet


@dataclass
class HorizonParams:
    video_length: int
    width: float
    height: float
    velocity_window: int = 5

    def __post_init__(self):
        if self.velocity_window < 1:
            raise ValueError("velocity_window must be >= 1")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")


def _fix(boxes: np.ndarray, params: HorizonParams) -> np.ndarray:
    boxes = clamp_array(boxes, params.width, params.height)
    for lo, hi in ((0, 2), (1, 3)):
        bad = boxes[:, lo] > boxes[:, hi]
        mid = (boxes[bad, lo] + boxes[bad, hi]) / 2.0
        boxes[bad, lo] = mid
        boxes[bad, hi] = mid
    return boxes


def extrapolate(tail: np.ndarray, horizon: int, params: HorizonParams) -> np.ndarray:
    """Continue ``tail`` for ``horizon`` frames at its recent mean velocity.

    With fewer than two tail boxes the last box is held.
    """
    tail = np.asarray(tail, dtype=np.float64).reshape(-1, 4)
    if len(tail) == 0:
        raise ValueError("cannot extrapolate an empty tail")
    if horizon <= 0:
        return np.zeros((0, 4))
    steps = np.arange(1, horizon + 1, dtype=np.float64)[:, None]
    if len(tail) < 2:
        velocity = np.zeros(4)
    else:
        w = min(params.velocity_window, len(tail) - 1)
        velocity = (tail[-1] - tail[-1 - w]) / w
    return _fix(tail[-1][None, :] + steps * velocity[None, :], params)


def select_predictions(predictions: Sequence[PredictionSet], first: int, last: int,
                       t_now: Optional[int] = None) -> dict:
    """Frame -> box chosen among the predictions covering ``[first, last]``."""
    chosen = {}
    for ps in predictions:
        if t_now is not None and ps.t > t_now:
            continue
        for k, (f, box) in enumerate(zip(ps.future_frames().tolist(), ps.future), start=1):
            if first <= f <= last:
                key = (-ps.t, k, tuple(box.tolist()))
                if f not in chosen or key < chosen[f][0]:
                    chosen[f] = (key, box)
    return {f: box for f, (_, box) in chosen.items()}


def assemble_future(tube: ActionTube, predictions: Sequence[PredictionSet], t_now: int,
                    params: HorizonParams) -> np.ndarray:
    """Boxes for frames ``tube.end + 1 .. video_length - 1``.

    Only predictions anchored at or before ``t_now`` are used.
    """
    if tube is None or len(tube) == 0:
        raise ValueError("cannot complete an empty tube")
    if t_now < tube.start:
        raise ValueError("t_now precedes the tube start")
    first, last = tube.end + 1, params.video_length - 1
    if first > last:
        return np.zeros((0, 4))
    chosen = select_predictions(predictions, first, last, t_now)
    seq = [tube.boxes[-1]]
    frame = tube.end
    for f in sorted(chosen):
        box = _fix(chosen[f][None, :], params)[0]
        seq.extend(interpolate_pair(seq[-1], box, f - frame)[1:])
        frame = f
    known = np.concatenate([tube.boxes[:-1], np.array(seq)])
    rest = last - frame
    future = np.array(seq[1:]).reshape(-1, 4)
    if rest > 0:
        future = np.concatenate([future, extrapolate(known, rest, params)])
    return _fix(future, params)


def complete_tube(detected: ActionTube, future: np.ndarray, future_start: Optional[int] = None) -> ActionTube:
    """Append future boxes to a detected tube; they must start right after it."""
    future = np.asarray(future, dtype=np.float64).reshape(-1, 4)
    if future_start is None:
        future_start = detected.end + 1
    if len(future) and future_start != detected.end + 1:
        raise ValueError(f"future starts at {future_start}, tube ends at {detected.end}")
    if len(future) == 0:
        return detected
    boxes = np.concatenate([detected.boxes, future])
    scores = np.concatenate([detected.scores, np.full(len(future), detected.score)])
    return ActionTube(detected.label, detected.start, boxes, scores, detected.score, detected.video)


def complete_linker_tubes(linker, t_now: int, params: HorizonParams,
                          hold: bool = False) -> List[Tuple[ActionTube, Optional[ActionTube]]]:
    """Complete every tube of an online linker observed up to ``t_now``.

    Returns ``(completed tube, future segment or None)`` pairs. Only the
    labelled run that reaches a live tube's last frame is extended; retired
    tubes are returned as detected. ``hold`` ignores the predictions and
    repeats the last detected box instead (a no-motion baseline).
    """
    out = []
    for c in range(1, linker.num_classes + 1):
        for live in linker.finished[c]:
            for tb in live.to_tubes(linker.video):
                out.append((tb, None))
        for live in linker.active[c]:
            if len(live) < 2:
                continue
            for tb in live.to_tubes(linker.video):
                if tb.end != live.last_frame:
                    out.append((tb, None))
                    continue
                if hold:
                    horizon = max(0, params.video_length - 1 - tb.end)
                    future = np.repeat(tb.boxes[-1:], horizon, axis=0)
                else:
                    future = assemble_future(tb, live.predictions, t_now, params)
                done = complete_tube(tb, future)
                seg = done.segment(tb.end + 1, done.end) if len(future) else None
                out.append((done, seg))
    return out
