"""Line-delimited JSON record formats.

Every reader validates each record strictly and raises :class:`RecordError`
carrying the 1-based line number. Writers emit compact JSON with Python's
shortest round-trip float repr, so outputs are byte-stable and lossless.
"""

from __future__ import annotations

import json
import math
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .anchors import GRID_SIDES, TransitionMatrix
from .geometry import DetectionFrame, clamp_array
from .tubes import ActionTube, GtTube, MicroTube, MicroTubeSet, PredictionSet


class RecordError(ValueError):
    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


# -- field validation -------------------------------------------------------

def _keys(rec, required: Sequence[str], optional: Sequence[str] = ()) -> None:
    if not isinstance(rec, dict):
        raise ValueError("record must be a JSON object")
    missing = [k for k in required if k not in rec]
    if missing:
        raise ValueError(f"missing keys {missing}")
    extra = sorted(set(rec) - set(required) - set(optional))
    if extra:
        raise ValueError(f"unknown keys {extra}")


def _int(v, name: str, lo: Optional[int] = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"{name} must be an integer")
    if lo is not None and v < lo:
        raise ValueError(f"{name} must be >= {lo}")
    return v


def _float(v, name: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValueError(f"{name} must be a finite number")
    return float(v)


def _str(v, name: str) -> str:
    if not isinstance(v, str) or not v:
        raise ValueError(f"{name} must be a non-empty string")
    return v


def _box(v, name: str = "box") -> List[float]:
    if not isinstance(v, list) or len(v) != 4:
        raise ValueError(f"{name} must be a list of 4 numbers")
    b = [_float(x, name) for x in v]
    if b[2] < b[0] or b[3] < b[1]:
        raise ValueError(f"{name} has max < min: {b}")
    return b


def _boxes(v, name: str) -> np.ndarray:
    if not isinstance(v, list):
        raise ValueError(f"{name} must be a list of boxes")
    return np.array([_box(b, name) for b in v], dtype=np.float64).reshape(-1, 4)


def _scores(v, width: Optional[int]) -> List[float]:
    if not isinstance(v, list) or len(v) < 2:
        raise ValueError("scores must list background plus at least one class")
    s = [_float(x, "scores") for x in v]
    if min(s) < 0:
        raise ValueError("scores must be >= 0")
    if width is not None and len(s) != width:
        raise ValueError(f"expected {width} scores, got {len(s)}")
    return s


def _label(v, num_classes: Optional[int]) -> int:
    c = _int(v, "class", 1)
    if num_classes is not None and c > num_classes:
        raise ValueError(f"class {c} outside 1..{num_classes}")
    return c


# -- generic line plumbing ------------------------------------------------------

def _records(path: str) -> Iterator[Tuple[int, object]]:
    with open(path, "r", encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield n, json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(path, n, f"invalid JSON: {exc.msg}") from None


def _parse_all(path: str, parse: Callable) -> Iterator:
    for n, rec in _records(path):
        try:
            yield n, parse(rec)
        except RecordError:
            raise
        except (ValueError, TypeError) as exc:
            raise RecordError(path, n, str(exc)) from None


def dumps(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"), allow_nan=False)


def _write(path_or_fh, records: Iterable[dict]) -> None:
    if hasattr(path_or_fh, "write"):
        for rec in records:
            path_or_fh.write(dumps(rec) + "\n")
        return
    with open(path_or_fh, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")


def _box_list(boxes) -> List[List[float]]:
    return [[float(x) for x in b] for b in np.asarray(boxes, dtype=np.float64).reshape(-1, 4)]


def _ordered_videos(path: str, items: Iterator[Tuple[int, Tuple[str, int, object]]]):
    """Group ``(video, t, item)`` records into contiguous per-video runs.

    A video must occupy one contiguous block with strictly increasing t.
    """
    seen = set()
    current, batch, last_t = None, [], None
    for n, (video, t, item) in items:
        if video != current:
            if video in seen:
                raise RecordError(path, n, f"video {video!r} is not contiguous in the file")
            if current is not None:
                yield current, batch
            seen.add(video)
            current, batch, last_t = video, [], None
        if last_t is not None and t <= last_t:
            raise RecordError(path, n, f"frame index {t} does not increase (previous {last_t})")
        last_t = t
        batch.append(item)
    if current is not None:
        yield current, batch


# -- detections -----------------------------------------------------------------

def _parse_detection(width: List[Optional[int]], num_classes: Optional[int]):
    def parse(rec) -> Tuple[str, int, DetectionFrame]:
        _keys(rec, ("video", "t", "w", "h", "dets"))
        video = _str(rec["video"], "video")
        t = _int(rec["t"], "t", 0)
        w, h = _int(rec["w"], "w", 1), _int(rec["h"], "h", 1)
        if not isinstance(rec["dets"], list):
            raise ValueError("dets must be a list")
        boxes, scores = [], []
        for d in rec["dets"]:
            _keys(d, ("box", "scores"))
            boxes.append(_box(d["box"]))
            s = _scores(d["scores"], width[0])
            width[0] = len(s)
            scores.append(s)
        if num_classes is not None and width[0] is not None and width[0] != num_classes + 1:
            raise ValueError(f"expected {num_classes + 1} scores per detection, got {width[0]}")
        ncols = width[0] if width[0] is not None else (num_classes or 0) + 1
        boxes = clamp_array(np.array(boxes, dtype=np.float64).reshape(-1, 4), w, h)
        frame = DetectionFrame(video, t, w, h, boxes, np.array(scores, dtype=np.float64).reshape(-1, ncols))
        return video, t, frame
    return parse


def iter_detections(path: str, num_classes: Optional[int] = None) -> Iterator[DetectionFrame]:
    """Frame records one at a time, in file order (bounded memory)."""
    width = [None if num_classes is None else num_classes + 1]
    for _, (_, _, frame) in _parse_all(path, _parse_detection(width, num_classes)):
        yield frame


def read_detections(path: str, num_classes: Optional[int] = None) -> Iterator[Tuple[str, List[DetectionFrame]]]:
    """``(video, frames)`` per video, frames ordered by t and clamped to the image."""
    width = [None if num_classes is None else num_classes + 1]
    yield from _ordered_videos(path, _parse_all(path, _parse_detection(width, num_classes)))


def detection_record(frame: DetectionFrame) -> dict:
    return {"video": frame.video, "t": int(frame.t), "w": int(frame.width), "h": int(frame.height),
            "dets": [{"box": [float(x) for x in b], "scores": [float(x) for x in s]}
                     for b, s in zip(frame.boxes, frame.scores)]}


def write_detections(path, frames: Iterable[DetectionFrame]) -> None:
    _write(path, (detection_record(f) for f in frames))


# -- micro-tubes ----------------------------------------------------------------

def _parse_prediction(rec, t: int) -> Optional[PredictionSet]:
    if rec is None:
        return None
    _keys(rec, ("past", "df", "future"), ("dp",))
    past = None if rec["past"] is None else _box(rec["past"], "past")
    df = _int(rec["df"], "df", 1)
    dp = _int(rec.get("dp", 1), "dp", 1)
    return PredictionSet(t, df, _boxes(rec["future"], "future"), dp, past)


def _parse_microtubes(width: List[Optional[int]], num_classes: Optional[int]):
    def parse(rec) -> Tuple[str, int, MicroTubeSet]:
        _keys(rec, ("video", "t", "delta", "mts"))
        video = _str(rec["video"], "video")
        t = _int(rec["t"], "t", 0)
        delta = _int(rec["delta"], "delta", 1)
        if not isinstance(rec["mts"], list):
            raise ValueError("mts must be a list")
        mts = []
        for m in rec["mts"]:
            _keys(m, ("b1", "b2", "scores"), ("pred",))
            s = _scores(m["scores"], width[0])
            width[0] = len(s)
            if num_classes is not None and len(s) != num_classes + 1:
                raise ValueError(f"expected {num_classes + 1} scores per micro-tube, got {len(s)}")
            mts.append(MicroTube(_box(m["b1"], "b1"), _box(m["b2"], "b2"), s,
                                 _parse_prediction(m.get("pred"), t)))
        return video, t, MicroTubeSet(video, t, delta, mts)
    return parse


def read_microtubes(path: str, num_classes: Optional[int] = None) -> Iterator[Tuple[str, List[MicroTubeSet]]]:
    width = [None if num_classes is None else num_classes + 1]
    yield from _ordered_videos(path, _parse_all(path, _parse_microtubes(width, num_classes)))


def microtube_record(ms: MicroTubeSet) -> dict:
    mts = []
    for m in ms.tubes:
        rec = {"b1": [float(x) for x in m.b1], "b2": [float(x) for x in m.b2],
               "scores": [float(x) for x in m.scores]}
        p = m.prediction
        if p is not None:
            rec["pred"] = {"past": None if p.past is None else [float(x) for x in p.past],
                           "df": int(p.delta_f), "future": _box_list(p.future)}
            if p.delta_p != 1:
                rec["pred"]["dp"] = int(p.delta_p)
        mts.append(rec)
    return {"video": ms.video, "t": int(ms.t), "delta": int(ms.delta), "mts": mts}


def write_microtubes(path, sets: Iterable[MicroTubeSet]) -> None:
    _write(path, (microtube_record(s) for s in sets))


# -- tubes and ground truth ---------------------------------------------------

def _parse_tube(num_classes: Optional[int], with_score: bool):
    def parse(rec):
        keys = ("video", "class", "score", "start", "end", "boxes") if with_score else \
            ("video", "class", "start", "end", "boxes")
        _keys(rec, keys)
        video = _str(rec["video"], "video")
        label = _label(rec["class"], num_classes)
        start = _int(rec["start"], "start", 0)
        end = _int(rec["end"], "end", start)
        boxes = _boxes(rec["boxes"], "boxes")
        if len(boxes) != end - start + 1:
            raise ValueError(f"{len(boxes)} boxes for frames {start}..{end}")
        if with_score:
            return ActionTube(label, start, boxes, score=_float(rec["score"], "score"), video=video)
        return GtTube(video, label, start, boxes)
    return parse


def read_tubes(path: str, num_classes: Optional[int] = None) -> List[ActionTube]:
    return [tb for _, tb in _parse_all(path, _parse_tube(num_classes, True))]


def read_gt(path: str, num_classes: Optional[int] = None) -> List[GtTube]:
    return [g for _, g in _parse_all(path, _parse_tube(num_classes, False))]


def tube_record(tb: ActionTube) -> dict:
    return {"video": tb.video, "class": int(tb.label), "score": float(tb.score),
            "start": int(tb.start), "end": int(tb.end), "boxes": _box_list(tb.boxes)}


def gt_record(g: GtTube) -> dict:
    return {"video": g.video, "class": int(g.label), "start": int(g.start), "end": int(g.end),
            "boxes": _box_list(g.boxes)}


def write_tubes(path, tubes: Iterable[ActionTube]) -> None:
    _write(path, (tube_record(t) for t in tubes))


def write_gt(path, gts: Iterable[GtTube]) -> None:
    _write(path, (gt_record(g) for g in gts))


# -- transitions ----------------------------------------------------------------

def write_transitions(path, matrices: Iterable[TransitionMatrix]) -> None:
    """Sparse triplets; only nonzero entries are written."""
    def records():
        for A in matrices:
            for i, j, p in A.nonzero():
                yield {"level": int(A.level), "i": i, "j": j, "p": p}
    _write(path, records())


def read_transitions(path: str, sides: Sequence[int] = GRID_SIDES) -> List[TransitionMatrix]:
    """One matrix per pyramid level (levels without entries are all-zero)."""
    mats = {p: np.zeros((s * s, s * s)) for p, s in enumerate(sides, start=1)}

    def parse(rec):
        _keys(rec, ("level", "i", "j", "p"))
        level = _int(rec["level"], "level", 1)
        if level not in mats:
            raise ValueError(f"level {level} outside 1..{len(sides)}")
        cells = sides[level - 1] ** 2
        i, j = _int(rec["i"], "i", 0), _int(rec["j"], "j", 0)
        if i >= cells or j >= cells:
            raise ValueError(f"cell index outside 0..{cells - 1}")
        p = _float(rec["p"], "p")
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        return level, i, j, p

    for n, (level, i, j, p) in _parse_all(path, parse):
        if mats[level][i, j] != 0.0:
            raise RecordError(path, n, f"duplicate entry ({level}, {i}, {j})")
        mats[level][i, j] = p
    return [TransitionMatrix(p, s, mats[p]) for p, s in enumerate(sides, start=1)]


# -- video metadata and early predictions -------------------------------------

def read_videos(path: str) -> Dict[str, Tuple[int, int, int]]:
    """video -> (frames, width, height)."""
    def parse(rec):
        _keys(rec, ("video", "frames", "w", "h"))
        return (_str(rec["video"], "video"), _int(rec["frames"], "frames", 1),
                _int(rec["w"], "w", 1), _int(rec["h"], "h", 1))
    out = {}
    for n, (v, T, w, h) in _parse_all(path, parse):
        if v in out:
            raise RecordError(path, n, f"duplicate video {v!r}")
        out[v] = (T, w, h)
    return out


def write_videos(path, videos: Iterable[Tuple[str, int, int, int]]) -> None:
    _write(path, ({"video": v, "frames": int(T), "w": int(w), "h": int(h)} for v, T, w, h in videos))


def write_early(path, rows: Iterable[Tuple[str, float, Optional[int]]]) -> None:
    _write(path, ({"video": v, "fraction": float(f), "label": c} for v, f, c in rows))


def read_early(path: str) -> List[Tuple[str, float, Optional[int]]]:
    def parse(rec):
        _keys(rec, ("video", "fraction", "label"))
        f = _float(rec["fraction"], "fraction")
        if not 0.0 < f <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")
        label = None if rec["label"] is None else _int(rec["label"], "label", 1)
        return _str(rec["video"], "video"), f, label
    return [r for _, r in _parse_all(path, parse)]


def write_csv(path, rows: Iterable[Tuple]) -> None:
    """CSV rows ``(fraction_or_threshold, metric, value)`` with a header."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("fraction,metric,value\n")
        for x, metric, value in rows:
            fh.write(f"{x!r},{metric},{float(value)!r}\n")
