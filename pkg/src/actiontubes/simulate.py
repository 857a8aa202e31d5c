"""Synthetic scenarios: ground-truth tubes plus noisy detection streams.

Randomness comes from numpy's PCG64. A scenario seed is split with
``SeedSequence`` into one child stream per video, separately for scene
generation and for each rendering, so every video is reproducible on its
own and the number of videos or threads never shifts another video's draws.
Noise draws are made unconditionally, so changing a noise level rescales
the same underlying samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .geometry import DetectionFrame, iou_matrix
from .tubes import GtTube, MicroTube, MicroTubeSet, PredictionSet

MOTIONS = ("static", "constant_velocity", "random_walk")
RENDER_MODES = ("frames", "microtubes", "predictions")

_SCENE_STREAM = 0
_RENDER_STREAM = 1


@dataclass
class ScenarioConfig:
    seed: int = 0
    videos: int = 10
    frames: int = 40
    width: int = 320
    height: int = 240
    num_classes: int = 3
    instances: Tuple[int, int] = (1, 3)
    motion: str = "static"
    velocity: Tuple[float, float] = (2.0, 0.0)
    walk_sigma: float = 1.0
    box_size: Tuple[float, float] = (30.0, 60.0)
    duration: Tuple[float, float] = (0.5, 1.0)
    align: int = 1
    max_instance_iou: float = 0.0

    def __post_init__(self):
        self.instances = tuple(self.instances)
        self.velocity = tuple(self.velocity)
        self.box_size = tuple(self.box_size)
        self.duration = tuple(self.duration)
        if min(self.videos, self.frames, self.num_classes, self.instances[0], self.align) < 1:
            raise ValueError("counts must be >= 1")
        if self.instances[0] > self.instances[1]:
            raise ValueError("instances must be (min, max)")
        if self.motion not in MOTIONS:
            raise ValueError(f"unknown motion model {self.motion!r}")
        if self.walk_sigma < 0:
            raise ValueError("walk_sigma must be >= 0")
        if not 0 < self.duration[0] <= self.duration[1] <= 1:
            raise ValueError("duration fractions must satisfy 0 < lo <= hi <= 1")
        if self.box_size[0] <= 0 or self.box_size[0] > self.box_size[1]:
            raise ValueError("box_size must be (min, max) with min > 0")
        if self.box_size[1] > min(self.width, self.height):
            raise ValueError("box size does not fit in the image")


@dataclass
class NoiseModel:
    box_sigma: float = 0.0
    score_sigma: float = 0.0
    p_miss: float = 0.0
    fp_rate: float = 0.0
    fp_score: Tuple[float, float] = (0.05, 0.3)

    def __post_init__(self):
        self.fp_score = tuple(self.fp_score)
        if self.box_sigma < 0 or self.score_sigma < 0 or self.fp_rate < 0:
            raise ValueError("noise levels must be >= 0")
        if not 0.0 <= self.p_miss <= 1.0:
            raise ValueError("p_miss must be in [0, 1]")
        lo, hi = self.fp_score
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("fp_score bounds must lie in [0, 1]")


@dataclass
class Instance:
    label: int
    start: int
    end: int
    trajectory: np.ndarray  # one box per video frame, defined on the whole video


@dataclass
class VideoInfo:
    video: str
    frames: int
    width: int
    height: int
    label: int
    instances: List[Instance] = field(default_factory=list)

    def gt_tubes(self) -> List[GtTube]:
        return [GtTube(self.video, ins.label, ins.start, ins.trajectory[ins.start:ins.end + 1])
                for ins in self.instances]


def video_id(k: int) -> str:
    return f"v{k:04d}"


def _streams(seed: int, purpose: int, n: int) -> List[np.random.Generator]:
    root = np.random.SeedSequence([seed, purpose])
    return [np.random.Generator(np.random.PCG64(s)) for s in root.spawn(n)]


def _trajectory(rng, cfg: ScenarioConfig) -> np.ndarray:
    T, W, H = cfg.frames, cfg.width, cfg.height
    w, h = rng.uniform(*cfg.box_size, size=2)
    x = rng.uniform(0, W - w)
    y = rng.uniform(0, H - h)
    steps = rng.normal(0.0, 1.0, size=(T, 2))
    pos = np.empty((T, 2))
    pos[0] = (x, y)
    for t in range(1, T):
        if cfg.motion == "static":
            step = (0.0, 0.0)
        elif cfg.motion == "constant_velocity":
            step = cfg.velocity
        else:
            step = steps[t] * cfg.walk_sigma
        pos[t, 0] = min(max(pos[t - 1, 0] + step[0], 0.0), W - w)
        pos[t, 1] = min(max(pos[t - 1, 1] + step[1], 0.0), H - h)
    return np.column_stack([pos[:, 0], pos[:, 1], pos[:, 0] + w, pos[:, 1] + h])


def _extent(rng, cfg: ScenarioConfig, first: bool) -> Tuple[int, int]:
    T, a = cfg.frames, cfg.align
    slots = (T - 1) // a
    lo = max(1, int(np.ceil(cfg.duration[0] * slots)))
    hi = max(lo, int(np.floor(cfg.duration[1] * slots)))
    span = int(rng.integers(lo, hi + 1)) if slots > 0 else 0
    start_slot = 0 if first else int(rng.integers(0, slots - span + 1)) if slots > 0 else 0
    start = start_slot * a
    return start, min(T - 1, start + span * a)


def _video(rng, cfg: ScenarioConfig, k: int) -> VideoInfo:
    label = int(rng.integers(1, cfg.num_classes + 1))
    want = int(rng.integers(cfg.instances[0], cfg.instances[1] + 1))
    instances: List[Instance] = []
    for n in range(want):
        for _ in range(200):
            start, end = _extent(rng, cfg, first=(n == 0))
            traj = _trajectory(rng, cfg)
            if all(paired_max_iou(traj, other.trajectory) <= cfg.max_instance_iou for other in instances):
                instances.append(Instance(label, start, end, traj))
                break
        else:
            if len(instances) < cfg.instances[0]:
                raise ValueError(f"could not place {cfg.instances[0]} separated instances in video {k}")
            break
    return VideoInfo(video_id(k), cfg.frames, cfg.width, cfg.height, label, instances)


def paired_max_iou(a: np.ndarray, b: np.ndarray) -> float:
    return float(max(iou_matrix(x, y)[0, 0] for x, y in zip(a, b)))


def generate_scenario(cfg: ScenarioConfig) -> List[VideoInfo]:
    """Videos with one action class each and one or more co-occurring instances.

    The first instance of every video starts at frame 0; instance extents
    are multiples of ``align`` frames.
    """
    rngs = _streams(cfg.seed, _SCENE_STREAM, cfg.videos)
    return [_video(rng, cfg, k) for k, rng in enumerate(rngs)]


def all_gt_tubes(videos: List[VideoInfo]) -> List[GtTube]:
    return [g for v in videos for g in v.gt_tubes()]


# -- rendering ---------------------------------------------------------------

def _score_vector(label: int, score: float, num_classes: int) -> np.ndarray:
    vec = np.zeros(num_classes + 1)
    vec[label] = score
    vec[0] = 1.0 - score
    return vec


def _true_score(rng, noise: NoiseModel) -> float:
    return float(np.clip(1.0 - abs(rng.normal() * noise.score_sigma), 0.05, 1.0))


def _jitter(rng, box: np.ndarray, noise: NoiseModel, W: int, H: int) -> np.ndarray:
    out = box + rng.normal(size=4) * noise.box_sigma
    out[0::2] = np.clip(out[0::2], 0, W)
    out[1::2] = np.clip(out[1::2], 0, H)
    out[2] = max(out[2], out[0])
    out[3] = max(out[3], out[1])
    return out


def _false_positives(rng, video: VideoInfo, cfg_box: Tuple[float, float], noise: NoiseModel,
                     num_classes: int):
    count = int(rng.poisson(noise.fp_rate))
    out = []
    for _ in range(count):
        w, h = rng.uniform(*cfg_box, size=2)
        x = rng.uniform(0, video.width - w)
        y = rng.uniform(0, video.height - h)
        label = int(rng.integers(1, num_classes + 1))
        score = float(rng.uniform(*noise.fp_score))
        shift = rng.normal(size=4) * 2.0
        out.append((np.array([x, y, x + w, y + h]), shift, _score_vector(label, score, num_classes)))
    return out


def render_frames(video: VideoInfo, noise: NoiseModel, num_classes: int, rng,
                  box_size=(30.0, 60.0)) -> List[DetectionFrame]:
    frames = []
    for t in range(video.frames):
        boxes, scores = [], []
        for ins in video.instances:
            u = rng.uniform()
            box = _jitter(rng, ins.trajectory[t], noise, video.width, video.height)
            s = _true_score(rng, noise)
            if ins.start <= t <= ins.end and u >= noise.p_miss:
                boxes.append(box)
                scores.append(_score_vector(ins.label, s, num_classes))
        for box, _, vec in _false_positives(rng, video, box_size, noise, num_classes):
            boxes.append(box)
            scores.append(vec)
        frames.append(DetectionFrame(video.video, t, video.width, video.height,
                                     np.array(boxes).reshape(-1, 4),
                                     np.array(scores).reshape(-1, num_classes + 1)))
    return frames


def render_microtubes(video: VideoInfo, noise: NoiseModel, num_classes: int, rng, delta: int,
                      predict: Optional[Tuple[int, int, int]] = None,
                      box_size=(30.0, 60.0)) -> List[MicroTubeSet]:
    """Micro-tubes for the frame pairs ``(0, d), (d, 2d), ...``.

    ``predict = (delta_p, delta_f, n)`` attaches past/future boxes taken
    from the instance trajectory (held at the last frame past the video end).
    """
    if delta < 1:
        raise ValueError("delta must be >= 1")
    T = video.frames
    sets = []
    for t in range(0, T - delta, delta):
        mts = []
        for ins in video.instances:
            u = rng.uniform()
            b1 = _jitter(rng, ins.trajectory[t], noise, video.width, video.height)
            b2 = _jitter(rng, ins.trajectory[t + delta], noise, video.width, video.height)
            s = _true_score(rng, noise)
            pred = None
            if predict is not None:
                dp, df, n = predict
                future = np.array([_jitter(rng, ins.trajectory[min(t + df * k, T - 1)], noise,
                                           video.width, video.height) for k in range(1, n + 1)])
                past_box = _jitter(rng, ins.trajectory[max(t - dp, 0)], noise, video.width, video.height)
                pred = PredictionSet(t, df, future, dp, past_box if t - dp >= 0 else None)
            if ins.start <= t and t + delta <= ins.end and u >= noise.p_miss:
                mts.append(MicroTube(b1, b2, _score_vector(ins.label, s, num_classes), pred))
        for box, shift, vec in _false_positives(rng, video, box_size, noise, num_classes):
            b2 = np.clip(box + shift, 0, [video.width, video.height] * 2)
            b2[2], b2[3] = max(b2[2], b2[0]), max(b2[3], b2[1])
            pred = None
            if predict is not None:
                dp, df, n = predict
                pred = PredictionSet(t, df, np.repeat(b2[None, :], n, axis=0), dp, None)
            mts.append(MicroTube(box, b2, vec, pred))
        sets.append(MicroTubeSet(video.video, t, delta, mts))
    return sets


def render(videos: List[VideoInfo], noise: NoiseModel, cfg: ScenarioConfig, mode: str = "frames",
           delta: int = 1, predict: Optional[Tuple[int, int, int]] = None, seed: Optional[int] = None,
           stream: int = _RENDER_STREAM):
    """Detection streams for every video, in video order.

    Returns a list (one entry per video) of frame lists or micro-tube-set
    lists depending on ``mode``. Distinct ``stream`` values give independent
    renderings of the same scene (e.g. an appearance and a flow stream).
    """
    if mode not in RENDER_MODES:
        raise ValueError(f"unknown render mode {mode!r}")
    if mode == "predictions" and predict is None:
        raise ValueError("prediction mode needs (delta_p, delta_f, n)")
    rngs = _streams(cfg.seed if seed is None else seed, stream, len(videos))
    out = []
    for video, rng in zip(videos, rngs):
        if mode == "frames":
            out.append(render_frames(video, noise, cfg.num_classes, rng, cfg.box_size))
        else:
            out.append(render_microtubes(video, noise, cfg.num_classes, rng, delta,
                                         predict if mode == "predictions" else None, cfg.box_size))
    return out
