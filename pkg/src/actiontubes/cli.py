"""Command-line entry point: ``actiontubes <command> [options]``.

Every command reads and writes the line-delimited JSON formats of
:mod:`actiontubes.io`. Per-video work can be spread over ``--threads``
workers; results are merged in input order, so output files are
byte-identical for any thread count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from . import io
from .anchors import (GtMicroTube, augment, compose, count_transitions, generate_grids,
                      transitions_from_counts)
from .config import RunConfig, load_config
from .evaluation import (early_accuracy, observed_until, per_class_ap, prediction_map, video_labels,
                         video_map)
from .fusion import fuse
from .future import HorizonParams, complete_linker_tubes
from .geometry import DetectionFrame
from .offline import build_offline_tubes
from .online import OnlineLinker
from .simulate import all_gt_tubes, generate_scenario, render


def _pmap(fn: Callable, items: Iterable, threads: int) -> List:
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _override(block, **values):
    changes = {k: v for k, v in values.items() if v is not None}
    return replace(block, **changes) if changes else block


def _summary(record: dict) -> None:
    print(json.dumps(record, separators=(",", ":"), sort_keys=True))


def _video_lengths(path: Optional[str]):
    return io.read_videos(path) if path else {}


# -- simulate -------------------------------------------------------------------

def cmd_simulate(args, cfg: RunConfig) -> int:
    sc = _override(cfg.scenario, seed=args.seed, videos=args.videos, frames=args.frames,
                   num_classes=args.classes, motion=args.motion, align=args.align,
                   width=args.width, height=args.height,
                   instances=tuple(args.instances) if args.instances else None,
                   velocity=tuple(args.velocity) if args.velocity else None,
                   walk_sigma=args.walk_sigma,
                   duration=tuple(args.duration) if args.duration else None)
    noise = _override(cfg.noise, box_sigma=args.box_sigma, score_sigma=args.score_sigma,
                      p_miss=args.p_miss, fp_rate=args.fp_rate)
    os.makedirs(args.out, exist_ok=True)
    videos = generate_scenario(sc)
    io.write_gt(os.path.join(args.out, "gt.jsonl"), all_gt_tubes(videos))
    io.write_videos(os.path.join(args.out, "videos.jsonl"),
                    [(v.video, v.frames, v.width, v.height) for v in videos])
    predict = (args.dp, args.df, args.n_future) if args.mode == "predictions" else None
    streams = render(videos, noise, sc, args.mode, args.delta, predict)
    if args.mode == "frames":
        io.write_detections(os.path.join(args.out, "detections.jsonl"), (f for v in streams for f in v))
        if args.flow:
            flow = render(videos, noise, sc, "frames", stream=2)
            io.write_detections(os.path.join(args.out, "flow.jsonl"), (f for v in flow for f in v))
    else:
        io.write_microtubes(os.path.join(args.out, "microtubes.jsonl"), (s for v in streams for s in v))
    return 0


# -- fusion ---------------------------------------------------------------------

def cmd_fuse(args, cfg: RunConfig) -> int:
    params = _override(cfg.fusion, strategy=args.strategy, tau=args.tau)
    flow = {v: {f.t: f for f in frames} for v, frames in io.read_detections(args.flow)}

    def fuse_video(item):
        video, frames = item
        other = flow.get(video, {})
        by_t = {f.t: f for f in frames}
        out = []
        for t in sorted(set(by_t) | set(other)):
            a, f = by_t.get(t), other.get(t)
            ref = a or f
            c = ref.num_classes
            a_dets = a.scored_boxes() if a else []
            f_dets = f.scored_boxes() if f else []
            fused = fuse(a_dets, f_dets, params)
            out.append(DetectionFrame.from_scored(video, t, ref.width, ref.height, fused, c))
        return out

    results = _pmap(fuse_video, io.read_detections(args.appearance), args.threads)
    io.write_detections(args.out, (f for frames in results for f in frames))
    return 0


# -- tube builders --------------------------------------------------------------

def cmd_build_offline(args, cfg: RunConfig) -> int:
    paths = _override(cfg.paths, lambda_o=args.lambda_o)
    trim = _override(cfg.trim, alpha=args.alpha)

    def build(item):
        _, frames = item
        return build_offline_tubes(frames, args.classes, paths, trim)

    results = _pmap(build, io.read_detections(args.detections, args.classes), args.threads)
    io.write_tubes(args.out, (tb for tubes in results for tb in tubes))
    return 0


def _online_params(args, cfg: RunConfig):
    return _override(cfg.online, lam=args.lam, n=args.top_n, k_terminate=args.k_terminate,
                     m=args.lag, alpha=args.alpha)


def _checkpoints(video: str, last_t: int, lengths, fractions) -> dict:
    """observed-until frame -> list of fraction positions."""
    T = lengths[video][0] if video in lengths else last_t + 1
    marks = defaultdict(list)
    for k, f in enumerate(fractions):
        marks[observed_until(f, T)].append(k)
    return marks


def cmd_build_online(args, cfg: RunConfig) -> int:
    params = _online_params(args, cfg)
    lengths = _video_lengths(args.videos)
    fractions = cfg.eval.fractions

    def build(item):
        video, frames = item
        linker = OnlineLinker(args.classes, params, video)
        marks = _checkpoints(video, frames[-1].t, lengths, fractions)
        guesses = [None] * len(fractions)
        expected = 0
        for fr in frames:
            while expected <= fr.t:
                step = fr if expected == fr.t else DetectionFrame(
                    video, expected, fr.width, fr.height, np.zeros((0, 4)), np.zeros((0, args.classes + 1)))
                linker.step(step)
                for k in marks.get(expected, ()):
                    guesses[k] = linker.predict_label()
                expected += 1
        for mark, ks in marks.items():
            if mark >= expected:
                for k in ks:
                    guesses[k] = linker.predict_label()
        return linker.finalize(), [(video, fractions[k], guesses[k]) for k in range(len(fractions))]

    results = _pmap(build, io.read_detections(args.detections, args.classes), args.threads)
    io.write_tubes(args.out, (tb for tubes, _ in results for tb in tubes))
    if args.early:
        io.write_early(args.early, (row for _, rows in results for row in rows))
    return 0


def _link_video(video: str, sets, classes: int, params, t_stop: Optional[int] = None):
    """Link a video's micro-tube sets; stop before any set ending after ``t_stop``."""
    linker = OnlineLinker(classes, params, video)
    for ms in sets:
        if t_stop is not None and ms.t + ms.delta > t_stop:
            break
        linker.link_microtubes(ms.t, ms.tubes, ms.delta)
    return linker


def cmd_link_micro(args, cfg: RunConfig) -> int:
    params = _online_params(args, cfg)
    lengths = _video_lengths(args.videos)
    fractions = cfg.eval.fractions

    def build(item):
        video, sets = item
        last = sets[-1].t + sets[-1].delta
        marks = _checkpoints(video, last, lengths, fractions)
        linker = OnlineLinker(args.classes, params, video)
        guesses = [None] * len(fractions)
        pending = sorted(marks)
        for ms in sets:
            while pending and ms.t + ms.delta > pending[0]:
                for k in marks[pending.pop(0)]:
                    guesses[k] = linker.predict_label()
            linker.link_microtubes(ms.t, ms.tubes, ms.delta)
        for b in pending:
            for k in marks[b]:
                guesses[k] = linker.predict_label()
        return linker.finalize(), [(video, fractions[k], guesses[k]) for k in range(len(fractions))]

    results = _pmap(build, io.read_microtubes(args.microtubes, args.classes), args.threads)
    io.write_tubes(args.out, (tb for tubes, _ in results for tb in tubes))
    if args.early:
        io.write_early(args.early, (row for _, rows in results for row in rows))
    return 0


def cmd_predict_future(args, cfg: RunConfig) -> int:
    params = _online_params(args, cfg)
    lengths = io.read_videos(args.videos)
    window = args.velocity_window or cfg.horizon.velocity_window

    def build(item):
        video, sets = item
        if video not in lengths:
            raise ValueError(f"video {video!r} missing from {args.videos}")
        T, W, H = lengths[video]
        t_now = observed_until(args.fraction, T)
        linker = _link_video(video, sets, args.classes, params, t_now)
        horizon = HorizonParams(T, W, H, window)
        return complete_linker_tubes(linker, t_now, horizon, hold=args.hold)

    results = _pmap(build, io.read_microtubes(args.microtubes, args.classes), args.threads)
    io.write_tubes(args.out, (tb for pairs in results for tb, _ in pairs))
    if args.future_out:
        io.write_tubes(args.future_out, (seg for pairs in results for _, seg in pairs if seg is not None))
    return 0


# -- transitions ------------------------------------------------------------------

def cmd_estimate_trans(args, cfg: RunConfig) -> int:
    lengths = io.read_videos(args.videos)
    gts = io.read_gt(args.gt)
    counts, grids = None, None
    by_size = defaultdict(list)
    for g in gts:
        if g.video not in lengths:
            raise ValueError(f"video {g.video!r} missing from {args.videos}")
        _, W, H = lengths[g.video]
        for k in range(len(g) - args.delta):
            by_size[(W, H)].append(GtMicroTube(g.label, g.start + k, args.delta,
                                               g.boxes[k], g.boxes[k + args.delta]))
    if not by_size:
        raise ValueError("no ground-truth micro-tubes at this delta")
    for (W, H) in sorted(by_size):
        grids = generate_grids(W, H)
        c = count_transitions(by_size[(W, H)], grids)
        counts = c if counts is None else {p: counts[p] + c[p] for p in counts}
    io.write_transitions(args.out, transitions_from_counts(counts, grids, args.delta))
    return 0


def cmd_compose_trans(args, cfg: RunConfig) -> int:
    theta = args.theta if args.theta is not None else cfg.transitions.theta
    mode = args.augment or cfg.transitions.augment
    mats = io.read_transitions(args.transitions)
    out = []
    for A in mats:
        B = compose(A, args.steps) if args.steps > 1 else A
        out.append(augment(B, mode, theta) if mode else B)
    io.write_transitions(args.out, out)
    return 0


# -- evaluation -------------------------------------------------------------------

def _boundaries(lengths, fraction: float):
    return {v: observed_until(fraction, T) for v, (T, _, _) in lengths.items()}


def cmd_eval(args, cfg: RunConfig) -> int:
    ev = _override(cfg.eval, delta=args.delta, siou_mode=args.siou_mode)
    gts = io.read_gt(args.gt, args.classes)
    rows = []
    if args.metric == "early":
        truth = video_labels(gts)
        guesses = defaultdict(dict)
        for video, f, label in io.read_early(args.early):
            guesses[video][round(f, 9)] = label
        fractions = ev.fractions
        predicted = {v: [guesses[v].get(round(f, 9)) for f in fractions] for v in truth}
        acc = early_accuracy(predicted, truth, fractions)
        rows = [(f, "accuracy", a) for f, a in zip(fractions, acc.tolist())]
        _summary({"metric": "early", "fractions": fractions, "accuracy": acc.tolist()})
    elif args.metric in ("map", "cmap"):
        dets = io.read_tubes(args.tubes, args.classes)
        aps = per_class_ap(dets, gts, ev.delta, ev.siou_mode)
        value = float(np.mean(list(aps.values())))
        rows = [(ev.delta, f"ap_class_{c}", ap) for c, ap in aps.items()] + [(ev.delta, args.metric, value)]
        _summary({"metric": args.metric, "delta": ev.delta, "value": value})
    elif args.metric == "avg-map":
        dets = io.read_tubes(args.tubes, args.classes)
        per = [(d, video_map(dets, gts, d, ev.siou_mode)) for d in ev.delta_sweep]
        value = float(np.mean([v for _, v in per]))
        rows = [(d, "map", v) for d, v in per] + [(0.0, "avg-map", value)]
        _summary({"metric": "avg-map", "value": value})
    else:
        if args.videos is None or args.fraction is None:
            raise ValueError("pmap needs --videos and --fraction")
        lengths = io.read_videos(args.videos)
        dets = io.read_tubes(args.tubes, args.classes)
        bounds = _boundaries(lengths, args.fraction)
        value = prediction_map(dets, gts, bounds, {v: T for v, (T, _, _) in lengths.items()},
                               ev.delta, ev.siou_mode)
        rows = [(args.fraction, "pmap", value)]
        _summary({"metric": "pmap", "delta": ev.delta, "fraction": args.fraction, "value": value})
    if args.csv:
        io.write_csv(args.csv, rows)
    return 0


# -- bench ------------------------------------------------------------------------

def bench_frames(num_classes: int, per_class: int, frames: int, seed: int,
                 width: int = 320, height: int = 240) -> List[DetectionFrame]:
    """Synthetic stream where every box scores only for its own class."""
    rng = np.random.Generator(np.random.PCG64(seed))
    n = num_classes * per_class
    size = rng.uniform(20, 50, size=(n, 2))
    pos = rng.uniform(0, 1, size=(n, 2)) * (np.array([width, height]) - size)
    labels = np.repeat(np.arange(1, num_classes + 1), per_class)
    out = []
    for t in range(frames):
        pos = np.clip(pos + rng.normal(0, 1.0, size=(n, 2)), 0, np.array([width, height]) - size)
        boxes = np.column_stack([pos, pos + size])
        scores = np.zeros((n, num_classes + 1))
        s = rng.uniform(0.05, 1.0, size=n)
        scores[np.arange(n), labels] = s
        scores[:, 0] = 1.0 - s
        out.append(DetectionFrame("bench", t, width, height, boxes, scores))
    return out


def run_bench(num_classes: int = 24, per_class: int = 10, frames: int = 300, seed: int = 0,
              params=None) -> float:
    """Amortised milliseconds per online-linker step."""
    stream = bench_frames(num_classes, per_class, frames, seed)
    linker = OnlineLinker(num_classes, params or RunConfig().online, "bench")
    tic = time.perf_counter()
    for fr in stream:
        linker.step(fr)
    return (time.perf_counter() - tic) * 1000.0 / frames


def cmd_bench(args, cfg: RunConfig) -> int:
    ms = run_bench(args.classes, args.per_class, args.frames, args.seed, cfg.online)
    _summary({"metric": "bench", "classes": args.classes, "per_class": args.per_class,
              "frames": args.frames, "ms_per_frame": round(ms, 4)})
    return 0


# -- parser -----------------------------------------------------------------------

def _online_flags(p) -> None:
    p.add_argument("--lam", type=float, help="association IoU gate")
    p.add_argument("--top-n", type=int, help="candidates per class and frame")
    p.add_argument("--k-terminate", type=int, help="misses tolerated before a tube ends")
    p.add_argument("--lag", type=int, help="online labelling lag m")
    p.add_argument("--alpha", type=float, help="label switch penalty")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="actiontubes", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON run configuration (default: $ACTIONTUBES_CONFIG)")
    parser.add_argument("--threads", type=int, default=1, help="per-video workers (output order is fixed)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scenario")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", choices=("frames", "microtubes", "predictions"), default="frames")
    p.add_argument("--delta", type=int, default=1)
    p.add_argument("--dp", type=int, default=1, help="past offset for prediction mode")
    p.add_argument("--df", type=int, default=1, help="future offset for prediction mode")
    p.add_argument("--n-future", type=int, default=10)
    p.add_argument("--flow", action="store_true", help="also write an independent flow stream")
    p.add_argument("--videos", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--instances", type=int, nargs=2)
    p.add_argument("--motion", choices=("static", "constant_velocity", "random_walk"))
    p.add_argument("--velocity", type=float, nargs=2)
    p.add_argument("--walk-sigma", type=float)
    p.add_argument("--duration", type=float, nargs=2)
    p.add_argument("--align", type=int)
    p.add_argument("--box-sigma", type=float)
    p.add_argument("--score-sigma", type=float)
    p.add_argument("--p-miss", type=float)
    p.add_argument("--fp-rate", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fuse", help="fuse appearance and flow detections")
    p.add_argument("--appearance", required=True)
    p.add_argument("--flow", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", choices=("boost", "union", "mean"))
    p.add_argument("--tau", type=float)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("build-offline", help="two-pass offline tube construction")
    p.add_argument("--detections", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda-o", type=float)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_build_offline)

    for name, func, src in (("build-online", cmd_build_online, "--detections"),
                            ("link-micro", cmd_link_micro, "--microtubes")):
        p = sub.add_parser(name, help="online tube construction")
        p.add_argument(src, dest=src[2:], required=True)
        p.add_argument("--classes", type=int, required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--videos", help="video metadata (lengths for the early checkpoints)")
        p.add_argument("--early", help="write early label guesses here")
        _online_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("predict-future", help="complete partially observed tubes")
    p.add_argument("--microtubes", required=True)
    p.add_argument("--videos", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--out", required=True, help="completed tubes")
    p.add_argument("--future-out", help="predicted future segments only")
    p.add_argument("--hold", action="store_true", help="repeat the last box instead of predicting")
    p.add_argument("--velocity-window", type=int)
    _online_flags(p)
    p.set_defaults(func=cmd_predict_future)

    p = sub.add_parser("estimate-trans", help="transition matrices from ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--videos", required=True)
    p.add_argument("--delta", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate_trans)

    p = sub.add_parser("compose-trans", help="compose and/or augment transition matrices")
    p.add_argument("--transitions", required=True)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--augment", choices=("diagonal", "neighbors", "relative_offsets"))
    p.add_argument("--theta", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compose_trans)

    p = sub.add_parser("eval", help="detection and prediction metrics")
    p.add_argument("metric", choices=("map", "avg-map", "cmap", "pmap", "early"))
    p.add_argument("--gt", required=True)
    p.add_argument("--tubes")
    p.add_argument("--early")
    p.add_argument("--videos")
    p.add_argument("--fraction", type=float)
    p.add_argument("--classes", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--siou-mode", choices=("intersection", "gt"))
    p.add_argument("--csv", help="write (x, metric, value) rows here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="online tube-generation timing")
    p.add_argument("--classes", type=int, default=24)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    if args.command == "eval":
        needed = "early" if args.metric == "early" else "tubes"
        if getattr(args, needed) is None:
            parser.error(f"eval {args.metric} needs --{needed}")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
