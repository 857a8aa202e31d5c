"""Random instance generators shared by the oracle and acceptance tests."""

import numpy as np


def random_path_instance(rng, max_t=6, max_boxes=4, allow_empty=True):
    """Per-frame ``[(box, score), ...]`` with at most half the frames empty."""
    T = int(rng.integers(1, max_t + 1))
    frames = []
    empties = 0
    for _ in range(T):
        lo = 0 if allow_empty and (empties + 1) * 2 <= T else 1
        n = int(rng.integers(lo, max_boxes + 1))
        empties += n == 0
        xy = rng.uniform(0, 40, (n, 2))
        wh = rng.uniform(5, 30, (n, 2))
        boxes = np.column_stack([xy, xy + wh])
        frames.append([(tuple(b), float(s)) for b, s in zip(boxes.tolist(), rng.uniform(0, 1, n))])
    return frames


def as_arrays(frames):
    return [(np.array([b for b, _ in f], dtype=float).reshape(-1, 4), np.array([s for _, s in f], dtype=float))
            for f in frames]


def random_scores(rng, max_t=16):
    T = int(rng.integers(1, max_t + 1))
    return rng.uniform(0, 1, T).tolist()


def best_ending_in(scores, alpha, end_label):
    """Optimal labelling constrained to finish with ``end_label`` (plain DP)."""
    T = len(scores)
    value = [[0.0, 0.0] for _ in range(T)]
    back = [[0, 0] for _ in range(T)]
    value[0] = [1.0 - scores[0], scores[0]]
    for t in range(1, T):
        for l in (0, 1):
            unary = scores[t] if l else 1.0 - scores[t]
            stay, switch = value[t - 1][l], value[t - 1][1 - l] - alpha
            back[t][l] = l if stay >= switch else 1 - l
            value[t][l] = max(stay, switch) + unary
    out = [end_label]
    for t in range(T - 1, 0, -1):
        out.append(back[t][out[-1]])
    return out[::-1]
