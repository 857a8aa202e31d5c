"""Regenerate ``fixtures/oracle_values.json`` from the brute-force oracles.

Run from the repository root:  python3 tests/freeze_oracles.py
The package under test is only used to build the anchor pyramid input.
"""

import json
import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import oracles  # noqa: E402

HERE = os.path.dirname(__file__)


def nms_chain():
    # consecutive boxes overlap by IoU 0.5, 0.43, 0.47, 0.41 around the 0.45 threshold
    boxes = [[0, 0, 10, 10], [10 / 3, 0, 40 / 3, 10], [7.3, 0, 17.3, 10], [10.9, 0, 20.9, 10],
             [15.1, 0, 25.1, 10]]
    scores = [0.9, 0.85, 0.8, 0.75, 0.7]
    keep = oracles.nms_keep([tuple(b) for b in boxes], scores, 0.45)
    return {"boxes": boxes, "scores": scores, "threshold": 0.45, "keep": keep,
            "chain_ious": [oracles.box_iou(boxes[k], boxes[k + 1]) for k in range(4)]}


def mean_fuse_grid():
    app = [[0, 0, 10, 10], [2, 0, 12, 10], [30, 30, 40, 40]]
    flow = [[1, 0, 11, 10], [0, 1, 10, 11], [31, 30, 41, 40]]
    ov = [[oracles.box_iou(a, f) for f in flow] for a in app]
    return {"appearance": app, "flow": flow, "threshold": 0.5,
            "pairs": [list(p) for p in oracles.greedy_matching(ov, 0.5)]}


def dp_three_by_two():
    frames = [[([0, 0, 10, 10], 0.6), ([20, 20, 30, 30], 0.7)],
              [([1, 0, 11, 10], 0.5), ([40, 40, 50, 50], 0.9)],
              [([2, 0, 12, 10], 0.6), ([21, 20, 31, 30], 0.8)]]
    energy, arg = oracles.best_path(frames, 1.0)
    return {"frames": frames, "lambda_o": 1.0, "energy": energy, "indices": list(arg)}


def labelling(scores, alpha):
    energy, lab, gap = oracles.best_labelling(scores, alpha)
    return {"scores": scores, "alpha": alpha, "energy": energy, "labels": list(lab), "gap": gap}


def anchor_shift():
    from actiontubes.anchors import generate_grids
    grids = generate_grids(300, 300)
    g = grids[2]  # 10x10 level, cell width 30
    b1 = g.boxes[(4 * 10 + 4) * g.per_cell].tolist()
    b2 = [b1[0] + 30, b1[1], b1[2] + 30, b1[3]]
    overlap, level, i, j = oracles.anchor_pair_scan(b1, b2, grids)
    return {"image": [300, 300], "b1": b1, "b2": b2, "overlap": overlap, "level": level, "i": i, "j": j}


def two_class_map():
    # class 1: ranks FP, TP, TP over 2 gts; class 2: TP, FP over 1 gt
    tp1 = [False, True, True]
    tp2 = [True, False]
    ap1, ap2 = oracles.ap_from_pr(tp1, 2), oracles.ap_from_pr(tp2, 1)
    return {"ap": [ap1, ap2], "map": (ap1 + ap2) / 2}


def main():
    values = {
        "nms_chain": nms_chain(),
        "mean_fuse_grid": mean_fuse_grid(),
        "dp_three_by_two": dp_three_by_two(),
        "trim_alpha3": labelling([0.9, 0.9, 0.05, 0.05, 0.9, 0.9], 3.0),
        "temporal_alpha2": labelling([0.9, 0.95, 0.85, 0.1, 0.05, 0.02, 0.1, 0.15, 0.05, 0.9, 0.95, 0.9], 2.0),
        "anchor_shift": anchor_shift(),
        "two_class_map": two_class_map(),
    }
    os.makedirs(os.path.join(HERE, "fixtures"), exist_ok=True)
    with open(os.path.join(HERE, "fixtures", "oracle_values.json"), "w") as fh:
        json.dump(values, fh, indent=1, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    main()
