import numpy as np
import pytest

import oracles
from actiontubes.fusion import FusionParams, boost_fuse, fuse, greedy_pairs, mean_fuse, union_fuse
from actiontubes.geometry import ScoredBox, iou_matrix


def sb(box, *scores):
    return ScoredBox(box, np.array(scores, dtype=float))


def test_boost_formula_uses_iou_and_skips_background():
    a = sb((10, 0, 30, 10), 0.4, 0.6)
    f = sb((0, 0, 20, 10), 0.3, 0.5)  # IoU = 1/3
    out = boost_fuse([a], [f], FusionParams(tau=0.3))
    assert out[0].scores[1] == pytest.approx(0.6 + 0.5 / 3)
    assert out[0].scores[0] == 0.4


def test_boost_exact_half_overlap_example():
    a = sb((0, 0, 10, 10), 0.4, 0.6)
    f = sb((0, 0, 10, 20), 0.5, 0.5)  # IoU = 100 / 200
    out = boost_fuse([a], [f])
    assert out[0].scores[1] == pytest.approx(0.85, abs=1e-15)
    assert len(out) == 1  # the flow box is matched, so not appended


def test_boost_below_tau_and_empty_flow():
    a = sb((0, 0, 10, 10), 0.4, 0.6)
    f = sb((8, 0, 18, 10), 0.5, 0.5)  # IoU = 20 / 180
    out = boost_fuse([a], [f])
    np.testing.assert_array_equal(out[0].scores, a.scores)
    assert len(out) == 2 and out[1].box == f.box
    same = boost_fuse([a], [])
    assert len(same) == 1 and np.array_equal(same[0].scores, a.scores)


def test_boost_l1_normalisation():
    a = sb((0, 0, 10, 10), 0.4, 0.6)
    f = sb((0, 0, 10, 20), 0.5, 0.5)
    out = boost_fuse([a], [f], FusionParams(l1_normalize=True))
    assert out[0].scores.sum() == pytest.approx(1.0)
    assert out[0].scores[1] == pytest.approx(0.85 / 1.25)


def test_union_is_multiset_concat():
    a = [sb((0, 0, 1, 1), 0.5, 0.5), sb((2, 2, 3, 3), 0.1, 0.9)]
    f = [sb((0, 0, 1, 1), 0.5, 0.5)] + [sb((5, 5, 6, 6), 0.2, 0.8)] * 2
    out = union_fuse(a, f)
    assert len(out) == 5
    assert [d.box for d in out] == [d.box for d in a + f]
    assert [d.box for d in union_fuse([], f)] == [d.box for d in f]


def test_mean_fuse_pair_and_unmatched():
    a = [sb((0, 0, 10, 10), 0.6, 0.4), sb((50, 50, 60, 60), 0.3, 0.7)]
    f = [sb((0, 0, 10, 10), 0.4, 0.6)]
    out = mean_fuse(a, f, FusionParams(strategy="mean"))
    np.testing.assert_allclose(out[0].scores, [0.5, 0.5])
    np.testing.assert_array_equal(out[1].scores, a[1].scores)
    assert len(out) == 2


def test_mean_fuse_grid_matches_frozen_oracle(frozen):
    fx = frozen["mean_fuse_grid"]
    ov = iou_matrix(np.array(fx["appearance"], float), np.array(fx["flow"], float))
    got = sorted(greedy_pairs(ov, fx["threshold"]), key=lambda p: (-ov[p], p))
    assert [list(p) for p in got] == fx["pairs"]


def test_greedy_pairs_random_against_oracle():
    rng = np.random.default_rng(11)
    for _ in range(100):
        ov = np.round(rng.uniform(0, 1, (3, 3)), 1)  # coarse values force ties
        want = oracles.greedy_matching(ov.tolist(), 0.5)
        assert sorted(greedy_pairs(ov, 0.5)) == sorted(want)


def test_dispatch_and_validation():
    a = [sb((0, 0, 1, 1), 0.5, 0.5)]
    assert len(fuse(a, a, FusionParams(strategy="union"))) == 2
    assert len(fuse(a, a, FusionParams(strategy="mean"))) == 1
    with pytest.raises(ValueError):
        FusionParams(strategy="max")
    with pytest.raises(ValueError):
        FusionParams(tau=1.5)
