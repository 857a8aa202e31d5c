import numpy as np
import pytest

from actiontubes.future import (HorizonParams, assemble_future, complete_linker_tubes, complete_tube,
                                extrapolate, select_predictions)
from actiontubes.online import OnlineLinker
from actiontubes.tubes import ActionTube, MicroTube, PredictionSet

P = HorizonParams(video_length=20, width=100, height=100)


def test_extrapolate_zero_velocity_repeats():
    tail = np.tile([10, 10, 20, 20.0], (4, 1))
    np.testing.assert_array_equal(extrapolate(tail, 3, P), np.tile([10, 10, 20, 20], (3, 1)))


def test_extrapolate_constant_velocity():
    tail = np.array([[2 * k, 0, 2 * k + 10, 10] for k in range(6)], float)
    out = extrapolate(tail, 3, P)
    np.testing.assert_allclose(out[:, 0] - tail[-1, 0], [2, 4, 6])
    np.testing.assert_allclose(out[:, 2] - tail[-1, 2], [2, 4, 6])


def test_extrapolate_uses_last_five_steps_only():
    tail = np.array([[0, 0, 10, 10]] + [[50 + k, 0, 60 + k, 10] for k in range(6)], float)
    out = extrapolate(tail, 1, P)
    np.testing.assert_allclose(out[0], [56, 0, 66, 10])


def test_extrapolate_saturates_at_edge_and_short_tail_holds():
    tail = np.array([[80, 0, 90, 10], [85, 0, 95, 10]], float)
    out = extrapolate(tail, 4, P)
    assert out[:, 2].max() == 100 and (out[:, 2] <= 100).all()
    assert (out[:, 0] <= out[:, 2]).all()
    one = extrapolate(tail[:1], 2, P)
    np.testing.assert_array_equal(one, np.repeat(tail[:1], 2, axis=0))
    with pytest.raises(ValueError):
        extrapolate(np.zeros((0, 4)), 2, P)


def test_inverted_boxes_collapse_to_midpoint():
    # shrinking box extrapolated until it would invert
    tail = np.array([[40, 40, 60, 60], [45, 45, 55, 55]], float)
    out = extrapolate(tail, 4, P)
    assert (out[:, 0] <= out[:, 2]).all() and (out[:, 1] <= out[:, 3]).all()
    np.testing.assert_allclose(out[-1], [50, 50, 50, 50])


def tube(n=5, box=(10, 10, 20, 20)):
    return ActionTube(1, 0, np.tile(box, (n, 1)), score=0.9)


def test_identical_predictions_give_constant_future():
    box = np.array([10, 10, 20, 20.0])
    preds = [PredictionSet(4, 2, np.tile(box, (3, 1)))]
    out = assemble_future(tube(), preds, 4, P)
    assert len(out) == 15
    np.testing.assert_array_equal(out, np.tile(box, (15, 1)))


def test_newer_anchor_wins_and_gaps_interpolate():
    old = PredictionSet(2, 2, [[0, 0, 10, 10], [0, 0, 10, 10], [0, 0, 10, 10]])  # frames 4, 6, 8
    new = PredictionSet(4, 2, [[4, 0, 14, 10], [8, 0, 18, 10]])  # frames 6, 8
    chosen = select_predictions([old, new], 5, 19, t_now=4)
    np.testing.assert_array_equal(chosen[6], [4, 0, 14, 10])
    np.testing.assert_array_equal(chosen[8], [8, 0, 18, 10])
    out = assemble_future(tube(5, (0, 0, 10, 10)), [old, new], 4, P)
    np.testing.assert_allclose(out[0], [2, 0, 12, 10])  # frame 5 between frame 4 and 6
    np.testing.assert_allclose(out[3], [8, 0, 18, 10])  # frame 8


def test_smaller_lookahead_breaks_anchor_ties():
    a = PredictionSet(4, 1, [[1, 0, 11, 10], [2, 0, 12, 10]])  # frames 5, 6
    b = PredictionSet(4, 2, [[9, 0, 19, 10]])  # frame 6 at k=1
    chosen = select_predictions([b, a], 5, 19)
    np.testing.assert_array_equal(chosen[6], [9, 0, 19, 10])


def test_predictions_after_t_now_are_ignored():
    future = PredictionSet(6, 1, [[50, 50, 60, 60]])
    assert select_predictions([future], 0, 19, t_now=4) == {}


def test_no_predictions_extrapolates():
    tb = ActionTube(1, 0, [[k, 0, k + 10, 10] for k in range(5)], score=0.5)
    out = assemble_future(tb, [], 4, P)
    np.testing.assert_allclose(out[:, 0], np.arange(5, 20))


def test_complete_tube_contracts():
    tb = tube()
    assert complete_tube(tb, np.zeros((0, 4))) is tb
    done = complete_tube(tb, np.tile([1, 1, 2, 2], (5, 1)))
    assert len(done) == 10 and done.score == tb.score and done.label == tb.label
    with pytest.raises(ValueError):
        complete_tube(tb, np.tile([1, 1, 2, 2], (2, 1)), future_start=7)


def test_linker_completion_with_oracle_predictions():
    # box moving +1 px/frame; micro-tubes of stride 2 carry exact future boxes
    def box(t):
        return [10 + t, 10, 30 + t, 30]

    L = OnlineLinker(1)
    for t in (0, 2, 4):
        pred = PredictionSet(t, 2, [box(t + 2 * k) for k in range(1, 4)])
        L.link_microtubes(t, [MicroTube(box(t), box(t + 2), [0.1, 0.9], pred)], 2)
    params = HorizonParams(video_length=14, width=200, height=200)
    (done, seg), = complete_linker_tubes(L, 6, params)
    assert (done.start, done.end) == (0, 13) and (seg.start, seg.end) == (7, 13)
    np.testing.assert_allclose(done.boxes, [box(t) for t in range(14)])
    (held, _), = complete_linker_tubes(L, 6, params, hold=True)
    np.testing.assert_allclose(held.boxes[7:], [box(6)] * 7)
