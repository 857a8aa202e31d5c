import numpy as np
import pytest

from actiontubes.geometry import DetectionFrame
from actiontubes.online import OnlineLinker, OnlineParams, microtube_overlap, run_online
from actiontubes.tubes import MicroTube


def frame(t, boxes, scores, video="v", C=1):
    boxes = np.array(boxes, float).reshape(-1, 4)
    scores = np.array(scores, float).reshape(len(boxes), -1) if len(boxes) else np.zeros((0, C + 1))
    return DetectionFrame(video, t, 200, 200, boxes, scores)


def sv(c, s, C=3):
    v = np.zeros(C + 1)
    v[c] = s
    v[0] = 1 - s
    return v


def test_first_frame_spawns_one_tube_per_surviving_box():
    L = OnlineLinker(1)
    L.step(frame(0, [[0, 0, 10, 10], [50, 50, 60, 60]], [[0.1, 0.9], [0.2, 0.8]]))
    assert len(L.active[1]) == 2


def test_nms_before_spawn():
    L = OnlineLinker(1)
    L.step(frame(0, [[0, 0, 10, 10], [0, 0, 10, 10.5]], [[0.1, 0.9], [0.2, 0.8]]))
    assert len(L.active[1]) == 1


def test_zero_class_score_boxes_are_ignored():
    L = OnlineLinker(2)
    L.step(frame(0, [[0, 0, 10, 10]], [sv(1, 0.9, 2)]))
    assert len(L.active[1]) == 1 and len(L.active[2]) == 0


def test_stationary_box_gives_single_tube():
    frames = [frame(t, [[10, 10, 30, 30]], [[0.3, 0.7]]) for t in range(5)]
    tubes = run_online(frames, 1)
    assert len(tubes) == 1
    tb = tubes[0]
    assert (tb.start, tb.end) == (0, 4)
    assert tb.score == pytest.approx(0.7)
    np.testing.assert_array_equal(tb.boxes, np.tile([10, 10, 30, 30], (5, 1)))


def test_termination_after_k_misses_and_fresh_tube():
    p = OnlineParams(k_terminate=2)
    box = [[10, 10, 30, 30]]
    frames = [frame(t, box, [[0.2, 0.8]]) for t in range(3)]
    frames += [frame(t, np.zeros((0, 4)), np.zeros((0, 2))) for t in range(3, 6)]  # 3 misses > k
    frames += [frame(t, box, [[0.2, 0.8]]) for t in range(6, 9)]
    tubes = sorted(run_online(frames, 1, p), key=lambda tb: tb.start)
    assert [(tb.start, tb.end) for tb in tubes] == [(0, 2), (6, 8)]


def test_short_gap_is_bridged_by_interpolation():
    p = OnlineParams(k_terminate=5)
    frames = [frame(0, [[0, 0, 10, 10]], [[0.2, 0.8]])]
    frames += [frame(t, np.zeros((0, 4)), np.zeros((0, 2))) for t in (1, 2)]
    frames += [frame(3, [[3, 0, 13, 10]], [[0.2, 0.8]]), frame(4, [[4, 0, 14, 10]], [[0.2, 0.8]])]
    tubes = run_online(frames, 1, p)
    assert len(tubes) == 1 and (tubes[0].start, tubes[0].end) == (0, 4)
    np.testing.assert_allclose(tubes[0].boxes[1], [1, 0, 11, 10])
    np.testing.assert_allclose(tubes[0].boxes[2], [2, 0, 12, 10])


def test_association_gate_is_strict():
    # IoU of consecutive boxes is exactly 0.1 -> not linked at lam = 0.1
    a, b = [0, 0, 10, 10], [0, 0, 10, 10]
    b = [9 / 5.5, 0, 10 + 9 / 5.5, 10]
    from actiontubes.geometry import iou
    ov = iou(a, b)
    L = OnlineLinker(1, OnlineParams(lam=ov))
    L.step(frame(0, [a], [[0.1, 0.9]]))
    L.step(frame(1, [b], [[0.1, 0.9]]))
    assert len(L.active[1]) == 2
    L = OnlineLinker(1, OnlineParams(lam=ov - 1e-9))
    L.step(frame(0, [a], [[0.1, 0.9]]))
    L.step(frame(1, [b], [[0.1, 0.9]]))
    assert len(L.active[1]) == 1


def test_higher_score_candidate_claimed_first_tube_by_mean():
    L = OnlineLinker(1)
    L.step(frame(0, [[0, 0, 10, 10], [100, 0, 110, 10]], [[0.1, 0.9], [0.5, 0.5]]))
    # both candidates overlap the strong tube; it claims the higher-scored one
    L.step(frame(1, [[0, -3, 10, 7], [0, 3, 10, 13]], [[0.6, 0.4], [0.3, 0.7]]))
    strong = max(L.active[1], key=lambda tb: tb.scores[0])
    np.testing.assert_array_equal(strong.last_box, [0, 3, 10, 13])
    assert len(L.active[1]) == 3  # the unclaimed box spawned a tube


def test_non_monotone_frames_rejected():
    L = OnlineLinker(1)
    L.step(frame(0, [], []))
    with pytest.raises(ValueError):
        L.step(frame(2, [], []))


def test_predict_label_rules():
    L = OnlineLinker(3)
    assert L.predict_label() is None
    L.step(frame(0, [[0, 0, 10, 10]], [sv(3, 0.9)]))
    assert L.predict_label() == 3
    L = OnlineLinker(3)
    L.step(frame(0, [[0, 0, 10, 10], [50, 50, 60, 60]], [sv(1, 0.8), sv(2, 0.6)]))
    assert L.predict_label() == 1
    L = OnlineLinker(3)
    L.step(frame(0, [[0, 0, 10, 10], [50, 50, 60, 60]], [sv(2, 0.7), sv(1, 0.7)]))
    assert L.predict_label() == 1


def test_tube_cap_keeps_best_means():
    p = OnlineParams(n=2, max_tubes_factor=1, k_terminate=10)
    L = OnlineLinker(1, p)
    for t in range(3):
        xs = [t * 60 + k * 20 for k in range(2)]
        L.step(frame(t, [[x, 0, x + 10, 10] for x in xs], [[0.5, 0.5 - 0.1 * t]] * 2))
        assert len(L.active[1]) <= 2
    assert all(tb.mean_score == pytest.approx(0.5) for tb in L.active[1])


def mt(b1, b2, s, C=1):
    return MicroTube(b1, b2, sv(1, s, C))


def test_microtube_stationary_stride_three():
    box = [10, 10, 30, 30]
    L = OnlineLinker(1)
    for t in (0, 3, 6, 9):
        L.link_microtubes(t, [mt(box, box, 0.9)], 3)
    tubes = L.finalize()
    assert len(tubes) == 1 and (tubes[0].start, tubes[0].end) == (0, 12)
    np.testing.assert_array_equal(tubes[0].boxes, np.tile(box, (13, 1)))


def test_microtube_first_box_replaces_shared_frame_and_fills_between():
    L = OnlineLinker(1)
    L.link_microtubes(0, [mt([0, 0, 10, 10], [2, 0, 12, 10], 0.9)], 2)
    L.link_microtubes(2, [mt([3, 0, 13, 10], [5, 0, 15, 10], 0.9)], 2)
    tb = L.finalize()[0]
    np.testing.assert_allclose(tb.boxes, [[0, 0, 10, 10], [1, 0, 11, 10], [3, 0, 13, 10],
                                          [4, 0, 14, 10], [5, 0, 15, 10]])


def test_microtube_equal_overlap_higher_score_wins():
    L = OnlineLinker(1)
    L.link_microtubes(0, [mt([0, 0, 10, 10], [0, 0, 10, 10], 0.9)], 1)
    # same IoU with the tube, mutual IoU 4/16 so NMS keeps both
    left, right = [0, -3, 10, 7], [0, 3, 10, 13]
    L.link_microtubes(1, [mt(left, left, 0.6), mt(right, right, 0.8)], 1)
    tube = max(L.active[1], key=lambda tb: len(tb))
    np.testing.assert_array_equal(tube.boxes[1], right)


def test_microtube_stride_mismatch():
    L = OnlineLinker(1)
    L.link_microtubes(0, [], 3)
    with pytest.raises(ValueError):
        L.link_microtubes(2, [], 3)
    with pytest.raises(ValueError):
        L.link_microtubes(3, [], 2)
    F = OnlineLinker(1)
    F.step(frame(0, [], []))
    with pytest.raises(ValueError):
        F.link_microtubes(1, [], 1)


def test_delta_one_stream_matches_frame_mode():
    rng = np.random.default_rng(0)
    pos = np.array([[10.0, 10], [100, 100]])
    boxes = []
    for _ in range(12):
        pos = pos + rng.normal(0, 1, pos.shape)
        boxes.append(np.column_stack([pos, pos + 30]))
    scores = [[0.2, 0.8], [0.3, 0.7]]
    frames = [frame(t, boxes[t], scores) for t in range(12)]
    by_frame = run_online(frames, 1)
    L = OnlineLinker(1)
    for t in range(11):
        L.link_microtubes(t, [MicroTube(boxes[t][k], boxes[t + 1][k], scores[k]) for k in range(2)], 1)
    by_micro = L.finalize()
    key = lambda tb: tb.start
    for a, b in zip(sorted(by_frame, key=key), sorted(by_micro, key=key)):
        assert (a.start, a.end) == (b.start, b.end)
        np.testing.assert_allclose(a.boxes, b.boxes)


def test_microtube_overlap_is_mean_of_two_frames():
    a = mt([0, 0, 10, 10], [0, 0, 10, 10], 0.5)
    b = mt([0, 0, 10, 10], [5, 0, 15, 10], 0.5)
    assert microtube_overlap(a, b) == pytest.approx((1 + 1 / 3) / 2)
