import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from instances import best_ending_in
from actiontubes.labelling import OnlineLabeller, labelling_energy, potts_labels, runs

unit = st.floats(0, 1, allow_nan=False)


def online(scores, alpha, lag, lam=1.0):
    lab = OnlineLabeller(alpha, lam, lag)
    for s in scores:
        lab.push(s)
    return lab


def test_runs():
    assert runs([0, 1, 1, 0, 1]) == [(1, 2), (4, 4)]
    assert runs([]) == [] and runs([1, 1]) == [(0, 1)]


@settings(max_examples=150)
@given(st.lists(unit, min_size=1, max_size=12), st.sampled_from([0.0, 0.5, 1.0, 3.0]))
def test_potts_is_optimal(scores, alpha):
    energy, _, _ = oracles.best_labelling(scores, alpha)
    got = potts_labels(scores, alpha)
    assert labelling_energy(scores, got, alpha) == pytest.approx(energy, abs=1e-9)


def test_alpha_zero_is_thresholding():
    rng = np.random.default_rng(1)
    s = rng.uniform(0, 1, 50)
    np.testing.assert_array_equal(potts_labels(s, 0.0), s > 0.5)


def test_ties_go_to_background():
    assert potts_labels([0.5], 1.0).tolist() == [False]
    assert potts_labels([0.5, 0.5, 0.5], 0.0).tolist() == [False] * 3


def test_more_alpha_never_more_tubes():
    rng = np.random.default_rng(2)
    for _ in range(200):
        s = rng.uniform(0, 1, int(rng.integers(1, 14))).tolist()
        counts = [len(runs(potts_labels(s, a))) for a in (0.0, 0.5, 1.0, 2.0, 3.0)]
        assert counts == sorted(counts, reverse=True)
        # and the oracle agrees on the count at each alpha
        for a, n in zip((0.0, 0.5, 1.0, 2.0, 3.0), counts):
            assert n == len(runs(oracles.best_labelling(s, a)[1]))


@settings(max_examples=100)
@given(st.lists(unit, min_size=1, max_size=20), st.sampled_from([0.0, 1.0, 3.0]))
def test_online_with_full_lag_equals_batch(scores, alpha):
    lab = online(scores, alpha, lag=len(scores))
    np.testing.assert_array_equal(lab.labels(), potts_labels(scores, alpha))


def test_online_labels_at_every_prefix_with_large_lag():
    rng = np.random.default_rng(4)
    s = rng.uniform(0, 1, 30).tolist()
    lab = OnlineLabeller(1.0, 1.0, lag=100)
    for k, x in enumerate(s, start=1):
        lab.push(x)
        np.testing.assert_array_equal(lab.labels(), potts_labels(s[:k], 1.0))


def test_constant_high_score_commits_action():
    lab = online([0.95] * 20, 1.0, 5)
    assert len(lab.committed) == 15 and all(lab.committed)
    assert lab.labels().all()


def test_long_drop_commits_background_interior():
    scores = [0.9] * 6 + [0.1] * 10 + [0.9] * 6
    lab = online(scores, 1.0, 5)
    full = potts_labels(scores, 1.0)
    committed = np.array(lab.committed)
    assert not committed[7:15].any()
    np.testing.assert_array_equal(committed, full[:len(committed)])


def test_committed_labels_match_when_backpaths_coalesce():
    rng = np.random.default_rng(6)
    m, checked = 5, 0
    for _ in range(300):
        T = int(rng.integers(6, 25))
        s = rng.uniform(0, 1, T).tolist()
        alpha = float(rng.choice([0.5, 1.0, 3.0]))
        full = potts_labels(s, alpha)
        lab = OnlineLabeller(alpha, 1.0, m)
        for L in range(1, T + 1):
            lab.push(s[L - 1])
            k = L - 1 - m  # position committed by this push
            if k < 0:
                continue
            assert len(lab.committed) == k + 1
            ends = best_ending_in(s[:L], alpha, 0), best_ending_in(s[:L], alpha, 1)
            if ends[0][k] == ends[1][k]:
                assert lab.committed[k] == bool(full[k])
                checked += 1
    assert checked > 1000


def test_online_copy_is_independent():
    lab = online([0.9, 0.1, 0.8], 1.0, 5)
    twin = lab.copy()
    twin.push(0.9)
    assert lab.length == 3 and twin.length == 4
    with pytest.raises(ValueError):
        OnlineLabeller(1.0, 1.0, 0)
