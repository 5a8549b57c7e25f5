import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from semfake.metrics import (
    geographic_similarity,
    mallows_distance,
    mallows_hamming,
    order0_score,
    order1_score,
    semantic_similarity,
    semantic_similarity_order0,
    semantic_similarity_order1,
)
from semfake.mobility import DistanceFunction, Trace, learn_profile


def prof(locs, R):
    return learn_profile(Trace("x", locs), R)


def test_mallows_examples():
    D = 1 - np.eye(2)
    assert mallows_distance([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert np.isclose(mallows_distance([1, 0], [0, 1], D), 1.0)
    got = mallows_distance([0.5, 0.5], [0.8, 0.2], D)
    assert np.isclose(got, 0.3) and np.isclose(got, oracles.emd_grid([0.5, 0.5], [0.8, 0.2], D), atol=1e-3)
    assert np.isclose(mallows_hamming([0.6, 0.3, 0.1], [0.1, 0.3, 0.6]), 0.5)


def test_mallows_with_ground_distance():
    D = np.array([[0, 2.0], [2.0, 0]])
    p, q = [0.9, 0.1], [0.4, 0.6]
    assert np.isclose(mallows_distance(p, q, D), oracles.emd_grid(p, q, D), atol=1e-3)
    # a line metric: moving mass to the far end costs more
    line = np.abs(np.subtract.outer(np.arange(3.0), np.arange(3.0)))
    assert np.isclose(mallows_distance([1, 0, 0], [0, 0, 1], line), 2.0)


def test_mallows_rejects_bad_inputs():
    with pytest.raises(ValueError):
        mallows_distance([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(ValueError):
        mallows_hamming([1.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        mallows_distance([0.5, 0.5], [0.5, 0.5], np.zeros((3, 3)))


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31))
def test_mallows_properties(n, seed):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
    d = mallows_distance(p, q)
    assert 0 <= d <= 1
    assert np.isclose(d, mallows_distance(q, p), atol=1e-9)
    assert np.isclose(d, mallows_hamming(p, q), atol=1e-9)


def test_geographic_example():
    u = prof([0, 1, 0, 1], 2)
    v = prof([0, 0, 1, 0], 2)
    assert np.isclose(geographic_similarity(u, v).score, 0.75)


def test_geographic_unobserved_row_counts_as_far():
    u = prof([0, 1, 0, 1], 3)
    v = prof([2, 2, 2], 3)
    assert geographic_similarity(u, v).score == 0.0


def test_geographic_euclidean_distance():
    coords = np.array([[0.0, 0], [1.0, 0], [4.0, 0]])
    dist = DistanceFunction("euclidean", coords)
    u, near, far = prof([0, 0, 0], 3), prof([0, 1, 0, 1], 3), prof([0, 2, 0, 2], 3)
    assert geographic_similarity(u, near, dist).score > geographic_similarity(u, far, dist).score
    ham = [geographic_similarity(u, x).score for x in (near, far)]
    assert ham[0] == ham[1]


def test_order0_swap_and_self():
    u = prof([0, 0, 0, 1], 2)
    v = prof([1, 1, 1, 0], 2)
    res = semantic_similarity_order0(u, v)
    assert res.score == 1.0 and list(res.mapping) == [1, 0]
    assert geographic_similarity(u, v).score < 1.0
    assert semantic_similarity_order0(u, u).score == 1.0
    assert list(semantic_similarity_order0(u, u).mapping) == [0, 1]


def test_order0_prefers_identity_on_ties():
    u = prof([0, 1, 2, 3], 4)
    assert list(semantic_similarity_order0(u, u).mapping) == [0, 1, 2, 3]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=2, max_size=20), st.lists(st.integers(0, 3), min_size=2, max_size=20))
def test_order0_matches_brute_force(a, b):
    u, v = prof(a, 4), prof(b, 4)
    res = semantic_similarity_order0(u, v)
    assert np.isclose(res.score, oracles.order0_brute(a, b, 4), atol=1e-12)
    assert np.isclose(order0_score(u, v, res.mapping), res.score, atol=1e-12)


def test_order1_relabeling_recovered():
    a = [0, 1, 2, 0, 1, 2, 2, 0, 1, 1, 2, 0]
    perm = np.array([2, 0, 1])
    u, v = prof(a, 3), prof(perm[a].tolist(), 3)
    res = semantic_similarity_order1(u, v, rng=5)
    assert np.isclose(res.score, 1.0)
    assert list(res.mapping) == perm.tolist()
    assert semantic_similarity(u, v, "first", rng=5).score == res.score


def test_order1_r5_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(5):
        a, b = rng.integers(0, 5, 30), rng.integers(0, 5, 30)
        u, v = prof(a, 5), prof(b, 5)
        got = semantic_similarity_order1(u, v, iters=10_000, rng=1).score
        assert abs(got - oracles.order1_brute(a, b, 5)) < 1e-9


def test_order1_history_is_monotone():
    rng = np.random.default_rng(3)
    u, v = prof(rng.integers(0, 4, 20), 4), prof(rng.integers(0, 4, 20), 4)
    h = semantic_similarity_order1(u, v, iters=300, rng=0).history
    assert len(h) == 300 and np.all(np.diff(h) >= -1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=2, max_size=20), st.lists(st.integers(0, 3), min_size=2, max_size=20))
def test_order1_identity_score_is_geographic(a, b):
    u, v = prof(a, 4), prof(b, 4)
    assert np.isclose(order1_score(u, v, np.arange(4)), geographic_similarity(u, v).score, atol=1e-12)
    assert np.isclose(geographic_similarity(u, v).score, oracles.geo_similarity(a, b, 4), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=2, max_size=25), st.lists(st.integers(0, 4), min_size=2, max_size=25))
def test_similarities_bounded_and_self_one(a, b):
    u, v = prof(a, 5), prof(b, 5)
    for s in (geographic_similarity(u, v).score, semantic_similarity_order0(u, v).score,
              semantic_similarity_order1(u, v, iters=100).score):
        assert 0.0 <= s <= 1.0
    assert semantic_similarity_order1(u, u, iters=100).score == 1.0


def test_mismatched_profiles_and_unknown_order():
    with pytest.raises(ValueError):
        geographic_similarity(prof([0, 1], 2), prof([0, 1], 3))
    with pytest.raises(ValueError):
        semantic_similarity(prof([0, 1], 2), prof([0, 1], 2), order="second")
    with pytest.raises(ValueError):
        semantic_similarity_order1(prof([0, 1], 2), prof([0, 1], 2), sigma0=[0, 0])
