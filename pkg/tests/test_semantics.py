import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from semfake.corpus import SynthSpec, synth_corpus
from semfake.mobility import Trace, learn_profile
from semfake.semantics import (
    SemanticClasses,
    SemanticGraph,
    build_semantic_graph,
    canonical_labels,
    cluster_graph,
    clustering_quality,
    select_cluster_count,
)


def clique_graph(sizes, inside=1.0, across=0.05):
    part = np.repeat(np.arange(len(sizes)), sizes)
    W = np.where(part[:, None] == part[None, :], inside, across)
    np.fill_diagonal(W, 0.0)
    return SemanticGraph(W, np.zeros(len(part))), part


def test_identical_profiles_give_no_edges():
    pr = learn_profile(Trace("u", [0, 1, 2, 0, 1, 2]), 3)
    g = build_semantic_graph([pr, pr, pr])
    assert np.all(g.weights == 0)
    assert np.all(g.self_weight[:3] > 0)


def test_swapped_pair_edge_weight():
    u = learn_profile(Trace("u", [0, 0, 0, 1]), 2)
    v = learn_profile(Trace("v", [1, 1, 1, 0]), 2)
    g = build_semantic_graph([u, v])
    # both directions map 0 <-> 1 with similarity 1
    assert np.isclose(g.weights[0, 1], 2.0)


def test_graph_rejects_asymmetric_weights():
    with pytest.raises(ValueError):
        SemanticGraph(np.array([[0, 1.0], [0.5, 0]]), np.zeros(2))
    with pytest.raises(ValueError):
        build_semantic_graph([learn_profile(Trace("u", [0, 1]), 2)])


def test_planted_cliques_recovered():
    g, part = clique_graph([3, 4])
    classes = cluster_graph(g, 2, seed=0, restarts=10)
    assert adjusted_rand_score(part, classes.partition) == 1.0
    assert clustering_quality(g, classes) == pytest.approx(20.0)
    assert clustering_quality(g, classes, literal=True) == pytest.approx(0.05)


def test_extreme_cluster_counts():
    g, _ = clique_graph([2, 3])
    assert cluster_graph(g, 1).k == 1
    assert list(cluster_graph(g, 5).partition) == [0, 1, 2, 3, 4]
    with pytest.raises(ValueError):
        cluster_graph(g, 6)


def test_select_finds_three_cliques():
    g, part = clique_graph([3, 3, 4])
    k, scores = select_cluster_count(g, (2, 6), restarts=10, return_scores=True)
    assert k == 3 and set(scores) == {2, 3, 4, 5, 6}
    assert adjusted_rand_score(part, cluster_graph(g, k, restarts=10).partition) == 1.0


def test_select_uniform_weights_takes_lowest_k():
    W = np.ones((6, 6))
    np.fill_diagonal(W, 0)
    assert select_cluster_count(SemanticGraph(W, np.zeros(6)), (2, 4), restarts=5) == 2
    with pytest.raises(ValueError):
        select_cluster_count(SemanticGraph(W, np.zeros(6)), (4, 2))


def test_classes_api():
    c = SemanticClasses(canonical_labels([5, 5, 2, 9, 2]))
    assert list(c.partition) == [0, 0, 1, 2, 1]
    assert c.k == 3 and list(c.members(1)) == [2, 4]
    assert list(c.of([3, 0])) == [2, 0]
    with pytest.raises(ValueError):
        c.of([7])
    with pytest.raises(ValueError):
        SemanticClasses(np.array([0, 2]))


def test_roles_recovered_on_small_synthetic_corpus():
    spec = SynthSpec(users=8, n_locations=24, length=72, days=2, roles=3, noise=0.0)
    corpus = synth_corpus(spec, seed=1)
    profiles = [learn_profile(corpus.trace(u), corpus.n_locations) for u in corpus.users]
    g = build_semantic_graph(profiles)
    k = select_cluster_count(g, (2, 5), restarts=10)
    classes = cluster_graph(g, k, restarts=10)
    visited = np.flatnonzero(sum(p.visits for p in profiles) > 0)
    assert adjusted_rand_score(corpus.roles[visited], classes.partition[visited]) > 0.9
