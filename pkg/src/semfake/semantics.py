"""Location semantic graph and its partition into semantic classes."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.cluster import KMeans

from .metrics import SimilarityResult, semantic_similarity
from .mobility import MobilityProfile


@dataclass(frozen=True, eq=False)
class SemanticGraph:
    """Symmetric, loop-free weights between locations.

    ``self_weight[r]`` accumulates the similarity of mappings that send ``r``
    to itself; it is kept for diagnostics only.
    """

    weights: np.ndarray
    self_weight: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("weights must be a square matrix")
        if (w < 0).any() or not np.allclose(w, w.T, atol=0, rtol=0) or np.any(np.diag(w) != 0):
            raise ValueError("weights must be symmetric, non-negative and loop-free")

    @property
    def n_locations(self) -> int:
        return self.weights.shape[0]

    def edges(self):
        """(r, r', weight) for r < r' with positive weight."""
        r, c = np.nonzero(np.triu(self.weights, 1))
        return [(int(a), int(b), float(self.weights[a, b])) for a, b in zip(r, c)]


@dataclass(frozen=True, eq=False)
class SemanticClasses:
    partition: np.ndarray

    def __post_init__(self):
        part = np.asarray(self.partition, dtype=np.int64)
        labels = np.unique(part)
        if part.size and not np.array_equal(labels, np.arange(len(labels))):
            raise ValueError("class indices must be dense in [0, k)")
        part.setflags(write=False)
        object.__setattr__(self, "partition", part)

    @property
    def k(self) -> int:
        return int(self.partition.max()) + 1 if self.partition.size else 0

    @property
    def n_locations(self) -> int:
        return len(self.partition)

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.partition == c)

    def groups(self) -> list[np.ndarray]:
        return [self.members(c) for c in range(self.k)]

    def of(self, locations) -> np.ndarray:
        locations = np.asarray(locations)
        if locations.size and (locations.min() < 0 or locations.max() >= len(self.partition)):
            raise ValueError("location without a semantic class")
        return self.partition[locations]


def canonical_labels(labels) -> np.ndarray:
    """Relabel so classes are numbered by their lowest location index."""
    labels = np.asarray(labels)
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    remap = {old: new for new, old in enumerate(order)}
    return np.array([remap[x] for x in labels], dtype=np.int64)


def pairwise_semantic(profiles: Sequence[MobilityProfile], order: str = "zeroth", **kwargs) -> dict:
    """Semantic similarity and mapping for every ordered pair ``(i, j)``, ``i != j``."""
    return {
        (i, j): semantic_similarity(profiles[i], profiles[j], order=order, **kwargs)
        for i, j in itertools.permutations(range(len(profiles)), 2)
    }


def build_semantic_graph(
    profiles: Sequence[MobilityProfile],
    order: str = "zeroth",
    pairwise: Optional[dict] = None,
) -> SemanticGraph:
    """Accumulate ``s_u^v`` on every edge ``(r, sigma_u^v(r))``.

    Only mapped pairs where both ``u`` visits ``r`` and ``v`` visits
    ``sigma(r)`` are counted: the mapping among locations neither user visits
    is arbitrary. Each ordered pair adds ``s`` to the directed edge and the
    graph is the symmetric average of the directed weights.
    """
    profiles = list(profiles)
    if len(profiles) < 2:
        raise ValueError("need at least two profiles to build a semantic graph")
    R = profiles[0].n_locations
    if pairwise is None:
        pairwise = pairwise_semantic(profiles, order=order)
    visits = [pr.visits for pr in profiles]
    directed = np.zeros((R, R))
    for (i, j), res in pairwise.items():
        sigma = np.asarray(res.mapping)
        src = np.flatnonzero((visits[i] > 0) & (visits[j][sigma] > 0))
        np.add.at(directed, (src, sigma[src]), res.score)
    self_weight = np.diag(directed).copy()
    np.fill_diagonal(directed, 0.0)
    return SemanticGraph(0.5 * (directed + directed.T), self_weight)


def _embed(graph: SemanticGraph) -> np.ndarray:
    # rows of the weight matrix on the unit sphere, so euclidean k-means ~ cosine
    W = graph.weights
    norms = np.linalg.norm(W, axis=1, keepdims=True)
    return np.divide(W, norms, out=np.zeros_like(W), where=norms > 0)


def cluster_graph(graph: SemanticGraph, k: int, seed: int = 0, restarts: int = 50) -> SemanticClasses:
    """k-means over the locations' similarity vectors (cosine geometry)."""
    R = graph.n_locations
    if not 1 <= k <= R:
        raise ValueError(f"k={k} outside [1, {R}]")
    if k == 1:
        return SemanticClasses(np.zeros(R, dtype=np.int64))
    if k == R:
        return SemanticClasses(np.arange(R))
    km = KMeans(n_clusters=k, init="k-means++", n_init=restarts, random_state=seed)
    labels = km.fit_predict(_embed(graph))
    return SemanticClasses(canonical_labels(labels))


def _class_means(graph: SemanticGraph, classes: SemanticClasses) -> tuple[float, float]:
    W = graph.weights
    part = classes.partition
    same = part[:, None] == part[None, :]
    upper = np.triu(np.ones_like(W, dtype=bool), 1)
    intra_pairs, inter_pairs = same & upper, ~same & upper
    intra = W[intra_pairs].mean() if intra_pairs.any() else 0.0
    inter = W[inter_pairs].mean() if inter_pairs.any() else 0.0
    return float(intra), float(inter)


def clustering_quality(graph: SemanticGraph, classes: SemanticClasses, literal: bool = False) -> float:
    """Mean intra-class edge weight over mean inter-class edge weight.

    Means are per location pair. ``literal=True`` returns the inverse ratio.
    """
    intra, inter = _class_means(graph, classes)
    num, den = (inter, intra) if literal else (intra, inter)
    if den == 0:
        return float("inf") if num > 0 else 0.0
    return float(num / den)


def select_cluster_count(
    graph: SemanticGraph,
    k_range: tuple[int, int],
    seed: int = 0,
    restarts: int = 50,
    literal: bool = False,
    return_scores: bool = False,
):
    """The k in the inclusive range maximizing :func:`clustering_quality`.

    Equal scores (typically several infinite ratios when no edge crosses
    classes) go to the higher mean intra-class weight, then to the lower k.
    """
    lo, hi = int(k_range[0]), int(k_range[1])
    if lo > hi:
        raise ValueError(f"empty cluster-count range {k_range}")
    if lo < 1 or hi > graph.n_locations:
        raise ValueError(f"cluster-count range {k_range} outside [1, {graph.n_locations}]")
    scores, intra = {}, {}
    for k in range(lo, hi + 1):
        classes = cluster_graph(graph, k, seed, restarts)
        scores[k] = clustering_quality(graph, classes, literal)
        intra[k] = _class_means(graph, classes)[0]
    best = max(scores.values())
    # relative tolerance so float noise in equal scores does not pick a higher k
    tied = [k for k, s in scores.items() if s == best or s >= best - 1e-12 * max(abs(best), 1.0)]
    top = max(intra[k] for k in tied)
    chosen = min(k for k in tied if intra[k] >= top - 1e-12 * max(abs(top), 1.0))
    return (chosen, scores) if return_scores else chosen
