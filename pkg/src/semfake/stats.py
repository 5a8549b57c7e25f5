"""Utility statistics comparing a real corpus with fake corpora."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .metrics import geographic_similarity, mallows_hamming, semantic_similarity
from .mobility import AggregateModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AllocationDistribution:
    """Mass sorted in decreasing order, kept both raw and normalized.

    KL comparisons floor the raw ``counts`` before normalizing.
    """

    counts: np.ndarray

    def __post_init__(self):
        c = np.sort(np.asarray(self.counts, dtype=float))[::-1].copy()
        if (c < 0).any():
            raise ValueError("allocation counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @property
    def probabilities(self) -> np.ndarray:
        total = self.counts.sum()
        return self.counts / total if total > 0 else np.full(len(self.counts), 1.0 / len(self.counts))

    def __len__(self):
        return len(self.counts)


def _locs(t):
    return np.asarray(getattr(t, "locations", t), dtype=np.int64)


def spatial_allocation(dataset: Sequence, n_locations: int, top: Optional[int] = None) -> AllocationDistribution:
    """Visits per location across the dataset, by popularity; optionally the ``top`` most visited."""
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty dataset")
    counts = np.zeros(n_locations)
    for t in dataset:
        np.add.at(counts, _locs(t), 1.0)
    dist = AllocationDistribution(counts)
    if top is not None:
        dist = AllocationDistribution(dist.counts[:top])
    return dist


def kl_divergence(p, q, floor: float = 0.1) -> float:
    """KL(p || q) in nats after replacing zeros by ``floor`` and normalizing.

    Allocation distributions are floored on their raw counts.
    """
    if floor <= 0:
        raise ValueError("floor must be positive")
    a = p.counts if isinstance(p, AllocationDistribution) else np.asarray(p, dtype=float)
    b = q.counts if isinstance(q, AllocationDistribution) else np.asarray(q, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"support sizes differ: {a.shape} vs {b.shape}")
    a = np.where(a == 0, floor, a)
    b = np.where(b == 0, floor, b)
    a, b = a / a.sum(), b / b.sum()
    return float(max(np.sum(a * np.log(a / b)), 0.0))


def time_allocation(dataset: Sequence, top_k: int = 3) -> list[AllocationDistribution]:
    """Per rank, the users' fraction of time at their rank-th most visited location.

    Users with fewer than ``top_k`` distinct locations are padded with zeros.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    shares = []
    for t in dataset:
        locs = _locs(t)
        counts = np.sort(np.bincount(locs))[::-1]
        counts = counts[counts > 0]
        if len(counts) < top_k:
            logger.info("trace with %d distinct locations padded to %d ranks", len(counts), top_k)
            counts = np.concatenate([counts, np.zeros(top_k - len(counts))])
        shares.append(counts[:top_k] / len(locs))
    shares = np.array(shares)
    return [AllocationDistribution(shares[:, k]) for k in range(top_k)]


def uniform_time_allocation(n_users: int, top_k: int = 3) -> list[AllocationDistribution]:
    return [AllocationDistribution(np.full(n_users, 1.0 / top_k)) for _ in range(top_k)]


def random_time_allocation(n_users: int, top_k: int = 3, rng=None) -> list[AllocationDistribution]:
    rng = np.random.default_rng(rng)
    return [AllocationDistribution(rng.random(n_users)) for _ in range(top_k)]


def uniform_allocation(n_locations: int, total: float) -> AllocationDistribution:
    return AllocationDistribution(np.full(n_locations, total / n_locations))


def single_allocation(n_locations: int, total: float) -> AllocationDistribution:
    c = np.zeros(n_locations)
    c[0] = total
    return AllocationDistribution(c)


def _summary(values) -> tuple[float, float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(np.median(v)), float(v.std())


def aggregate_similarity(real: AggregateModel, fake: AggregateModel) -> tuple[float, float]:
    """Similarity of fake to real aggregate: (transitions, visits).

    Transitions use the geographic similarity with the real model as the
    reference; visits use one minus the hamming Mallows distance.
    """
    if real.p_bar.shape != fake.p_bar.shape:
        raise ValueError("aggregate models have different dimensions")
    sim_p = geographic_similarity(real.as_profile(), fake.as_profile()).score
    sim_pi = float(np.mean([1.0 - mallows_hamming(a, b) for a, b in zip(real.pi_bar, fake.pi_bar)]))
    return sim_p, sim_pi


def aggregate_similarity_report(real: AggregateModel, fakes: Sequence[AggregateModel]) -> dict:
    """(mean, median, std) of the transition and visit similarities over fake corpora."""
    fakes = list(fakes)
    if not fakes:
        raise ValueError("need at least one fake corpus")
    pairs = [aggregate_similarity(real, f) for f in fakes]
    return {"p_bar": _summary([a for a, _ in pairs]), "pi_bar": _summary([b for _, b in pairs])}


def quantile_pairs(sample_a, sample_b, n_quantiles: int = 99) -> tuple[np.ndarray, np.ndarray]:
    levels = np.arange(1, n_quantiles + 1) / (n_quantiles + 1)
    return np.quantile(np.asarray(sample_a, float), levels), np.quantile(np.asarray(sample_b, float), levels)


def qq_correlation(sample_a, sample_b, n_quantiles: int = 99) -> float:
    """Pearson correlation between matched quantiles of two samples."""
    a, b = np.asarray(sample_a, float), np.asarray(sample_b, float)
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be nonempty")
    qa, qb = quantile_pairs(a, b, n_quantiles)
    if np.ptp(qa) == 0 or np.ptp(qb) == 0:
        raise ValueError("correlation undefined for a constant sample")
    return float(np.corrcoef(qa, qb)[0, 1])


def pairwise_similarities(profiles: Sequence, kind: str = "semantic", order: str = "zeroth") -> np.ndarray:
    """Similarity over all ordered pairs of distinct profiles."""
    out = []
    for u, v in itertools.permutations(profiles, 2):
        if kind == "semantic":
            out.append(semantic_similarity(u, v, order).score)
        else:
            out.append(geographic_similarity(u, v).score)
    return np.array(out)
