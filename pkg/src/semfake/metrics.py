"""Mallows (earth mover's) distance and geographic / semantic similarity."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from scipy.optimize import linear_sum_assignment, linprog

from .mobility import HAMMING, DistanceFunction, MobilityProfile

_NORM_TOL = 1e-8
# Off-diagonal penalty that makes the identity win exact ties in the assignment.
_TIE_BREAK = 1e-12


@dataclass(frozen=True, eq=False)
class SimilarityResult:
    score: float
    mapping: Optional[np.ndarray] = None
    order: str = "first"
    history: Optional[np.ndarray] = None


def _check_distribution(p, name):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if (p < 0).any():
        raise ValueError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > _NORM_TOL:
        raise ValueError(f"{name} sums to {p.sum()!r}, not 1")
    return p


def _distance_matrix(d, n):
    if d is None:
        return 1.0 - np.eye(n)
    if isinstance(d, DistanceFunction):
        return d.matrix(n)
    d = np.asarray(d, dtype=float)
    if d.shape != (n, n):
        raise ValueError(f"distance matrix has shape {d.shape}, expected {(n, n)}")
    return d


def mallows_distance(p, q, d=None) -> float:
    """Minimum expected ground distance over couplings of ``p`` and ``q``.

    Solved as a transportation linear program. ``d`` may be a
    :class:`DistanceFunction`, an explicit matrix, or ``None`` for hamming.
    """
    p = _check_distribution(p, "p")
    q = _check_distribution(q, "q")
    if p.shape != q.shape:
        raise ValueError("p and q must have the same support")
    n = len(p)
    D = _distance_matrix(d, n)
    if np.array_equal(p, q):
        return 0.0
    a_eq = np.zeros((2 * n, n * n))
    for i in range(n):
        a_eq[i, i * n:(i + 1) * n] = 1.0
        a_eq[n + i, i::n] = 1.0
    b_eq = np.concatenate([p, q])
    res = linprog(
        D.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if not res.success:
        raise RuntimeError(f"transportation problem failed: {res.message}")
    return float(np.clip(res.fun, 0.0, D.max()))


def mallows_hamming(p, q) -> float:
    """Closed form of the Mallows distance under hamming distance: 1 - sum(min(p, q))."""
    p = _check_distribution(p, "p")
    q = _check_distribution(q, "q")
    if p.shape != q.shape:
        raise ValueError("p and q must have the same support")
    # sum(p - min(p, q)) is 1 - sum(min) without rounding away exact zeros
    return float(min(np.maximum(p - q, 0.0).sum(), 1.0))


def _check_pair(u: MobilityProfile, v: MobilityProfile):
    if u.p.shape != v.p.shape:
        raise ValueError(f"profile dimensions differ: {u.p.shape} vs {v.p.shape}")


def _row_distances(pu: np.ndarray, pv: np.ndarray, v_observed: np.ndarray, distance) -> np.ndarray:
    """Mallows distance between matching rows; an unobserved ``v`` row counts as distance 1."""
    if distance is None or distance.kind == "hamming":
        # an empty v row is all zeros, which makes this sum(pu) = 1
        return np.maximum(pu - pv, 0.0).sum(-1)
    R = pu.shape[-1]
    D = distance.normalized(R)
    out = np.ones(pu.shape[:-1])
    for idx in zip(*np.nonzero(v_observed)):
        out[idx] = mallows_distance(pu[idx], pv[idx], D)
    return out


def geographic_similarity(u: MobilityProfile, v: MobilityProfile, distance: DistanceFunction = HAMMING) -> SimilarityResult:
    """One minus the expected Mallows distance between next-location distributions.

    The expectation is over ``u``'s states, so the measure is asymmetric.
    """
    _check_pair(u, v)
    w = u.state_weights()
    active = w > 0
    M = np.zeros_like(w)
    if active.any():
        M[active] = _row_distances(u.p[active], v.p[active], v.observed[active], distance)
    dissim = float((w * M).sum())
    return SimilarityResult(float(np.clip(1.0 - dissim, 0.0, 1.0)), None, "first")


def _best_assignment(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost permutation, preferring the identity among exact ties."""
    n = len(cost)
    rows, plain = linear_sum_assignment(cost)
    _, biased = linear_sum_assignment(cost + _TIE_BREAK * (1.0 - np.eye(n)))
    if cost[rows, biased].sum() <= cost[rows, plain].sum():
        return biased
    return plain


def _consensus_mapping(sigmas: list[np.ndarray], weights: list[float], n: int) -> np.ndarray:
    """Single permutation agreeing with the weighted per-period mappings as much as possible."""
    if len(sigmas) == 1:
        return sigmas[0]
    votes = np.zeros((n, n))
    for s, w in zip(sigmas, weights):
        votes[np.arange(n), s] += w
    return _best_assignment(votes.max() - votes)


def _order0_cost(pi_u: np.ndarray, pi_v: np.ndarray) -> np.ndarray:
    # cost[r, s]: mass of u at r that cannot be matched by v at s
    return np.maximum(pi_u[:, None] - pi_v[None, :], 0.0)


def semantic_similarity_order0(u: MobilityProfile, v: MobilityProfile) -> SimilarityResult:
    """Semantic similarity from visiting probabilities via exact linear assignment.

    For each period the permutation ``sigma`` maximizing
    ``sum_r min(pi_u[r], pi_v[sigma[r]])`` is found with the Hungarian method.
    """
    _check_pair(u, v)
    R = u.n_locations
    dissim = 0.0
    sigmas, weights = [], []
    for tau in range(u.n_periods):
        weight = float(u.period_weights[tau])
        if weight <= 0:
            continue
        cost = _order0_cost(u.pi[tau], v.pi[tau])
        sigma = _best_assignment(cost)
        dissim += weight * cost[np.arange(R), sigma].sum()
        sigmas.append(sigma)
        weights.append(weight)
    mapping = _consensus_mapping(sigmas, weights, R) if sigmas else np.arange(R)
    return SimilarityResult(float(np.clip(1.0 - dissim, 0.0, 1.0)), mapping, "zeroth")


def order0_score(u: MobilityProfile, v: MobilityProfile, sigma) -> float:
    """Zeroth-order similarity of ``u`` and ``v`` under a fixed mapping."""
    sigma = np.asarray(sigma)
    R = u.n_locations
    dissim = sum(
        u.period_weights[t] * _order0_cost(u.pi[t], v.pi[t])[np.arange(R), sigma].sum()
        for t in range(u.n_periods)
    )
    return float(np.clip(1.0 - dissim, 0.0, 1.0))


def _pair_cost(W, A, B, s):
    """Dissimilarity sum_{r,r'} W[r] * max(A[r,r'] - B[s[r], s[r']], 0) for one period pair."""
    return float((W[:, None] * np.maximum(A - B[np.ix_(s, s)], 0.0)).sum())


@njit(cache=True)
def _touched(W, A, B, s, i, j):
    # cost terms in rows i, j and columns i, j
    n = len(s)
    acc = 0.0
    for r in (i, j):
        sr = s[r]
        for c in range(n):
            x = A[r, c] - B[sr, s[c]]
            if x > 0.0:
                acc += W[r] * x
    for c in (i, j):
        sc = s[c]
        for r in range(n):
            if r == i or r == j:
                continue
            x = A[r, c] - B[s[r], sc]
            if x > 0.0:
                acc += W[r] * x
    return acc


@njit(cache=True)
def _anneal(W, A, B, s, start_cost, pairs, coins, temps):
    n = len(s)
    cur_cost = start_cost
    best = s.copy()
    best_cost = start_cost
    hist = np.empty(len(temps))
    for k in range(len(temps)):
        if n >= 2:
            i, j = pairs[k, 0], pairs[k, 1]
            if i == j:
                j = (i + 1) % n
            before = _touched(W, A, B, s, i, j)
            s[i], s[j] = s[j], s[i]
            delta = _touched(W, A, B, s, i, j) - before
            if delta <= 0.0 or coins[k] < np.exp(-delta / temps[k]):
                cur_cost += delta
                if cur_cost < best_cost:
                    best[:] = s
                    best_cost = cur_cost
            else:
                s[i], s[j] = s[j], s[i]
        hist[k] = best_cost
    return best, hist


def _check_permutation(sigma, n):
    sigma = np.asarray(sigma, dtype=np.int64)
    if sigma.shape != (n,) or not np.array_equal(np.sort(sigma), np.arange(n)):
        raise ValueError("sigma0 is not a permutation of the locations")
    return sigma


def order1_score(u: MobilityProfile, v: MobilityProfile, sigma, literal: bool = False) -> float:
    """First-order similarity of ``u`` and ``v`` under a fixed mapping."""
    sigma = _check_permutation(sigma, u.n_locations)
    w = u.state_weights()
    other = u if literal else v
    dissim = 0.0
    T = u.n_periods
    for a in range(T):
        for b in range(T):
            W = w[:, a, b]
            if W.sum() <= 0:
                continue
            dissim += _pair_cost(W, u.p[:, a, b, :], other.p[:, a, b, :], sigma)
    return float(np.clip(1.0 - dissim, 0.0, 1.0))


def semantic_similarity_order1(
    u: MobilityProfile,
    v: MobilityProfile,
    sigma0=None,
    iters: Optional[int] = None,
    rng=0,
    t_start: float = 1.0,
    t_end: float = 1e-3,
    literal: bool = False,
) -> SimilarityResult:
    """Semantic similarity from transition probabilities by simulated annealing.

    The search walks over permutations by random transpositions with a
    Metropolis acceptance rule under a geometric temperature schedule and
    returns the best permutation visited. ``sigma0`` defaults to the zeroth-order
    mapping. ``literal=True`` compares ``u`` against its own relabelled
    transitions, as the formula is sometimes printed.
    """
    _check_pair(u, v)
    R = u.n_locations
    if sigma0 is None:
        sigma0 = semantic_similarity_order0(u, v).mapping
    sigma0 = _check_permutation(sigma0, R)
    if iters is None:
        iters = 200 * R * R
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(rng)
    w = u.state_weights()
    other = u if literal else v
    T = u.n_periods
    temps = t_start * (t_end / t_start) ** (np.arange(iters) / max(iters - 1, 1))

    total = 0.0
    sigmas, weights, histories = [], [], []
    for a in range(T):
        for b in range(T):
            W = w[:, a, b]
            if W.sum() <= 0:
                continue
            A = np.ascontiguousarray(u.p[:, a, b, :])
            B = np.ascontiguousarray(other.p[:, a, b, :])
            W = np.ascontiguousarray(W)
            start_cost = _pair_cost(W, A, B, sigma0)
            pairs = rng.integers(0, max(R, 1), size=(iters, 2))
            coins = rng.random(iters)
            best, hist = _anneal(W, A, B, sigma0.copy(), start_cost, pairs, coins, temps)
            # incremental bookkeeping can drift; rescore exactly and never lose sigma0
            best_cost = _pair_cost(W, A, B, best)
            if best_cost > start_cost:
                best, best_cost = sigma0.copy(), start_cost
            hist = np.minimum(hist, start_cost)
            total += best_cost
            sigmas.append(best)
            weights.append(float(W.sum()))
            histories.append(hist)
    mapping = _consensus_mapping(sigmas, weights, R) if sigmas else sigma0
    history = 1.0 - np.sum(histories, axis=0) if histories else np.ones(iters)
    return SimilarityResult(float(np.clip(1.0 - total, 0.0, 1.0)), mapping, "first", history)


def semantic_similarity(u: MobilityProfile, v: MobilityProfile, order: str = "zeroth", **kwargs) -> SimilarityResult:
    if order in ("zeroth", "0", 0):
        return semantic_similarity_order0(u, v)
    if order in ("first", "1", 1):
        return semantic_similarity_order1(u, v, **kwargs)
    raise ValueError(f"unknown similarity order {order!r}")
