"""Discrete traces, per-user mobility profiles and the aggregate mobility model.

A mobility profile is a time-dependent first-order Markov chain over ``R``
locations and ``T`` time periods. Transition probabilities are stored as an
array ``p[r, tau, tau_next, r_next]`` and visiting probabilities as
``pi[tau, r]``.
"""
from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)

PROB_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PeriodMap:
    """Maps slot indices to time periods.

    Periods are delimited by ``boundaries`` within a cycle of ``cycle`` slots,
    so with ``boundaries=(24, 48)`` and ``cycle=72`` slot 30 is in period 1
    and slot 100 in period 1 of the next day. No boundaries means a single
    period.
    """

    boundaries: tuple = ()
    cycle: int = 72

    def __post_init__(self):
        b = tuple(int(x) for x in self.boundaries)
        if list(b) != sorted(set(b)) or any(x <= 0 or x >= self.cycle for x in b):
            raise ValueError(f"invalid period boundaries {self.boundaries!r} for cycle {self.cycle}")
        object.__setattr__(self, "boundaries", b)

    @property
    def n_periods(self) -> int:
        return len(self.boundaries) + 1

    def __call__(self, slot: int) -> int:
        return bisect.bisect_right(self.boundaries, int(slot) % self.cycle)

    def periods(self, slots) -> np.ndarray:
        slots = np.asarray(slots, dtype=np.int64)
        return np.searchsorted(np.asarray(self.boundaries, dtype=np.int64), slots % self.cycle, side="right")


SINGLE_PERIOD = PeriodMap()


def _periods_of(slots, period_map) -> tuple[np.ndarray, int]:
    if period_map is None:
        return np.zeros(len(slots), dtype=np.int64), 1
    if isinstance(period_map, PeriodMap):
        return period_map.periods(slots), period_map.n_periods
    n = getattr(period_map, "n_periods", None)
    taus = np.array([period_map(s) for s in slots], dtype=np.int64)
    if n is None:
        n = int(taus.max()) + 1 if len(taus) else 1
    return taus, int(n)


@dataclass(frozen=True, eq=False)
class Trace:
    """One user's location trace, one location per consecutive slot."""

    user: str
    locations: np.ndarray
    start: int = 0

    def __post_init__(self):
        locs = np.asarray(self.locations, dtype=np.int64)
        if locs.ndim != 1:
            raise ValueError("trace locations must be one-dimensional")
        if locs.size and locs.min() < 0:
            raise ValueError(f"trace {self.user}: negative location index")
        object.__setattr__(self, "locations", _frozen(locs))
        object.__setattr__(self, "start", int(self.start))

    @property
    def slots(self) -> np.ndarray:
        return np.arange(self.start, self.start + len(self.locations))

    def __len__(self) -> int:
        return len(self.locations)

    def events(self) -> list[tuple[int, int]]:
        return list(zip(self.slots.tolist(), self.locations.tolist()))

    def window(self, lo: int, hi: int, renumber: bool = True) -> "Trace":
        """Slots ``lo <= slot < hi``; renumbered to start at 0 by default."""
        i, j = max(lo - self.start, 0), max(hi - self.start, 0)
        return Trace(self.user, self.locations[i:j], 0 if renumber else max(lo, self.start))

    def __eq__(self, other):
        return (
            isinstance(other, Trace)
            and self.user == other.user
            and self.start == other.start
            and np.array_equal(self.locations, other.locations)
        )

    __hash__ = object.__hash__


@dataclass(frozen=True)
class DistanceFunction:
    """Ground distance between locations: hamming or planar euclidean."""

    kind: str = "hamming"
    coordinates: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("hamming", "euclidean"):
            raise ValueError(f"unknown distance kind {self.kind!r}")
        if self.kind == "euclidean":
            if self.coordinates is None:
                raise ValueError("euclidean distance needs coordinates")
            c = np.asarray(self.coordinates, dtype=float)
            if c.ndim != 2 or c.shape[1] != 2:
                raise ValueError("coordinates must have shape (R, 2)")
            object.__setattr__(self, "coordinates", _frozen(c))

    def matrix(self, n_locations: int) -> np.ndarray:
        if self.kind == "hamming":
            return 1.0 - np.eye(n_locations)
        c = self.coordinates
        if len(c) != n_locations:
            raise ValueError(f"have coordinates for {len(c)} locations, need {n_locations}")
        diff = c[:, None, :] - c[None, :, :]
        return np.sqrt((diff**2).sum(-1))

    def normalized(self, n_locations: int) -> np.ndarray:
        """Distances scaled into [0, 1], as used by the similarity metrics."""
        d = self.matrix(n_locations)
        top = d.max() if d.size else 0.0
        return d / top if top > 0 else d


HAMMING = DistanceFunction()


@dataclass(frozen=True, eq=False)
class MobilityProfile:
    """Maximum-likelihood mobility profile of one user.

    ``observed[r, tau, tau_next]`` is False for states that were never left;
    the matching row of ``p`` is all zeros and carries no probability.
    ``period_weights[tau]`` is the fraction of events in period ``tau`` and
    ``departure[r, tau, tau_next]`` the fraction of departures from
    ``(r, tau)`` that land in period ``tau_next``.
    """

    p: np.ndarray
    pi: np.ndarray
    observed: np.ndarray
    period_weights: np.ndarray
    departure: np.ndarray
    user: Optional[str] = None

    def __post_init__(self):
        for name in ("p", "pi", "observed", "period_weights", "departure"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name))))
        R, T = self.pi.shape[1], self.pi.shape[0]
        if self.p.shape != (R, T, T, R):
            raise ValueError(f"p has shape {self.p.shape}, expected {(R, T, T, R)}")

    @property
    def n_locations(self) -> int:
        return self.pi.shape[1]

    @property
    def n_periods(self) -> int:
        return self.pi.shape[0]

    @property
    def transition(self) -> np.ndarray:
        """The ``R x R`` transition matrix of a single-period profile."""
        if self.n_periods != 1:
            raise ValueError("transition is only defined for single-period profiles")
        return self.p[:, 0, 0, :]

    @property
    def visits(self) -> np.ndarray:
        """Visiting probability of each location marginalised over periods."""
        return self.period_weights @ self.pi

    def state_weights(self) -> np.ndarray:
        """Pr_u(r, tau, tau_next) over observed states, normalized to sum 1.

        This is ``Pr(tau) * pi[tau, r] * Pr(tau_next | r, tau)``; states never
        left get weight zero.
        """
        w = self.period_weights[None, :, None] * self.pi.T[:, :, None] * self.departure
        w = np.where(self.observed, w, 0.0)
        total = w.sum()
        return w / total if total > 0 else w


def learn_profile(trace: Trace, n_locations: int, period_map=None) -> MobilityProfile:
    """Empirical transition and visiting frequencies of ``trace``."""
    locs = np.asarray(trace.locations)
    if locs.size == 0:
        raise ValueError(f"trace {trace.user!r} is empty")
    if locs.max() >= n_locations:
        raise ValueError(f"trace {trace.user!r} visits location {locs.max()} >= R={n_locations}")
    taus, T = _periods_of(trace.slots, period_map)
    R = n_locations
    counts = np.zeros((R, T, T, R))
    np.add.at(counts, (locs[:-1], taus[:-1], taus[1:], locs[1:]), 1.0)
    visits = np.zeros((T, R))
    np.add.at(visits, (taus, locs), 1.0)

    row = counts.sum(-1)
    observed = row > 0
    p = np.divide(counts, row[..., None], out=np.zeros_like(counts), where=observed[..., None])
    per_period = visits.sum(1)
    pi = np.divide(visits, per_period[:, None], out=np.zeros_like(visits), where=per_period[:, None] > 0)
    out = row.sum(-1)
    departure = np.divide(row, out[..., None], out=np.zeros_like(row), where=out[..., None] > 0)
    return MobilityProfile(p, pi, observed, per_period / per_period.sum(), departure, trace.user)


@dataclass(frozen=True, eq=False)
class AggregateModel:
    """Smoothed population-level mobility model used for decoding and attacks."""

    p_bar: np.ndarray
    pi_bar: np.ndarray
    epsilon: float
    distance: DistanceFunction = HAMMING
    period_weights: Optional[np.ndarray] = None
    departure: Optional[np.ndarray] = None
    stationarity_gap: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "p_bar", _frozen(np.asarray(self.p_bar, dtype=float)))
        object.__setattr__(self, "pi_bar", _frozen(np.asarray(self.pi_bar, dtype=float)))
        T = self.pi_bar.shape[0]
        if self.period_weights is None:
            object.__setattr__(self, "period_weights", np.full(T, 1.0 / T))
        if self.departure is None:
            object.__setattr__(self, "departure", np.full(self.p_bar.shape[:3], 1.0 / T))

    @property
    def n_locations(self) -> int:
        return self.pi_bar.shape[1]

    @property
    def n_periods(self) -> int:
        return self.pi_bar.shape[0]

    @property
    def transition(self) -> np.ndarray:
        if self.n_periods != 1:
            raise ValueError("transition is only defined for single-period models")
        return self.p_bar[:, 0, 0, :]

    def step(self, tau: int = 0, tau_next: int = 0) -> np.ndarray:
        return self.p_bar[:, tau, tau_next, :]

    def step_matrices(self, slots: Sequence[int], period_map=None) -> list[np.ndarray]:
        """Transition matrices for each consecutive pair of ``slots``."""
        taus, _ = _periods_of(np.asarray(slots), period_map)
        return [self.p_bar[:, a, b, :] for a, b in zip(taus[:-1], taus[1:])]

    def initial(self, slot: int = 0, period_map=None) -> np.ndarray:
        taus, _ = _periods_of(np.array([slot]), period_map)
        return self.pi_bar[taus[0]]

    def as_profile(self) -> MobilityProfile:
        """View the aggregate as a fully observed mobility profile."""
        observed = np.ones(self.p_bar.shape[:3], dtype=bool)
        return MobilityProfile(self.p_bar, self.pi_bar, observed, self.period_weights, self.departure, "aggregate")


def aggregate_model(
    profiles: Iterable[MobilityProfile],
    distance: DistanceFunction = HAMMING,
    epsilon: float = 0.01,
    stationarity_warn: float = 0.05,
) -> AggregateModel:
    """Sum the users' transition matrices, add distance-decayed smoothing, normalize.

    The smoothing mass between ``r`` and ``r'`` is ``epsilon * max(1, d)**-2``
    with the raw (unnormalized) ground distance. Visiting probabilities are the
    user average.
    """
    profiles = list(profiles)
    if not profiles:
        raise ValueError("need at least one profile")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not any(pr.observed.any() for pr in profiles):
        raise ValueError("no profile has any observed transition")
    shapes = {pr.p.shape for pr in profiles}
    if len(shapes) != 1:
        raise ValueError(f"profiles disagree on dimensions: {sorted(shapes)}")
    R, T = profiles[0].n_locations, profiles[0].n_periods

    total = np.sum([pr.p for pr in profiles], axis=0)
    d = distance.matrix(R)
    smooth = epsilon * np.maximum(1.0, d) ** -2.0
    unnorm = total + smooth[:, None, None, :]
    p_bar = unnorm / unnorm.sum(-1, keepdims=True)

    pi_bar = np.mean([pr.pi for pr in profiles], axis=0)
    mass = pi_bar.sum(1, keepdims=True)
    pi_bar = np.where(mass > 0, pi_bar / np.where(mass > 0, mass, 1.0), 1.0 / R)
    period_weights = np.mean([pr.period_weights for pr in profiles], axis=0)
    departure = np.mean([pr.departure for pr in profiles], axis=0)

    gap = float("nan")
    if T == 1:
        stat = stationary_distribution(p_bar[:, 0, 0, :])
        gap = float(np.abs(stat - pi_bar[0]).sum())
        if gap > stationarity_warn:
            logger.warning("user-averaged visiting distribution is %.3f (L1) from the stationary one", gap)
    return AggregateModel(p_bar, pi_bar, epsilon, distance, period_weights, departure, gap)


def stationary_distribution(p_bar: np.ndarray, tol: float = 1e-8, max_iter: int = 100_000) -> np.ndarray:
    """Unique stationary distribution of an irreducible row-stochastic matrix."""
    P = np.asarray(p_bar, dtype=float)
    n = P.shape[0]
    if P.ndim != 2 or P.shape[1] != n:
        raise ValueError("transition matrix must be square")
    if (P < 0).any() or np.abs(P.sum(1) - 1.0).max() > PROB_TOL:
        raise ValueError("transition matrix is not row-stochastic")
    ncomp, _ = connected_components(P > 0, directed=True, connection="strong")
    if ncomp > 1:
        raise ValueError(f"chain is reducible ({ncomp} communicating classes); no unique stationary distribution")

    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(A, b, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    for _ in range(max_iter):
        if np.abs(pi @ P - pi).sum() <= tol:
            return pi
        # lazy chain: same fixed point, no periodic oscillation
        pi = 0.5 * (pi + pi @ P)
        pi /= pi.sum()
    raise RuntimeError("stationary distribution did not converge")
