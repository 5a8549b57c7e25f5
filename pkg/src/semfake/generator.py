"""Semantic seeds and randomized Viterbi decoding of fake traces."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .mobility import AggregateModel, Trace, learn_profile
from .semantics import SemanticClasses

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerationParams:
    par_c: float = 0.25
    par_l: float = 1.0
    par_m: float = 0.75
    par_v: float = 4.0

    def __post_init__(self):
        for name in ("par_c", "par_l", "par_m"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.par_v < 1.0:
            raise ValueError("par_v must be >= 1")


@dataclass(frozen=True, eq=False)
class SemanticSeed:
    """Candidate locations per slot of a seed trace.

    ``overrides`` lists the positions where the true seed location had to be
    kept because its class offered nothing else.
    """

    slots: tuple
    start: int = 0
    seed_user: Optional[str] = None
    overrides: tuple = ()

    def __post_init__(self):
        slots = tuple(np.unique(np.asarray(s, dtype=np.int64)) for s in self.slots)
        if any(len(s) == 0 for s in slots):
            raise ValueError("semantic seed has an empty slot")
        object.__setattr__(self, "slots", slots)

    def __len__(self):
        return len(self.slots)


@dataclass(frozen=True, eq=False)
class FakeTrace:
    seed_user: str
    locations: np.ndarray
    log_likelihood: float
    start: int = 0
    fake_id: Optional[str] = None
    verdict: Optional[object] = None

    def __post_init__(self):
        locs = np.asarray(self.locations, dtype=np.int64)
        locs.setflags(write=False)
        object.__setattr__(self, "locations", locs)

    def __len__(self):
        return len(self.locations)

    @property
    def slots(self) -> np.ndarray:
        return np.arange(self.start, self.start + len(self.locations))

    def to_trace(self) -> Trace:
        return Trace(self.fake_id or f"fake-of-{self.seed_user}", self.locations, self.start)


def _runs(classes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Start and end (inclusive) index of the run each position belongs to."""
    L = len(classes)
    start = np.zeros(L, dtype=np.int64)
    end = np.zeros(L, dtype=np.int64)
    for t in range(1, L):
        start[t] = start[t - 1] if classes[t] == classes[t - 1] else t
    end[L - 1] = L - 1
    for t in range(L - 2, -1, -1):
        end[t] = end[t + 1] if classes[t] == classes[t + 1] else t
    return start, end


def semantize_seed(seed: Trace, classes: SemanticClasses, params: GenerationParams, rng=None) -> SemanticSeed:
    """Lift ``seed`` to per-slot candidate sets.

    Steps: one subsampled copy of the classes per call (each location dropped
    with ``par_c``); each slot takes its class; the true location is dropped
    with ``par_l``; the classes of the nearest preceding and following class
    change, ``dt`` slots away, are merged in with probability ``par_m**dt``.
    A slot left empty falls back to its full class minus the true location.
    """
    rng = np.random.default_rng(rng)
    locs = np.asarray(seed.locations)
    cls = classes.of(locs)
    groups = classes.groups()
    kept = [g[rng.random(len(g)) >= params.par_c] for g in groups]
    start, end = _runs(cls)
    L = len(locs)

    slots, overrides = [], []
    for t in range(L):
        cand = set(kept[cls[t]].tolist())
        if start[t] > 0:
            dt = t - (start[t] - 1)
            if rng.random() < params.par_m**dt:
                cand.update(kept[cls[start[t] - 1]].tolist())
        if end[t] < L - 1:
            dt = end[t] + 1 - t
            if rng.random() < params.par_m**dt:
                cand.update(kept[cls[end[t] + 1]].tolist())
        true = int(locs[t])
        if rng.random() < params.par_l:
            cand.discard(true)
        if not cand:
            cand = set(groups[cls[t]].tolist()) - {true}
            if not cand:
                cand = {true}
                overrides.append(t)
                logger.info("seed %s slot %d: singleton class, true location kept", seed.user, t)
        slots.append(sorted(cand))
    return SemanticSeed(tuple(slots), seed.start, seed.user, tuple(overrides))


def trace_likelihood(locations, model: AggregateModel, start: int = 0, period_map=None) -> float:
    """Log-likelihood of a location sequence under the aggregate model."""
    locs = np.asarray(locations, dtype=np.int64)
    slots = np.arange(start, start + len(locs))
    ll = float(np.log(model.initial(start, period_map)[locs[0]]))
    for t, P in enumerate(model.step_matrices(slots, period_map)):
        ll += float(np.log(P[locs[t], locs[t + 1]]))
    return ll


def viterbi_path(candidates: Sequence[np.ndarray], log_init: np.ndarray, log_steps: Sequence[np.ndarray], noise=None):
    """Maximum-score path through per-slot candidate sets.

    ``noise(t, shape)`` returns additive log-perturbations for the transition
    block into slot ``t``. Ties resolve to the lowest location index.
    """
    score = log_init[candidates[0]]
    back = []
    for t in range(1, len(candidates)):
        prev, cur = candidates[t - 1], candidates[t]
        block = log_steps[t - 1][np.ix_(prev, cur)]
        if noise is not None:
            block = block + noise(t, block.shape)
        total = score[:, None] + block
        arg = np.argmax(total, axis=0)
        back.append(arg)
        score = total[arg, np.arange(len(cur))]
    idx = int(np.argmax(score))
    best = float(score[idx])
    path = [idx]
    for arg in reversed(back):
        idx = int(arg[idx])
        path.append(idx)
    path.reverse()
    return np.array([candidates[t][i] for t, i in enumerate(path)], dtype=np.int64), best


def decode_randomized_viterbi(
    semseed: SemanticSeed, model: AggregateModel, par_v: float = 1.0, rng=None, period_map=None
) -> FakeTrace:
    """Most likely path through the semantic seed, with transitions scaled by U[1, par_v].

    A fresh factor is drawn for every transition evaluated. The reported
    likelihood is under the unperturbed model.
    """
    if par_v < 1:
        raise ValueError("par_v must be >= 1")
    if not (model.p_bar > 0).all():
        raise ValueError("aggregate model must be fully supported (smoothed)")
    R = model.n_locations
    for s in semseed.slots:
        if s.max() >= R:
            raise ValueError("semantic seed refers to an unknown location")
    rng = np.random.default_rng(rng)
    slots = np.arange(semseed.start, semseed.start + len(semseed))
    log_init = np.log(model.initial(semseed.start, period_map))
    log_steps = [np.log(P) for P in model.step_matrices(slots, period_map)]
    noise = None
    if par_v > 1:
        noise = lambda t, shape: np.log(rng.uniform(1.0, par_v, size=shape))
    path, _ = viterbi_path(semseed.slots, log_init, log_steps, noise)
    ll = trace_likelihood(path, model, semseed.start, period_map)
    return FakeTrace(semseed.seed_user or "", path, ll, semseed.start)


@dataclass
class Pool:
    """Accepted fakes and rejection tallies from :func:`generate_pool`."""

    fakes: list = field(default_factory=list)
    rejections: Counter = field(default_factory=Counter)
    attempts: dict = field(default_factory=dict)
    exhausted: list = field(default_factory=list)

    def for_seed(self, user: str) -> list:
        return [f for f in self.fakes if f.seed_user == user]

    @property
    def acceptance_rate(self) -> float:
        n = sum(self.attempts.values())
        return len(self.fakes) / n if n else 0.0


def attempt_rng(seed: int, seed_index: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(seed_index, attempt)))


def generate_pool(
    seeds: Sequence[Trace],
    classes: SemanticClasses,
    model: AggregateModel,
    params: GenerationParams,
    privacy,
    count_per_seed: int = 50,
    seed: int = 0,
    attempt_factor: int = 50,
    period_map=None,
) -> Pool:
    """Semantize, decode and privacy-test until each seed has ``count_per_seed`` fakes.

    Attempt ``j`` on seed ``i`` uses its own RNG stream, so results do not
    depend on evaluation order. A seed gives up after
    ``attempt_factor * count_per_seed`` attempts.
    """
    from .privacy import PrivacyAuditor

    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed trace")
    auditor = PrivacyAuditor(privacy, model.n_locations, period_map)
    pool = Pool()
    cap = attempt_factor * count_per_seed
    for i, s in enumerate(seeds):
        seed_profile = learn_profile(s, model.n_locations, period_map)
        accepted = 0
        attempts = 0
        while accepted < count_per_seed and attempts < cap:
            rng = attempt_rng(seed, i, attempts)
            attempts += 1
            semseed = semantize_seed(s, classes, params, rng)
            fake = decode_randomized_viterbi(semseed, model, params.par_v, rng, period_map)
            verdict = auditor.test(fake, s, seed_profile)
            if verdict.passed:
                pool.fakes.append(FakeTrace(s.user, fake.locations, fake.log_likelihood, fake.start,
                                            f"{s.user}_{accepted:04d}", verdict))
                accepted += 1
            else:
                for reason in sorted(verdict.failure_reasons):
                    pool.rejections[(s.user, reason)] += 1
        pool.attempts[s.user] = attempts
        if accepted == 0:
            pool.exhausted.append(s.user)
            logger.warning("seed %s: no fake passed the privacy test in %d attempts", s.user, attempts)
    return pool


def sample_by_likelihood(fakes: Sequence[FakeTrace], n: int, rng=None) -> list:
    """Draw ``n`` fakes with probability proportional to their likelihood.

    Without replacement while the pool lasts, then with replacement.
    """
    fakes = list(fakes)
    if not fakes:
        raise ValueError("empty pool")
    rng = np.random.default_rng(rng)
    ll = np.array([f.log_likelihood for f in fakes])
    w = np.exp(ll - ll.max())
    w /= w.sum()
    k = min(n, len(fakes))
    # Gumbel top-k is sampling without replacement proportional to w
    keys = np.log(np.where(w > 0, w, np.finfo(float).tiny)) + rng.gumbel(size=len(w))
    chosen = list(np.argsort(-keys, kind="stable")[:k])
    if n > k:
        chosen += list(rng.choice(len(fakes), size=n - k, p=w))
    return [fakes[i] for i in chosen]
