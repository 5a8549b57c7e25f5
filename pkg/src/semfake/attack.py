"""Location-based-service scenario: exposure, localization attack, baselines."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .generator import sample_by_likelihood, viterbi_path
from .mobility import AggregateModel, MobilityProfile, Trace
from .semantics import SemanticClasses

logger = logging.getLogger(__name__)

BASELINES = ("uniform_iid", "aggregate_iid", "rw_aggregate", "rw_user")
OURS = "ours"


@dataclass(frozen=True, eq=False)
class ExposureRecord:
    """Exposed positions of a trace and the location sets sent at each."""

    positions: np.ndarray
    sets: tuple
    truth: np.ndarray
    start: int = 0

    def __post_init__(self):
        for pos, s in zip(self.positions, self.sets):
            if np.count_nonzero(np.asarray(s) == self.truth[pos]) != 1:
                raise ValueError("every exposed set must contain the true location exactly once")


@dataclass(frozen=True)
class AttackResult:
    inferred: np.ndarray
    privacy: float
    diversity_overhead: float
    semantic_overhead: float


def _locs(x) -> np.ndarray:
    return np.asarray(getattr(x, "locations", x), dtype=np.int64)


def expose(truth, fakes: Sequence = (), beta: float = 0.5, rng=None) -> ExposureRecord:
    """Expose each slot with probability ``beta``, sending the truth plus every fake's location."""
    if not 0 < beta <= 1:
        raise ValueError("beta must be in (0, 1]")
    rng = np.random.default_rng(rng)
    t = _locs(truth)
    fl = [_locs(f) for f in fakes]
    for f in fl:
        if len(f) != len(t):
            raise ValueError(f"fake length {len(f)} differs from truth length {len(t)}")
    positions = np.flatnonzero(rng.random(len(t)) < beta)
    sets = tuple(np.unique(np.array([t[p]] + [f[p] for f in fl], dtype=np.int64)) for p in positions)
    return ExposureRecord(positions, sets, t, getattr(truth, "start", 0))


def _gap_matrices(model: AggregateModel, record: ExposureRecord, period_map=None) -> list[np.ndarray]:
    """Transition matrices between consecutive exposed positions (multi-step products)."""
    slots = np.arange(record.start, record.start + len(record.truth))
    steps = model.step_matrices(slots, period_map)
    out = []
    for a, b in zip(record.positions[:-1], record.positions[1:]):
        M = steps[a]
        for k in range(a + 1, b):
            M = M @ steps[k]
        out.append(M)
    return out


def _initial(model: AggregateModel, record: ExposureRecord, period_map=None) -> np.ndarray:
    init = model.initial(record.start, period_map)
    if len(record.positions) and record.positions[0] > 0:
        slots = np.arange(record.start, record.start + record.positions[0] + 1)
        for P in model.step_matrices(slots, period_map):
            init = init @ P
    return init


def localization_attack(record: ExposureRecord, model: AggregateModel, period_map=None) -> np.ndarray:
    """Most likely true path through the exposed sets; unexposed gaps are marginalized."""
    if len(record.positions) == 0:
        return np.empty(0, dtype=np.int64)
    log_init = np.log(_initial(model, record, period_map))
    log_steps = [np.log(M) for M in _gap_matrices(model, record, period_map)]
    path, _ = viterbi_path(record.sets, log_init, log_steps)
    return path


def score_attack(record: ExposureRecord, inferred, classes: Optional[SemanticClasses] = None) -> AttackResult:
    """Error rate of the adversary and the per-exposure overheads."""
    inferred = np.asarray(inferred, dtype=np.int64)
    if len(record.positions) == 0:
        return AttackResult(inferred, 0.0, 1.0, 1.0)
    truth = record.truth[record.positions]
    privacy = float(np.mean(inferred != truth))
    diversity = float(np.mean([len(s) for s in record.sets]))
    if classes is not None:
        semantic = float(np.mean([len(np.unique(classes.of(s))) for s in record.sets]))
    else:
        semantic = float("nan")
    return AttackResult(inferred, privacy, diversity, semantic)


def fill_unexposed(record: ExposureRecord, inferred, model: AggregateModel, period_map=None) -> np.ndarray:
    """Extend an exposed-slot reconstruction to every slot.

    An unexposed slot takes the location most likely given the inferred
    neighbours on either side (only the preceding one at the end, only the
    following one at the start).
    """
    L = len(record.truth)
    slots = np.arange(record.start, record.start + L)
    steps = model.step_matrices(slots, period_map)
    full = np.empty(L, dtype=np.int64)
    pos = list(record.positions)
    inferred = np.asarray(inferred, dtype=np.int64)
    if not pos:
        dist = model.initial(record.start, period_map)
        for t in range(L):
            full[t] = int(np.argmax(dist))
            if t < L - 1:
                dist = dist @ steps[t]
        return full
    full[pos] = inferred
    for t in range(L):
        if t in pos:
            continue
        before = [p for p in pos if p < t]
        after = [p for p in pos if p > t]
        score = np.ones(model.n_locations)
        if before:
            a = before[-1]
            v = np.zeros(model.n_locations)
            v[full[a]] = 1.0
            for k in range(a, t):
                v = v @ steps[k]
            score *= v
        else:
            v = model.initial(record.start, period_map)
            for k in range(0, t):
                v = v @ steps[k]
            score *= v
        if after:
            b = after[0]
            col = np.zeros(model.n_locations)
            col[full[b]] = 1.0
            for k in range(b - 1, t - 1, -1):
                col = steps[k] @ col
            score *= col
        full[t] = int(np.argmax(score))
    return full


def attack(record: ExposureRecord, model: AggregateModel, classes=None, period_map=None,
           full_trace: bool = False) -> AttackResult:
    """Run the localization attack and score it.

    With ``full_trace`` the adversary also reconstructs unexposed slots and the
    error is measured over the whole trace.
    """
    inferred = localization_attack(record, model, period_map)
    result = score_attack(record, inferred, classes)
    if not full_trace:
        return result
    full = fill_unexposed(record, inferred, model, period_map)
    return AttackResult(full, float(np.mean(full != record.truth)), result.diversity_overhead, result.semantic_overhead)


def _sample_chain(init: np.ndarray, P: np.ndarray, L: int, rng) -> np.ndarray:
    R = len(init)
    cum = np.cumsum(P, axis=1)
    out = np.empty(L, dtype=np.int64)
    out[0] = rng.choice(R, p=init)
    for t in range(1, L):
        out[t] = min(int(np.searchsorted(cum[out[t - 1]], rng.random(), side="right")), R - 1)
    return out


def _user_chain(profile: MobilityProfile) -> tuple[np.ndarray, np.ndarray]:
    P = profile.p[:, 0, 0, :].copy()
    R = len(P)
    dead = ~profile.observed[:, 0, 0]
    if dead.any():
        logger.debug("user %s: %d dead-end rows replaced by uniform", profile.user, int(dead.sum()))
        P[dead] = 1.0 / R
    return profile.pi[0], P


def baseline_fakes(kind: str, L: int, n: int, rng=None, model: Optional[AggregateModel] = None,
                   profile: Optional[MobilityProfile] = None, n_locations: Optional[int] = None) -> list[np.ndarray]:
    """``n`` fake location sequences of length ``L`` from one of the reference generators."""
    rng = np.random.default_rng(rng)
    if kind == "uniform_iid":
        R = n_locations if n_locations is not None else model.n_locations
        return [rng.integers(0, R, size=L) for _ in range(n)]
    if kind == "aggregate_iid":
        pi = model.pi_bar[0]
        return [rng.choice(len(pi), size=L, p=pi) for _ in range(n)]
    if kind == "rw_aggregate":
        return [_sample_chain(model.pi_bar[0], model.transition, L, rng) for _ in range(n)]
    if kind == "rw_user":
        if profile is None:
            raise ValueError("rw_user needs the user's own profile")
        init, P = _user_chain(profile)
        return [_sample_chain(init, P, L, rng) for _ in range(n)]
    raise ValueError(f"unknown baseline {kind!r}")


@dataclass
class ScenarioResult:
    rows: list = field(default_factory=list)

    COLUMNS = ("method", "num_fakes", "beta", "user", "privacy", "diversity_overhead", "semantic_overhead")

    def summary(self) -> list[dict]:
        """Median-over-users privacy and mean overheads per method and fake count."""
        out = []
        keys = sorted({(r["method"], r["num_fakes"]) for r in self.rows}, key=lambda k: (_method_rank(k[0]), k[1]))
        for method, nf in keys:
            sel = [r for r in self.rows if r["method"] == method and r["num_fakes"] == nf]
            out.append({
                "method": method,
                "num_fakes": nf,
                "beta": sel[0]["beta"],
                "users": len(sel),
                "median_privacy": float(np.median([r["privacy"] for r in sel])),
                "mean_diversity_overhead": float(np.mean([r["diversity_overhead"] for r in sel])),
                "mean_semantic_overhead": float(np.mean([r["semantic_overhead"] for r in sel])),
            })
        return out

    def lookup(self, method: str, num_fakes: int) -> dict:
        for row in self.summary():
            if row["method"] == method and row["num_fakes"] == num_fakes:
                return row
        raise KeyError((method, num_fakes))


def _method_rank(m):
    order = (OURS,) + BASELINES
    return order.index(m) if m in order else len(order)


def run_scenario(
    truths: Mapping[str, Trace],
    model: AggregateModel,
    classes: SemanticClasses,
    methods: Sequence[str] = (OURS,) + BASELINES,
    num_fakes: Sequence[int] = (1, 5, 10),
    beta: float = 0.5,
    selections: int = 4,
    exposures: int = 5,
    seed: int = 0,
    pools: Optional[Mapping[str, Sequence]] = None,
    profiles: Optional[Mapping[str, MobilityProfile]] = None,
    period_map=None,
) -> ScenarioResult:
    """Average attack error and overheads over ``selections x exposures`` trials per user.

    Fakes for ``ours`` are drawn from the user's pool by likelihood; baseline
    fakes are regenerated for every selection.
    """
    if OURS in methods and pools is None:
        raise ValueError("method 'ours' needs a pool of generated fakes")
    result = ScenarioResult()
    for mi, method in enumerate(methods):
        for ni, nf in enumerate(num_fakes):
            for ui, (user, truth) in enumerate(truths.items()):
                L = len(truth)
                acc = []
                for s in range(selections):
                    srng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(mi, ni, ui, s)))
                    if nf == 0:
                        fakes = []
                    elif method == OURS:
                        pool = list(pools.get(user, ()))
                        if not pool:
                            raise ValueError(f"empty pool for user {user!r}")
                        fakes = [f.locations for f in sample_by_likelihood(pool, nf, srng)]
                    else:
                        prof = profiles.get(user) if profiles else None
                        fakes = baseline_fakes(method, L, nf, srng, model=model, profile=prof)
                    for e in range(exposures):
                        erng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(mi, ni, ui, s, e + 1)))
                        rec = expose(truth, fakes, beta, erng)
                        acc.append(attack(rec, model, classes, period_map))
                result.rows.append({
                    "method": method,
                    "num_fakes": int(nf),
                    "beta": float(beta),
                    "user": user,
                    "privacy": float(np.mean([a.privacy for a in acc])),
                    "diversity_overhead": float(np.mean([a.diversity_overhead for a in acc])),
                    "semantic_overhead": float(np.mean([a.semantic_overhead for a in acc])),
                })
    return result
