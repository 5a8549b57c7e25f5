"""Rejection tests applied to every generated fake trace."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .metrics import geographic_similarity, semantic_similarity
from .mobility import MobilityProfile, Trace, learn_profile

GEOGRAPHIC = "geographic"
INTERSECTION = "intersection"
DENIABILITY = "deniability"


@dataclass(frozen=True)
class PrivacyParams:
    """Thresholds of the three tests.

    ``alternates`` are real traces excluded from seeding, used as plausible
    alternative seeds. ``geo_direction`` is ``"fake_seed"`` (sim_G(fake, seed))
    or ``"max"`` (the larger of both directions).
    """

    par_s: float = 0.1
    par_i: int = 0
    par_d: float = 0.1
    k: int = 2
    alternates: tuple = ()
    deniability: bool = True
    geo_direction: str = "fake_seed"
    order: str = "zeroth"

    def __post_init__(self):
        if not 0 <= self.par_s <= 1 or not 0 <= self.par_d <= 1:
            raise ValueError("par_s and par_d must be in [0, 1]")
        if self.par_i < 0:
            raise ValueError("par_i must be >= 0")
        if self.k < 2:
            raise ValueError("anonymity set size k must be >= 2")
        if self.geo_direction not in ("fake_seed", "max"):
            raise ValueError(f"unknown geo_direction {self.geo_direction!r}")
        object.__setattr__(self, "alternates", tuple(self.alternates))
        if self.deniability and not self.alternates:
            raise ValueError("deniability test needs at least one alternate trace")


@dataclass(frozen=True)
class Verdict:
    passed: bool
    sim_g: float
    intersection: int
    deniability_witnesses: int
    failure_reasons: frozenset = frozenset()

    def __str__(self):
        return "pass" if self.passed else "fail:" + "+".join(sorted(self.failure_reasons))


def _locations(x) -> np.ndarray:
    return np.asarray(getattr(x, "locations", x))


def intersection(fake, seed) -> int:
    """Number of slots where the fake visits the seed's location."""
    a, b = _locations(fake), _locations(seed)
    if len(a) != len(b):
        raise ValueError(f"length mismatch: fake {len(a)} vs seed {len(b)}")
    return int(np.count_nonzero(a == b))


def _as_trace(x) -> Trace:
    if isinstance(x, Trace):
        return x
    if hasattr(x, "to_trace"):
        return x.to_trace()
    return Trace("trace", _locations(x))


class PrivacyAuditor:
    """Runs :func:`privacy_test` with alternate profiles learned once."""

    def __init__(self, params: PrivacyParams, n_locations: int, period_map=None):
        self.params = params
        self.n_locations = n_locations
        self.period_map = period_map
        self.alternate_profiles = [learn_profile(_as_trace(a), n_locations, period_map) for a in params.alternates]

    def test(self, fake, seed, seed_profile: Optional[MobilityProfile] = None) -> Verdict:
        p = self.params
        seed_trace = _as_trace(seed)
        if seed_profile is None:
            seed_profile = learn_profile(seed_trace, self.n_locations, self.period_map)
        fake_profile = learn_profile(_as_trace(fake), self.n_locations, self.period_map)

        sim_g = geographic_similarity(fake_profile, seed_profile).score
        if p.geo_direction == "max":
            sim_g = max(sim_g, geographic_similarity(seed_profile, fake_profile).score)
        inter = intersection(fake, seed_trace)

        witnesses = 0
        ok_dp = True
        if p.deniability:
            if not self.alternate_profiles:
                raise ValueError("deniability test needs at least one alternate trace")
            own = semantic_similarity(seed_profile, fake_profile, p.order).score
            for alt in self.alternate_profiles:
                if abs(own - semantic_similarity(alt, fake_profile, p.order).score) < p.par_d:
                    witnesses += 1
            ok_dp = witnesses >= p.k - 1

        reasons = set()
        if not sim_g < p.par_s:
            reasons.add(GEOGRAPHIC)
        if not inter <= p.par_i:
            reasons.add(INTERSECTION)
        if not ok_dp:
            reasons.add(DENIABILITY)
        return Verdict(not reasons, sim_g, inter, witnesses, frozenset(reasons))


def privacy_test(fake, seed, params: PrivacyParams, n_locations: int, period_map=None) -> Verdict:
    """Geographic-similarity, intersection and plausible-deniability tests.

    Passes iff sim_G(fake, seed) < par_s, the slot-aligned intersection is at
    most par_i, and at least k-1 alternates s' satisfy
    ``|sim_S(seed, fake) - sim_S(s', fake)| < par_d``.
    """
    return PrivacyAuditor(params, n_locations, period_map).test(fake, seed)
