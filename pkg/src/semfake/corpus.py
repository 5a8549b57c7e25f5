"""Trace corpora: CSV files, planted synthetic corpora, coarsening and splitting."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .mobility import Trace

logger = logging.getLogger(__name__)


class CorpusError(ValueError):
    """A trace or coordinate file does not conform to the expected layout."""


@dataclass(frozen=True, eq=False)
class Corpus:
    traces: tuple
    n_locations: int
    length: int
    coordinates: Optional[np.ndarray] = None
    roles: Optional[np.ndarray] = None

    def __post_init__(self):
        traces = tuple(self.traces)
        object.__setattr__(self, "traces", traces)
        users = [t.user for t in traces]
        if len(set(users)) != len(users):
            raise CorpusError("duplicate users in corpus")
        for t in traces:
            if len(t) != self.length:
                raise CorpusError(f"trace {t.user!r} has length {len(t)}, corpus length is {self.length}")
            if len(t) and t.locations.max() >= self.n_locations:
                raise CorpusError(f"trace {t.user!r} visits unknown location {t.locations.max()}")
        if self.coordinates is not None and len(self.coordinates) != self.n_locations:
            raise CorpusError("coordinates do not cover every location")

    @property
    def users(self) -> list[str]:
        return [t.user for t in self.traces]

    def __len__(self):
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def trace(self, user: str) -> Trace:
        for t in self.traces:
            if t.user == user:
                return t
        raise KeyError(user)

    def subset(self, users: Sequence[str]) -> "Corpus":
        keep = set(users)
        return Corpus(tuple(t for t in self.traces if t.user in keep), self.n_locations, self.length, self.coordinates, self.roles)

    def split(self, boundary: int) -> tuple["Corpus", "Corpus"]:
        """Slots before ``boundary`` and from ``boundary`` on, each renumbered from 0."""
        if not 0 < boundary < self.length:
            raise CorpusError(f"split slot {boundary} outside (0, {self.length})")
        first = tuple(t.window(0, boundary) for t in self.traces)
        second = tuple(t.window(boundary, self.length) for t in self.traces)
        return (
            Corpus(first, self.n_locations, boundary, self.coordinates, self.roles),
            Corpus(second, self.n_locations, self.length - boundary, self.coordinates, self.roles),
        )


def _read_rows(path, header: Sequence[str]):
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"{path}: no such file")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise CorpusError(f"{path}: empty file")
        if [c.strip() for c in first] != list(header):
            raise CorpusError(f"{path}: header must be {','.join(header)}, got {','.join(first)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CorpusError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, [c.strip() for c in row]


def load_coordinates(path) -> np.ndarray:
    rows = {}
    for lineno, (loc, x, y) in _read_rows(path, ("location", "x", "y")):
        try:
            r = int(loc)
            rows[r] = (float(x), float(y))
        except ValueError:
            raise CorpusError(f"{path}:{lineno}: malformed coordinate row") from None
    if not rows:
        raise CorpusError(f"{path}: no coordinates")
    R = max(rows) + 1
    missing = sorted(set(range(R)) - set(rows))
    if missing:
        raise CorpusError(f"{path}: missing coordinates for locations {missing[:5]}")
    return np.array([rows[r] for r in range(R)])


def load_corpus(path, n_locations: Optional[int] = None, coordinates=None) -> Corpus:
    """Read a ``user,slot,location`` CSV.

    ``R`` is inferred as max location + 1 unless given. Every user must
    cover the slots ``0..L-1`` exactly once, with the same ``L`` for all users.
    """
    events: dict[str, dict[int, int]] = {}
    seen_at: dict[tuple, int] = {}
    for lineno, (user, slot, loc) in _read_rows(path, ("user", "slot", "location")):
        try:
            s, r = int(slot), int(loc)
        except ValueError:
            raise CorpusError(f"{path}:{lineno}: slot and location must be integers") from None
        if s < 0 or r < 0:
            raise CorpusError(f"{path}:{lineno}: negative slot or location")
        if n_locations is not None and r >= n_locations:
            raise CorpusError(f"{path}:{lineno}: unknown location {r} (R={n_locations})")
        key = (user, s)
        if key in seen_at:
            raise CorpusError(f"{path}:{lineno}: duplicate slot {s} for user {user!r} (first at line {seen_at[key]})")
        seen_at[key] = lineno
        events.setdefault(user, {})[s] = r
    if not events:
        raise CorpusError(f"{path}: no events")
    lengths = {}
    traces = []
    for user, by_slot in events.items():
        L = len(by_slot)
        if sorted(by_slot) != list(range(L)):
            raise CorpusError(f"{path}: user {user!r} slots are not contiguous from 0")
        lengths[user] = L
        traces.append(Trace(user, [by_slot[s] for s in range(L)]))
    if len(set(lengths.values())) != 1:
        raise CorpusError(f"{path}: ragged trace lengths {sorted(set(lengths.values()))}")
    R = n_locations if n_locations is not None else max(int(t.locations.max()) for t in traces) + 1
    coords = load_coordinates(coordinates) if isinstance(coordinates, (str, Path)) else coordinates
    if coords is not None and len(coords) < R:
        raise CorpusError("coordinates file covers fewer locations than the traces use")
    if coords is not None:
        R = len(coords)
    return Corpus(tuple(traces), R, traces[0].__len__(), coords)


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "slot", "location"])
        for t in corpus.traces:
            for s, r in t.events():
                w.writerow([t.user, s, r])


def save_coordinates(coords, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["location", "x", "y"])
        for r, (x, y) in enumerate(np.asarray(coords)):
            w.writerow([r, repr(float(x)), repr(float(y))])


@dataclass(frozen=True)
class SynthSpec:
    """Planted-semantics corpus: users with private locations sharing one role chain."""

    users: int = 20
    n_locations: int = 60
    length: int = 72
    days: int = 1
    roles: int = 3
    role_chain: Optional[tuple] = None
    noise: float = 0.05
    extent: float = 100.0
    spread: float = 2.0

    def chain(self) -> np.ndarray:
        if self.role_chain is not None:
            P = np.asarray(self.role_chain, dtype=float)
        elif self.roles == 3:
            # stationary (0.6, 0.3, 0.1), mildly sticky: role masses stay separated over one day
            P = np.array([[0.70, 0.225, 0.075], [0.45, 0.475, 0.075], [0.45, 0.225, 0.325]])
        else:
            P = np.full((self.roles, self.roles), 0.2 / max(self.roles - 1, 1))
            np.fill_diagonal(P, 0.8)
        if P.shape != (self.roles, self.roles) or np.abs(P.sum(1) - 1).max() > 1e-9 or (P < 0).any():
            raise ValueError("role chain must be a row-stochastic roles x roles matrix")
        return P


def synth_corpus(spec: SynthSpec = SynthSpec(), seed: int = 0) -> Corpus:
    """Each user owns one location per role; traces follow a shared role chain.

    Extra locations beyond ``users * roles`` become additional private
    locations, assigned round-robin. With probability ``noise`` a slot is
    replaced by a uniformly random location. Ground-truth roles are kept on
    the corpus.
    """
    if spec.users * spec.roles > spec.n_locations:
        raise ValueError(f"{spec.users} users x {spec.roles} roles need more than {spec.n_locations} locations")
    if not 0 <= spec.noise <= 1:
        raise ValueError("noise must be in [0, 1]")
    P = spec.chain()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    R = spec.n_locations
    owner = np.empty(R, dtype=np.int64)
    role = np.empty(R, dtype=np.int64)
    slots = [(u, k) for u in range(spec.users) for k in range(spec.roles)]
    for r in range(R):
        owner[r], role[r] = slots[r % len(slots)]
    # shuffle location ids so roles are not readable from the index
    perm = rng.permutation(R)
    owner, role = owner[perm], role[perm]
    centers = rng.uniform(0, spec.extent, size=(spec.users, 2))
    coords = centers[owner] + rng.normal(0, spec.spread, size=(R, 2))

    total = spec.length * spec.days
    traces = []
    width = len(str(spec.users - 1))
    for u in range(spec.users):
        urng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, u)))
        places = [np.flatnonzero((owner == u) & (role == k)) for k in range(spec.roles)]
        k = 0
        locs = np.empty(total, dtype=np.int64)
        for t in range(total):
            if t > 0:
                k = urng.choice(spec.roles, p=P[k])
            locs[t] = places[k][0] if len(places[k]) == 1 else urng.choice(places[k])
            if spec.noise > 0 and urng.random() < spec.noise:
                locs[t] = urng.integers(R)
        traces.append(Trace(f"u{u:0{width}d}", locs))
    return Corpus(tuple(traces), R, total, coords, role)


def coarsen_locations(coordinates, weights, target: int):
    """Agglomerative merging with cost ``euclidean distance * weight_a * weight_b``.

    Ties go to the geographically closer pair. Merged clusters sit at the
    weighted centroid (plain mean if both weights are zero) and carry the
    summed weight. Returns ``(mapping, new_coordinates, new_weights)`` with
    new indices ordered by each cluster's lowest original index.
    """
    coords = np.asarray(coordinates, dtype=float).copy()
    w = np.asarray(weights, dtype=float).copy()
    R = len(coords)
    if not 1 <= target < R:
        raise ValueError(f"target {target} must be in [1, {R})")
    alive = np.ones(R, dtype=bool)
    cluster = np.arange(R)
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    for _ in range(R - target):
        cost = dist * np.outer(w, w)
        mask = ~(alive[:, None] & alive[None, :]) | np.eye(R, dtype=bool)
        cost = np.where(mask, np.inf, cost)
        masked_dist = np.where(mask, np.inf, dist)
        best = cost.min()
        cand = np.argwhere(cost == best)
        a, b = min(map(tuple, cand), key=lambda ab: (masked_dist[ab], ab))
        a, b = min(a, b), max(a, b)
        tot = w[a] + w[b]
        coords[a] = (w[a] * coords[a] + w[b] * coords[b]) / tot if tot > 0 else 0.5 * (coords[a] + coords[b])
        w[a] = tot
        alive[b] = False
        cluster[cluster == b] = a
        d = np.sqrt(((coords - coords[a]) ** 2).sum(-1))
        dist[a, :] = d
        dist[:, a] = d
    reps = np.flatnonzero(alive)
    new_index = {int(r): i for i, r in enumerate(reps)}
    mapping = np.array([new_index[int(c)] for c in cluster])
    return mapping, coords[reps], w[reps]


def coarsen_corpus(corpus: Corpus, target: int):
    """Apply :func:`coarsen_locations` with visit counts as weights."""
    if corpus.coordinates is None:
        raise CorpusError("coarsening needs location coordinates")
    counts = np.zeros(corpus.n_locations)
    for t in corpus.traces:
        np.add.at(counts, t.locations, 1.0)
    mapping, coords, weights = coarsen_locations(corpus.coordinates, counts, target)
    traces = tuple(Trace(t.user, mapping[t.locations], t.start) for t in corpus.traces)
    return Corpus(traces, target, corpus.length, coords), mapping, weights
