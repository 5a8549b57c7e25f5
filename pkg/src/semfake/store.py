"""CSV readers and writers for intermediate and final artifacts."""
from __future__ import annotations

import csv
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import CorpusError, _read_rows
from .generator import FakeTrace, Pool
from .mobility import AggregateModel, MobilityProfile, Trace
from .semantics import SemanticClasses, SemanticGraph


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def write_dicts(path, header: Sequence[str], rows: Iterable[dict]) -> Path:
    return write_rows(path, header, ([r[h] for h in header] for r in rows))


# profiles and aggregate model

TRANSITION_HEADER = ("user", "r", "tau", "tau_next", "rprime", "probability")
VISIT_HEADER = ("user", "tau", "location", "probability")


def _transition_rows(name, p, observed=None):
    idx = np.argwhere(p > 0)
    for r, a, b, s in idx:
        yield (name, int(r), int(a), int(b), int(s), float(p[r, a, b, s]))


def save_profiles(profiles: Sequence[MobilityProfile], transitions_path, visits_path) -> None:
    """Nonzero entries only; an unobserved row simply has no entries."""
    write_rows(transitions_path, TRANSITION_HEADER,
               (row for pr in profiles for row in _transition_rows(pr.user, pr.p)))
    write_rows(visits_path, VISIT_HEADER,
               ((pr.user, int(t), int(r), float(pr.pi[t, r])) for pr in profiles for t, r in np.argwhere(pr.pi > 0)))


def save_aggregate(model: AggregateModel, transitions_path, visits_path) -> None:
    write_rows(transitions_path, TRANSITION_HEADER, _transition_rows("aggregate", model.p_bar))
    write_rows(visits_path, VISIT_HEADER,
               (("aggregate", int(t), int(r), float(model.pi_bar[t, r])) for t, r in np.argwhere(model.pi_bar > 0)))


# semantics

def save_classes(classes: SemanticClasses, path) -> None:
    write_rows(path, ("location", "class"), enumerate(classes.partition.tolist()))


def load_classes(path) -> SemanticClasses:
    part = {}
    for lineno, (loc, cls) in _read_rows(path, ("location", "class")):
        try:
            part[int(loc)] = int(cls)
        except ValueError:
            raise CorpusError(f"{path}:{lineno}: malformed class row") from None
    if not part or sorted(part) != list(range(len(part))):
        raise CorpusError(f"{path}: classes must cover locations 0..R-1")
    try:
        return SemanticClasses(np.array([part[r] for r in range(len(part))]))
    except ValueError as exc:
        raise CorpusError(f"{path}: {exc}") from None


def save_graph(graph: SemanticGraph, path) -> None:
    write_rows(path, ("r", "rprime", "weight"), graph.edges())


def load_graph(path, n_locations: int) -> SemanticGraph:
    W = np.zeros((n_locations, n_locations))
    for lineno, (r, s, w) in _read_rows(path, ("r", "rprime", "weight")):
        a, b = int(r), int(s)
        if not (0 <= a < n_locations and 0 <= b < n_locations) or a == b:
            raise CorpusError(f"{path}:{lineno}: bad edge ({a}, {b})")
        W[a, b] = W[b, a] = float(w)
    return SemanticGraph(W, np.zeros(n_locations))


# pools

POOL_HEADER = ("seed_user", "fake_id", "slot", "location")
SIDECAR_HEADER = ("fake_id", "log_likelihood", "verdict")
REJECTION_HEADER = ("seed_user", "reason", "count")


def save_pool(pool: Pool, pool_path, sidecar_path, rejections_path) -> None:
    write_rows(pool_path, POOL_HEADER,
               ((f.seed_user, f.fake_id, s, r) for f in pool.fakes for s, r in zip(f.slots.tolist(), f.locations.tolist())))
    write_rows(sidecar_path, SIDECAR_HEADER,
               ((f.fake_id, f.log_likelihood, str(f.verdict) if f.verdict is not None else "") for f in pool.fakes))
    write_rows(rejections_path, REJECTION_HEADER,
               ((u, reason, n) for (u, reason), n in sorted(pool.rejections.items())))


def load_pool(pool_path, sidecar_path=None) -> Pool:
    """Fakes in file order; likelihoods and verdict strings come from the sidecar."""
    fakes: dict[str, dict] = {}
    for lineno, (user, fid, slot, loc) in _read_rows(pool_path, POOL_HEADER):
        try:
            s, r = int(slot), int(loc)
        except ValueError:
            raise CorpusError(f"{pool_path}:{lineno}: slot and location must be integers") from None
        entry = fakes.setdefault(fid, {"user": user, "slots": [], "locs": []})
        if entry["user"] != user:
            raise CorpusError(f"{pool_path}:{lineno}: fake {fid!r} listed under two seed users")
        entry["slots"].append(s)
        entry["locs"].append(r)
    side = {}
    if sidecar_path is not None:
        for lineno, (fid, ll, verdict) in _read_rows(sidecar_path, SIDECAR_HEADER):
            side[fid] = (float(ll), verdict)
    out = []
    for fid, e in fakes.items():
        order = np.argsort(e["slots"], kind="stable")
        slots = np.asarray(e["slots"])[order]
        if not np.array_equal(slots, np.arange(slots[0], slots[0] + len(slots))):
            raise CorpusError(f"{pool_path}: fake {fid!r} slots are not contiguous")
        ll, verdict = side.get(fid, (float("nan"), None))
        out.append(FakeTrace(e["user"], np.asarray(e["locs"])[order], ll, int(slots[0]), fid, verdict))
    return Pool(out, Counter(), {}, [])


def pool_corpus_traces(pool: Pool) -> list[Trace]:
    return [f.to_trace() for f in pool.fakes]
