"""End-to-end orchestration: learn, cluster, generate, attack and report."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from sklearn.metrics import adjusted_rand_score

from . import plotting, stats, store
from .attack import OURS, ScenarioResult, run_scenario
from .config import PipelineConfig, write_manifest
from .corpus import Corpus, SynthSpec, save_coordinates, save_corpus, synth_corpus
from .generator import GenerationParams, Pool, generate_pool
from .metrics import geographic_similarity, semantic_similarity
from .mobility import DistanceFunction, HAMMING, MobilityProfile, PeriodMap, aggregate_model, learn_profile
from .privacy import PrivacyAuditor, PrivacyParams
from .semantics import build_semantic_graph, cluster_graph, pairwise_semantic, select_cluster_count

logger = logging.getLogger(__name__)


class PipelineFailure(RuntimeError):
    """The run cannot produce its artifacts (e.g. no seed yields a fake)."""


def synth_spec(cfg: PipelineConfig) -> SynthSpec:
    return SynthSpec(
        users=cfg.synth_users, n_locations=cfg.synth_locations, length=cfg.synth_length, days=cfg.synth_days,
        roles=cfg.synth_roles, noise=cfg.synth_noise, extent=cfg.synth_extent, spread=cfg.synth_spread,
    )


def period_map(cfg: PipelineConfig) -> Optional[PeriodMap]:
    return PeriodMap(cfg.period_boundaries, cfg.slots_per_day) if cfg.period_boundaries else None


def distance(cfg: PipelineConfig, corpus: Corpus) -> DistanceFunction:
    if cfg.distance == "hamming":
        return HAMMING
    if corpus.coordinates is None:
        raise ValueError("euclidean distance needs location coordinates")
    return DistanceFunction("euclidean", corpus.coordinates)


def _similarity_kwargs(cfg: PipelineConfig) -> dict:
    return {"rng": cfg.seed_anneal} if cfg.order == "first" else {}


@dataclass
class Context:
    """A corpus prepared for a run: train/test halves and the seed/alternate roles."""

    cfg: PipelineConfig
    corpus: Corpus
    train: Corpus
    test: Optional[Corpus]
    seeds: list
    alternates: list
    period_map: Optional[PeriodMap] = None
    distance: DistanceFunction = HAMMING
    profiles: dict = field(default_factory=dict)

    @property
    def n_locations(self) -> int:
        return self.corpus.n_locations

    def seed_traces(self):
        return [self.train.trace(u) for u in self.seeds]

    def alternate_traces(self):
        return [self.train.trace(u) for u in self.alternates]


def prepare(corpus: Corpus, cfg: PipelineConfig) -> Context:
    """Split by ``split_slot`` (no split if the traces are not longer) and assign roles.

    Alternates are the configured users, or else the last ``num_alternates``
    users in corpus order. Every other user is a seed.
    """
    if corpus.length > cfg.split_slot:
        train, test = corpus.split(cfg.split_slot)
    else:
        train, test = corpus, None
    users = corpus.users
    if cfg.alternates:
        unknown = sorted(set(cfg.alternates) - set(users))
        if unknown:
            raise ValueError(f"alternates not in corpus: {unknown}")
        alternates = [u for u in users if u in set(cfg.alternates)]
    else:
        n = cfg.num_alternates if cfg.deniability else 0
        alternates = users[len(users) - n:] if n else []
    seeds = [u for u in users if u not in set(alternates)]
    if not seeds:
        raise ValueError("no seed users left after removing alternates")
    if cfg.deniability and len(alternates) < cfg.anonymity_k - 1:
        raise ValueError(f"need at least {cfg.anonymity_k - 1} alternates for k={cfg.anonymity_k}")
    return Context(cfg, corpus, train, test, seeds, alternates, period_map(cfg), distance(cfg, corpus))


def learn(ctx: Context) -> dict:
    ctx.profiles = {t.user: learn_profile(t, ctx.n_locations, ctx.period_map) for t in ctx.train}
    return ctx.profiles


@dataclass
class Semantics:
    graph: object
    classes: object
    scores: dict
    pairwise: dict
    users: list


def semantics(ctx: Context) -> Semantics:
    cfg = ctx.cfg
    users = ctx.train.users
    profs = [ctx.profiles[u] for u in users]
    pairwise = pairwise_semantic(profs, order=cfg.order, **_similarity_kwargs(cfg))
    graph = build_semantic_graph(profs, order=cfg.order, pairwise=pairwise)
    if cfg.k is not None:
        k, scores = cfg.k, {}
    else:
        hi = min(cfg.k_max, graph.n_locations)
        k, scores = select_cluster_count(graph, (cfg.k_min, hi), cfg.seed_cluster, cfg.restarts, return_scores=True)
    classes = cluster_graph(graph, k, cfg.seed_cluster, cfg.restarts)
    return Semantics(graph, classes, scores, pairwise, users)


def model(ctx: Context):
    return aggregate_model([ctx.profiles[u] for u in ctx.train.users], ctx.distance, ctx.cfg.epsilon)


def privacy_params(ctx: Context) -> PrivacyParams:
    cfg = ctx.cfg
    return PrivacyParams(
        par_s=cfg.par_s, par_i=cfg.par_i, par_d=cfg.par_d, k=cfg.anonymity_k,
        alternates=tuple(ctx.alternate_traces()), deniability=cfg.deniability,
        geo_direction=cfg.geo_direction, order=cfg.order,
    )


def generation_params(cfg: PipelineConfig) -> GenerationParams:
    return GenerationParams(cfg.par_c, cfg.par_l, cfg.par_m, cfg.par_v)


def generate(ctx: Context, classes, agg) -> Pool:
    cfg = ctx.cfg
    pool = generate_pool(
        ctx.seed_traces(), classes, agg, generation_params(cfg), privacy_params(ctx),
        cfg.count_per_seed, cfg.seed_generate, cfg.attempt_factor, ctx.period_map,
    )
    if len(pool.exhausted) == len(ctx.seeds):
        raise PipelineFailure("attempt cap exhausted on every seed: no fake passed the privacy test")
    return pool


def audit(ctx: Context, pool: Pool) -> list:
    """Independent re-run of the privacy test on every fake of a pool."""
    auditor = PrivacyAuditor(privacy_params(ctx), ctx.n_locations, ctx.period_map)
    out = []
    for f in pool.fakes:
        if f.seed_user not in ctx.seeds:
            raise ValueError(f"fake {f.fake_id!r} names unknown seed {f.seed_user!r}")
        seed = ctx.train.trace(f.seed_user)
        out.append((f, auditor.test(f, seed, ctx.profiles.get(f.seed_user))))
    return out


def published_seeds(ctx: Context, pool: Pool) -> list:
    return [u for u in ctx.seeds if pool.for_seed(u)]


def scenario(ctx: Context, agg, classes, pool: Pool) -> ScenarioResult:
    """LBS runs on the held-back half of each seed user (the training half if unsplit)."""
    cfg = ctx.cfg
    users = published_seeds(ctx, pool)
    source = ctx.test if ctx.test is not None else ctx.train
    truths = {u: source.trace(u) for u in users}
    pools = {u: pool.for_seed(u) for u in users}
    for u, t in truths.items():
        if OURS in cfg.methods and len(pools[u][0]) != len(t):
            raise ValueError(f"fakes of {u!r} have length {len(pools[u][0])}, evaluation trace has {len(t)}")
    return run_scenario(
        truths, agg, classes, cfg.methods, cfg.num_fakes, cfg.beta, cfg.selections, cfg.exposures,
        cfg.seed_scenario, pools, ctx.profiles, ctx.period_map,
    )


def fake_corpora(ctx: Context, pool: Pool) -> list[list]:
    """``fake_corpora`` datasets of one fake per published seed, taken in pool order."""
    users = published_seeds(ctx, pool)
    return [[pool.for_seed(u)[j % len(pool.for_seed(u))] for u in users] for j in range(ctx.cfg.fake_corpora)]


@dataclass
class PublishingStats:
    spatial: dict
    spatial_top: dict
    time: list
    aggregate: dict
    qq_points: tuple
    qq_correlation: float
    real_pair_similarity: np.ndarray
    fake_pair_similarity: np.ndarray
    fake_seed_similarity: np.ndarray
    differential: np.ndarray


def _spatial_row(real, testing, fakes_dists, floor):
    total = real.counts.sum()
    n = len(real)
    kls = [stats.kl_divergence(real, f, floor) for f in fakes_dists]
    return {
        "testing": stats.kl_divergence(real, testing, floor) if testing is not None else float("nan"),
        "fakes_mean": float(np.mean(kls)),
        "fakes_std": float(np.std(kls)),
        "uniform": stats.kl_divergence(real, stats.uniform_allocation(n, total), floor),
        "single": stats.kl_divergence(real, stats.single_allocation(n, total), floor),
    }


def publishing_stats(ctx: Context, pool: Pool, agg=None) -> PublishingStats:
    """Tables of allocation divergences, aggregate-model similarity and similarity samples.

    Aggregate similarity is measured against ``agg``, the model the fakes were
    decoded with (rebuilt from the training half if not given).
    """
    cfg = ctx.cfg
    R = ctx.n_locations
    users = published_seeds(ctx, pool)
    real = [ctx.train.trace(u) for u in users]
    testing = [ctx.test.trace(u) for u in users] if ctx.test is not None else None
    corpora = fake_corpora(ctx, pool)
    floor = cfg.kl_floor

    def alloc(ds, top=None):
        return stats.spatial_allocation(ds, R, top)

    spatial = _spatial_row(alloc(real), alloc(testing) if testing else None, [alloc(c) for c in corpora], floor)
    m = min(cfg.top_m, R)
    spatial_top = _spatial_row(alloc(real, m), alloc(testing, m) if testing else None, [alloc(c, m) for c in corpora], floor)

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed_stats))
    ta_real = stats.time_allocation(real, cfg.top_k)
    ta_test = stats.time_allocation(testing, cfg.top_k) if testing else None
    ta_fakes = [stats.time_allocation(c, cfg.top_k) for c in corpora]
    ta_uniform = stats.uniform_time_allocation(len(real), cfg.top_k)
    ta_random = stats.random_time_allocation(len(real), cfg.top_k, rng)
    time_rows = []
    for k in range(cfg.top_k):
        kls = [stats.kl_divergence(ta_real[k], f[k], floor) for f in ta_fakes]
        time_rows.append({
            "rank": k + 1,
            "testing": stats.kl_divergence(ta_real[k], ta_test[k], floor) if ta_test else float("nan"),
            "fakes_mean": float(np.mean(kls)),
            "fakes_std": float(np.std(kls)),
            "uniform": stats.kl_divergence(ta_real[k], ta_uniform[k], floor),
            "random": stats.kl_divergence(ta_real[k], ta_random[k], floor),
        })

    real_profiles = [ctx.profiles[u] for u in users]
    fake_profiles = [[learn_profile(f.to_trace(), R, ctx.period_map) for f in c] for c in corpora]
    if agg is None:
        agg = model(ctx)
    fake_aggs = [aggregate_model(fp, ctx.distance, cfg.epsilon, stationarity_warn=np.inf) for fp in fake_profiles]
    agg_report = stats.aggregate_similarity_report(agg, fake_aggs)

    kw = _similarity_kwargs(cfg)
    def pair_sims(profs):
        return np.array([semantic_similarity(a, b, cfg.order, **kw).score for a, b in itertools.permutations(profs, 2)])

    real_sim = pair_sims(real_profiles)
    fake_sim = np.concatenate([pair_sims(fp) for fp in fake_profiles])
    qq = stats.quantile_pairs(real_sim, fake_sim)
    try:
        qq_r = stats.qq_correlation(real_sim, fake_sim)
    except ValueError:
        logger.warning("Q-Q correlation undefined: a similarity sample is constant")
        qq_r = float("nan")

    auditor = PrivacyAuditor(privacy_params(ctx), R, ctx.period_map)
    fake_seed, differential = [], []
    for f in pool.fakes:
        fp = learn_profile(f.to_trace(), R, ctx.period_map)
        own = semantic_similarity(ctx.profiles[f.seed_user], fp, cfg.order, **kw).score
        fake_seed.append(semantic_similarity(fp, ctx.profiles[f.seed_user], cfg.order, **kw).score)
        for alt in auditor.alternate_profiles:
            differential.append(abs(own - semantic_similarity(alt, fp, cfg.order, **kw).score))

    return PublishingStats(spatial, spatial_top, time_rows, agg_report, qq, qq_r, real_sim, fake_sim,
                           np.array(fake_seed), np.array(differential))


@dataclass
class RunResult:
    ctx: Context
    semantics: Semantics
    model: object
    pool: Pool
    scenario: Optional[ScenarioResult]
    stats: Optional[PublishingStats]
    summary: dict
    outputs: list


def _pair_rows(ctx: Context, sem: Semantics):
    for (i, j), res in sorted(sem.pairwise.items()):
        u, v = sem.users[i], sem.users[j]
        g = geographic_similarity(ctx.profiles[u], ctx.profiles[v], ctx.distance).score
        yield {"u": u, "v": v, "geographic": g, "semantic": res.score}


SUMMARY_HEADER = ("metric", "value")
SCENARIO_SUMMARY_HEADER = ("method", "num_fakes", "beta", "users", "median_privacy",
                           "mean_diversity_overhead", "mean_semantic_overhead")
SPATIAL_HEADER = ("testing", "fakes_mean", "fakes_std", "uniform", "single")
TIME_HEADER = ("rank", "testing", "fakes_mean", "fakes_std", "uniform", "random")


def run(corpus: Corpus, cfg: PipelineConfig, out_dir, inputs: Sequence = (), with_scenario: bool = True,
        with_stats: bool = True, figures: bool = True) -> RunResult:
    """Run every stage and write CSV reports, figures and a manifest to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def path(name):
        p = out / name
        written.append(p)
        return p

    ctx = prepare(corpus, cfg)
    learn(ctx)
    store.save_profiles([ctx.profiles[u] for u in ctx.train.users], path("profiles_transitions.csv"), path("profiles_visits.csv"))
    sem = semantics(ctx)
    pair_rows = list(_pair_rows(ctx, sem))
    store.write_dicts(path("similarity.csv"), ("u", "v", "geographic", "semantic"), pair_rows)
    store.save_graph(sem.graph, path("graph.csv"))
    store.save_classes(sem.classes, path("classes.csv"))
    if sem.scores:
        store.write_rows(path("cluster_scores.csv"), ("k", "quality"), sorted(sem.scores.items()))
    agg = model(ctx)
    store.save_aggregate(agg, path("aggregate_transitions.csv"), path("aggregate_visits.csv"))

    pool = generate(ctx, sem.classes, agg)
    store.save_pool(pool, path("pool.csv"), path("pool_sidecar.csv"), path("rejections.csv"))

    geo = np.array([r["geographic"] for r in pair_rows])
    semv = np.array([r["semantic"] for r in pair_rows])
    summary = {
        "users": len(corpus),
        "seeds": len(ctx.seeds),
        "alternates": len(ctx.alternates),
        "n_locations": ctx.n_locations,
        "k": sem.classes.k,
        "stationarity_gap": agg.stationarity_gap,
        "pool_size": len(pool.fakes),
        "acceptance_rate": pool.acceptance_rate,
        "exhausted_seeds": len(pool.exhausted),
        "median_geographic_similarity": float(np.median(geo)),
        "median_semantic_similarity": float(np.median(semv)),
    }
    if corpus.roles is not None:
        summary["role_recovery_ari"] = float(adjusted_rand_score(corpus.roles, sem.classes.partition))

    scen = None
    if with_scenario:
        scen = scenario(ctx, agg, sem.classes, pool)
        store.write_dicts(path("scenario.csv"), ScenarioResult.COLUMNS, scen.rows)
        store.write_dicts(path("scenario_summary.csv"), SCENARIO_SUMMARY_HEADER, scen.summary())

    pstats = None
    if with_stats:
        pstats = publishing_stats(ctx, pool, agg)
        store.write_dicts(path("table_spatial.csv"), SPATIAL_HEADER, [pstats.spatial])
        store.write_dicts(path("table_spatial_top.csv"), SPATIAL_HEADER, [pstats.spatial_top])
        store.write_dicts(path("table_time.csv"), TIME_HEADER, pstats.time)
        store.write_rows(path("aggregate_similarity.csv"), ("statistic", "mean", "median", "std"),
                         [(name, *vals) for name, vals in pstats.aggregate.items()])
        qa, qb = pstats.qq_points
        store.write_rows(path("qq.csv"), ("quantile", "real", "fake"),
                         ((i + 1, a, b) for i, (a, b) in enumerate(zip(qa, qb))))
        summary["qq_correlation"] = pstats.qq_correlation
        summary["median_fake_seed_similarity"] = float(np.median(pstats.fake_seed_similarity))
        summary["median_real_pair_similarity"] = float(np.median(pstats.real_pair_similarity))

    if figures:
        plotting.similarity_histograms(geo, semv, path("fig_similarity.png"))
        if pstats is not None:
            plotting.qq_plot(*pstats.qq_points, path("fig_qq.png"))
            plotting.histogram(pstats.fake_seed_similarity, path("fig_fake_seed_similarity.png"), "semantic similarity (fake, seed)")
            plotting.histogram(pstats.differential, path("fig_differential_similarity.png"), "differential semantic similarity")
        if scen is not None:
            plotting.privacy_tradeoff(scen.summary(), path("fig_privacy.png"))

    store.write_rows(path("summary.csv"), SUMMARY_HEADER, summary.items())
    write_manifest(out / "manifest_run.json", "run", cfg, inputs, written)
    return RunResult(ctx, sem, agg, pool, scen, pstats, summary, written)


def synthesize(cfg: PipelineConfig, out_dir) -> tuple[Corpus, list]:
    """Write a planted synthetic corpus with coordinates and true roles."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = synth_corpus(synth_spec(cfg), cfg.seed_synth)
    paths = [out / "corpus.csv", out / "coordinates.csv", out / "roles.csv"]
    save_corpus(corpus, paths[0])
    save_coordinates(corpus.coordinates, paths[1])
    store.write_rows(paths[2], ("location", "role"), enumerate(corpus.roles.tolist()))
    return corpus, paths
