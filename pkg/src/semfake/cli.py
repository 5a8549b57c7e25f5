"""Command line interface.

Exit status: 0 on success, 1 for invalid input or configuration, 2 when the
pipeline runs but cannot produce its result.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline, plotting, store
from .attack import ScenarioResult
from .config import ConfigError, PipelineConfig, write_manifest
from .corpus import Corpus, CorpusError, coarsen_corpus, load_corpus, save_coordinates, save_corpus
from .metrics import geographic_similarity, semantic_similarity

logger = logging.getLogger("semfake")

EXIT_OK, EXIT_INVALID, EXIT_FAILURE = 0, 1, 2


def _common(p: argparse.ArgumentParser, corpus: bool = True) -> None:
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--out", required=True, help="output directory")
    if corpus:
        p.add_argument("--corpus", required=True, help="trace CSV (user,slot,location)")
        p.add_argument("--coordinates", help="coordinates CSV (location,x,y)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semfake", description="Semantically plausible fake location traces.")
    parser.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("synth", help="write a planted synthetic corpus"), corpus=False)
    p = sub.add_parser("split", help="train/test split at split_slot")
    _common(p)
    _common(sub.add_parser("learn", help="per-user profiles and the aggregate model"))
    p = sub.add_parser("similarity", help="geographic and semantic similarity between users")
    _common(p)
    p.add_argument("--pairs", default="all", help="'all' or comma-separated u:v pairs")
    _common(sub.add_parser("cluster", help="semantic graph and classes"))
    p = sub.add_parser("generate", help="generate and privacy-test a pool of fakes")
    _common(p)
    p.add_argument("--classes", help="classes CSV from 'cluster' (recomputed if omitted)")
    for name, help_ in (("audit", "re-run the privacy test on a pool"),
                        ("attack", "LBS scenario with the localization attack"),
                        ("stats", "dataset-publishing statistics")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.add_argument("--pool", required=True, help="pool CSV from 'generate'")
        p.add_argument("--sidecar", help="pool sidecar CSV (fake_id,log_likelihood,verdict)")
        if name != "audit":
            p.add_argument("--classes", help="classes CSV (recomputed if omitted)")
    p = sub.add_parser("coarsen", help="merge locations by weighted agglomerative clustering")
    _common(p)
    p.add_argument("--target", type=int, required=True, help="number of locations to keep")
    p = sub.add_parser("run", help="full pipeline; synthesizes a corpus when none is given")
    _common(p, corpus=False)
    p.add_argument("--corpus", help="trace CSV (user,slot,location)")
    p.add_argument("--coordinates", help="coordinates CSV (location,x,y)")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    return parser


def _inputs(args) -> list:
    return [Path(x) for x in (getattr(args, k, None) for k in ("config", "corpus", "coordinates", "classes", "pool", "sidecar")) if x]


def _load(args) -> Corpus:
    return load_corpus(args.corpus, coordinates=args.coordinates)


def _context(args, cfg):
    ctx = pipeline.prepare(_load(args), cfg)
    pipeline.learn(ctx)
    return ctx


def _classes(args, ctx):
    if getattr(args, "classes", None):
        classes = store.load_classes(args.classes)
        if classes.n_locations != ctx.n_locations:
            raise CorpusError(f"{args.classes}: {classes.n_locations} locations, corpus has {ctx.n_locations}")
        return classes
    return pipeline.semantics(ctx).classes


def cmd_synth(args, cfg, out):
    _, paths = pipeline.synthesize(cfg, out)
    return paths


def cmd_split(args, cfg, out):
    corpus = _load(args)
    train, test = corpus.split(cfg.split_slot)
    paths = [out / "train.csv", out / "test.csv"]
    save_corpus(train, paths[0])
    save_corpus(test, paths[1])
    return paths


def cmd_learn(args, cfg, out):
    ctx = _context(args, cfg)
    paths = [out / n for n in ("profiles_transitions.csv", "profiles_visits.csv", "aggregate_transitions.csv", "aggregate_visits.csv")]
    store.save_profiles([ctx.profiles[u] for u in ctx.train.users], paths[0], paths[1])
    store.save_aggregate(pipeline.model(ctx), paths[2], paths[3])
    return paths


def _pairs(spec: str, users: list) -> list:
    if spec == "all":
        return [(u, v) for u in users for v in users if u != v]
    pairs = []
    for item in spec.split(","):
        u, sep, v = item.strip().partition(":")
        if not sep or u not in users or v not in users:
            raise ValueError(f"bad pair {item!r}: expected u:v with known users")
        pairs.append((u, v))
    return pairs


def cmd_similarity(args, cfg, out):
    ctx = _context(args, cfg)
    kw = {"rng": cfg.seed_anneal} if cfg.order == "first" else {}
    rows = []
    for u, v in _pairs(args.pairs, ctx.train.users):
        pu, pv = ctx.profiles[u], ctx.profiles[v]
        rows.append((u, v, geographic_similarity(pu, pv, ctx.distance).score,
                     semantic_similarity(pu, pv, cfg.order, **kw).score))
    path = store.write_rows(out / "similarity.csv", ("u", "v", "geographic", "semantic"), rows)
    return [path]


def cmd_cluster(args, cfg, out):
    ctx = _context(args, cfg)
    sem = pipeline.semantics(ctx)
    paths = [out / "graph.csv", out / "classes.csv"]
    store.save_graph(sem.graph, paths[0])
    store.save_classes(sem.classes, paths[1])
    if sem.scores:
        paths.append(store.write_rows(out / "cluster_scores.csv", ("k", "quality"), sorted(sem.scores.items())))
    return paths


def cmd_generate(args, cfg, out):
    ctx = _context(args, cfg)
    classes = _classes(args, ctx)
    pool = pipeline.generate(ctx, classes, pipeline.model(ctx))
    paths = [out / "pool.csv", out / "pool_sidecar.csv", out / "rejections.csv"]
    store.save_pool(pool, *paths)
    for u in pool.exhausted:
        logger.warning("seed %s produced no fake", u)
    return paths


def cmd_audit(args, cfg, out):
    ctx = _context(args, cfg)
    pool = store.load_pool(args.pool, args.sidecar)
    rows = []
    for fake, verdict in pipeline.audit(ctx, pool):
        recorded = "" if fake.verdict is None else str(fake.verdict)
        rows.append((fake.seed_user, fake.fake_id, str(verdict), verdict.sim_g, verdict.intersection,
                     verdict.deniability_witnesses, recorded))
    path = store.write_rows(out / "audit.csv", ("seed_user", "fake_id", "verdict", "sim_g", "intersection", "witnesses", "recorded"), rows)
    failed = sum(1 for r in rows if r[2] != "pass")
    if failed:
        logger.warning("%d of %d fakes fail the privacy test", failed, len(rows))
    return [path]


def cmd_attack(args, cfg, out):
    ctx = _context(args, cfg)
    classes = _classes(args, ctx)
    pool = store.load_pool(args.pool, args.sidecar)
    scen = pipeline.scenario(ctx, pipeline.model(ctx), classes, pool)
    paths = [store.write_dicts(out / "scenario.csv", ScenarioResult.COLUMNS, scen.rows),
             store.write_dicts(out / "scenario_summary.csv", pipeline.SCENARIO_SUMMARY_HEADER, scen.summary()),
             plotting.privacy_tradeoff(scen.summary(), out / "fig_privacy.png")]
    return paths


def cmd_stats(args, cfg, out):
    ctx = _context(args, cfg)
    pool = store.load_pool(args.pool, args.sidecar)
    st = pipeline.publishing_stats(ctx, pool, pipeline.model(ctx))
    qa, qb = st.qq_points
    paths = [
        store.write_dicts(out / "table_spatial.csv", pipeline.SPATIAL_HEADER, [st.spatial]),
        store.write_dicts(out / "table_spatial_top.csv", pipeline.SPATIAL_HEADER, [st.spatial_top]),
        store.write_dicts(out / "table_time.csv", pipeline.TIME_HEADER, st.time),
        store.write_rows(out / "aggregate_similarity.csv", ("statistic", "mean", "median", "std"),
                         [(k, *v) for k, v in st.aggregate.items()]),
        store.write_rows(out / "qq.csv", ("quantile", "real", "fake"), ((i + 1, a, b) for i, (a, b) in enumerate(zip(qa, qb)))),
        store.write_rows(out / "stats_summary.csv", ("metric", "value"), [
            ("qq_correlation", st.qq_correlation),
            ("median_fake_seed_similarity", float(np.median(st.fake_seed_similarity))),
            ("median_real_pair_similarity", float(np.median(st.real_pair_similarity))),
        ]),
        plotting.qq_plot(qa, qb, out / "fig_qq.png"),
        plotting.histogram(st.fake_seed_similarity, out / "fig_fake_seed_similarity.png", "semantic similarity (fake, seed)"),
        plotting.histogram(st.differential, out / "fig_differential_similarity.png", "differential semantic similarity"),
    ]
    return paths


def cmd_coarsen(args, cfg, out):
    corpus = _load(args)
    coarse, mapping, weights = coarsen_corpus(corpus, args.target)
    paths = [out / "corpus.csv", out / "coordinates.csv", out / "mapping.csv"]
    save_corpus(coarse, paths[0])
    save_coordinates(coarse.coordinates, paths[1])
    store.write_rows(paths[2], ("location", "new_location"), enumerate(mapping.tolist()))
    return paths


def cmd_run(args, cfg, out):
    if args.corpus:
        corpus = _load(args)
        inputs = _inputs(args)
    else:
        corpus, inputs = pipeline.synthesize(cfg, out)
    pipeline.run(corpus, cfg, out, inputs=inputs, figures=not args.no_figures)
    return None


COMMANDS = {
    "synth": cmd_synth, "split": cmd_split, "learn": cmd_learn, "similarity": cmd_similarity,
    "cluster": cmd_cluster, "generate": cmd_generate, "audit": cmd_audit, "attack": cmd_attack,
    "stats": cmd_stats, "coarsen": cmd_coarsen, "run": cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = PipelineConfig.load(args.config, args.set)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[args.command](args, cfg, out)
        if outputs is not None:
            write_manifest(out / f"manifest_{args.command}.json", args.command, cfg, _inputs(args), outputs)
    except pipeline.PipelineFailure as exc:
        print(f"semfake: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ConfigError, CorpusError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"semfake: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
