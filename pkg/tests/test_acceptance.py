"""Acceptance criteria; each test records a PASS/FAIL line shown in the summary."""
from __future__ import annotations

import filecmp
import time

import numpy as np
import pytest

from conftest import record
import oracles
from semfake import pipeline
from semfake.attack import ExposureRecord, localization_attack
from semfake.config import PipelineConfig
from semfake.generator import SemanticSeed, decode_randomized_viterbi
from semfake.metrics import (
    geographic_similarity,
    mallows_distance,
    mallows_hamming,
    semantic_similarity_order0,
    semantic_similarity_order1,
)
from semfake.mobility import AggregateModel, Trace, learn_profile
from semfake.privacy import intersection


def _random_trace(rng, R, L):
    return rng.integers(0, R, size=L)


@pytest.fixture(scope="session")
def full_run(tmp_path_factory):
    cfg = PipelineConfig()
    out = tmp_path_factory.mktemp("run_a")
    corpus, inputs = pipeline.synthesize(cfg, out)
    t0 = time.perf_counter()
    result = pipeline.run(corpus, cfg, out, inputs=inputs)
    return result, out, time.perf_counter() - t0


def test_criterion_1_metric_oracles():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        R = int(rng.integers(2, 6))
        a, b = _random_trace(rng, R, 25), _random_trace(rng, R, 25)
        u, v = learn_profile(Trace("u", a), R), learn_profile(Trace("v", b), R)
        worst = max(worst, abs(semantic_similarity_order0(u, v).score - oracles.order0_brute(a, b, R)))
        worst = max(worst, abs(semantic_similarity_order1(u, v, rng=0).score - oracles.order1_brute(a, b, R)))
    for _ in range(1000):
        n = int(rng.integers(2, 7))
        p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        worst = max(worst, abs(mallows_hamming(p, q) - mallows_distance(p, q)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 60
    record(1, "metric oracle equivalence", ok, f"max error {worst:.2e}, {elapsed:.1f}s")
    assert ok


def _random_model(rng, R):
    P = rng.dirichlet(np.ones(R), size=R) + 1e-3
    P /= P.sum(1, keepdims=True)
    pi = rng.dirichlet(np.ones(R))
    return AggregateModel(P[:, None, None, :], pi[None, :], 1e-3)


def test_criterion_2_decode_and_attack_oracles():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(100):
        R, L = int(rng.integers(3, 7)), int(rng.integers(2, 7))
        model = _random_model(rng, R)
        cands = [np.sort(rng.choice(R, size=int(rng.integers(1, min(4, R) + 1)), replace=False)) for _ in range(L)]
        fake = decode_randomized_viterbi(SemanticSeed(tuple(cands)), model, par_v=1.0, rng=0)
        logP = np.log(model.transition)
        best, _ = oracles.best_path(cands, np.log(model.pi_bar[0]), [logP] * (L - 1))
        got = oracles.path_score(fake.locations, np.log(model.pi_bar[0]), [logP] * (L - 1))
        in_sets = all(loc in c for loc, c in zip(fake.locations, cands))
        bad += not (in_sets and abs(got - best) <= 1e-9 and abs(fake.log_likelihood - best) <= 1e-9)
    for _ in range(100):
        R, L = int(rng.integers(3, 7)), int(rng.integers(2, 7))
        model = _random_model(rng, R)
        truth = rng.integers(0, R, size=L)
        k = int(rng.integers(1, L + 1))
        positions = np.sort(rng.choice(L, size=k, replace=False))
        sets = []
        for p in positions:
            others = rng.choice(np.setdiff1d(np.arange(R), [truth[p]]), size=int(rng.integers(0, min(4, R))), replace=False)
            sets.append(np.sort(np.concatenate([[truth[p]], others]).astype(np.int64)))
        rec = ExposureRecord(positions, tuple(sets), truth)
        inferred = localization_attack(rec, model)
        (best, _), (log_init, steps) = oracles.attack_brute(positions, sets, model.transition, model.pi_bar[0])
        got = oracles.path_score(inferred, log_init, steps)
        bad += not (all(x in s for x, s in zip(inferred, sets)) and abs(got - best) <= 1e-9)
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 60
    record(2, "decode and attack oracle equivalence", ok, f"{bad} mismatches in 200, {elapsed:.1f}s")
    assert ok


def test_criterion_3_self_similarity_and_bounds():
    rng = np.random.default_rng(303)
    violations = 0
    cases = 10_000
    for i in range(cases):
        R = int(rng.integers(2, 7))
        L = int(rng.integers(2, 30))
        a, b = _random_trace(rng, R, L), _random_trace(rng, R, L)
        u, v = learn_profile(Trace("u", a), R), learn_profile(Trace("v", b), R)
        scores = [geographic_similarity(u, v).score, semantic_similarity_order0(u, v).score]
        if geographic_similarity(u, u).score != 1.0 or semantic_similarity_order0(u, u).score != 1.0:
            violations += 1
        if i % 20 == 0:
            scores.append(semantic_similarity_order1(u, v, iters=200, rng=i).score)
            violations += semantic_similarity_order1(u, u, iters=200, rng=i).score != 1.0
        violations += sum(not 0.0 <= s <= 1.0 for s in scores)
    record(3, "self-similarity exactly 1 and bounds", violations == 0, f"{violations} violations in {cases} cases")
    assert violations == 0


def test_criterion_4_privacy_guarantees(full_run):
    result, _, _ = full_run
    ctx, pool = result.ctx, result.pool
    cfg = ctx.cfg
    R = ctx.n_locations
    alt_pi = [oracles.chain(t.locations, R)[1] for t in ctx.alternate_traces()]
    failures = 0
    for f in pool.fakes:
        seed = ctx.train.trace(f.seed_user).locations
        fl = np.asarray(f.locations)
        inter = int(np.sum(fl == seed))
        sim_g = oracles.geo_similarity(fl, seed, R)
        _, pi_f, _ = oracles.chain(fl, R)
        _, pi_s, _ = oracles.chain(seed, R)
        own = oracles.order0_assignment(pi_s, pi_f)
        witnesses = sum(abs(own - oracles.order0_assignment(pa, pi_f)) < cfg.par_d for pa in alt_pi)
        failures += not (inter == 0 and sim_g < cfg.par_s and witnesses >= cfg.anonymity_k - 1)
        failures += inter != intersection(f, seed)
    rate = pool.acceptance_rate
    ok = failures == 0 and rate >= 0.5 and len(pool.fakes) > 0
    record(4, "privacy guarantees on accepted fakes", ok,
           f"{len(pool.fakes)} fakes re-audited, {failures} failures, acceptance {rate:.2f}")
    assert ok


def test_criterion_5_semantic_exceeds_geographic(full_run):
    s = full_run[0].summary
    gap = s["median_semantic_similarity"] - s["median_geographic_similarity"]
    record(5, "median semantic minus geographic similarity >= 0.2", gap >= 0.2,
           f"{s['median_semantic_similarity']:.3f} - {s['median_geographic_similarity']:.3f}")
    assert gap >= 0.2


def test_criterion_6_planted_roles(full_run):
    ari = full_run[0].summary["role_recovery_ari"]
    record(6, "planted role recovery", ari >= 0.9, f"ARI {ari:.3f}, k={full_run[0].summary['k']}")
    assert ari >= 0.9


def test_criterion_7_spatial_kl_ordering(full_run):
    row = full_run[0].stats.spatial
    ok = row["fakes_mean"] < row["uniform"] < row["single"]
    record(7, "KL ordering fakes < uniform < single", ok,
           f"fakes {row['fakes_mean']:.4f} (std {row['fakes_std']:.4f}), uniform {row['uniform']:.4f}, single {row['single']:.4f}")
    assert ok


def test_criterion_8_qq_correlation(full_run):
    r = full_run[0].stats.qq_correlation
    record(8, "Q-Q correlation of semantic similarity", r >= 0.9, f"r = {r:.4f}")
    assert r >= 0.9


def test_criterion_9_lbs_ordering(full_run):
    result, _, _ = full_run
    scen = result.scenario
    cfg = result.ctx.cfg
    t0 = time.perf_counter()
    rerun = pipeline.scenario(result.ctx, result.model, result.semantics.classes, result.pool)
    elapsed = time.perf_counter() - t0
    assert rerun.rows == scen.rows
    problems = []
    for nf in (1, 5, 10):
        ours = scen.lookup("ours", nf)
        for base in ("uniform_iid", "aggregate_iid"):
            if ours["median_privacy"] < scen.lookup(base, nf)["median_privacy"]:
                problems.append(f"privacy < {base} at {nf}")
        if ours["mean_diversity_overhead"] > scen.lookup("uniform_iid", nf)["mean_diversity_overhead"]:
            problems.append(f"diversity {ours['mean_diversity_overhead']:.3f} > uniform_iid "
                            f"{scen.lookup('uniform_iid', nf)['mean_diversity_overhead']:.3f} at {nf}")
    trials = cfg.selections * cfg.exposures
    ok = not problems and trials >= 20 and elapsed < 600
    detail = "; ".join(problems) or ", ".join(
        f"nf={nf}: {scen.lookup('ours', nf)['median_privacy']:.2f} vs {scen.lookup('uniform_iid', nf)['median_privacy']:.2f}"
        for nf in (1, 5, 10))
    record(9, "LBS privacy and overhead ordering", ok, f"{detail}; {trials} trials, {elapsed:.1f}s")
    assert ok


def test_criterion_10_determinism(full_run, tmp_path):
    _, first, _ = full_run
    cfg = PipelineConfig()
    corpus, inputs = pipeline.synthesize(cfg, tmp_path)
    pipeline.run(corpus, cfg, tmp_path, inputs=inputs)
    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in tmp_path.iterdir())
    _, mismatch, errors = filecmp.cmpfiles(first, tmp_path, names, shallow=False)
    ok = not mismatch and not errors
    record(10, "byte-identical artifacts across runs", ok, f"{len(names)} files, {len(mismatch)} differ")
    assert ok
