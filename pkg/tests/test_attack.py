import numpy as np
import pytest

import oracles
from semfake.attack import (
    ExposureRecord,
    attack,
    baseline_fakes,
    expose,
    fill_unexposed,
    localization_attack,
    run_scenario,
    score_attack,
)
from semfake.generator import FakeTrace
from semfake.metrics import geographic_similarity
from semfake.mobility import AggregateModel, Trace, learn_profile
from semfake.semantics import SemanticClasses


def model_from(P, pi):
    P = np.asarray(P, float)
    return AggregateModel(P[:, None, None, :], np.asarray(pi, float)[None, :], 1e-3)


def random_model(rng, R):
    P = rng.dirichlet(np.ones(R), size=R) + 1e-3
    P /= P.sum(1, keepdims=True)
    return model_from(P, rng.dirichlet(np.ones(R)))


def test_full_exposure_without_fakes_is_perfectly_located():
    rng = np.random.default_rng(0)
    model = random_model(rng, 4)
    truth = rng.integers(0, 4, 15)
    rec = expose(truth, [], beta=1.0, rng=0)
    assert list(rec.positions) == list(range(15))
    res = attack(rec, model)
    assert res.privacy == 0.0 and res.diversity_overhead == 1.0
    assert np.array_equal(res.inferred, truth)


def test_duplicate_locations_are_merged():
    truth = np.array([0, 1, 2])
    rec = expose(truth, [truth.copy(), np.array([0, 3, 2])], beta=1.0, rng=0)
    assert [s.tolist() for s in rec.sets] == [[0], [1, 3], [2]]


def test_exposure_count_is_binomial():
    truth = np.zeros(72, dtype=int)
    n = [len(expose(truth, beta=0.5, rng=r).positions) for r in range(2000)]
    assert abs(np.mean(n) - 36) < 1.0


def test_record_needs_truth_in_every_set():
    with pytest.raises(ValueError):
        ExposureRecord(np.array([0]), (np.array([1, 2]),), np.array([0]))
    with pytest.raises(ValueError):
        expose([0, 1], [[0]], beta=0.5)
    with pytest.raises(ValueError):
        expose([0, 1], beta=0.0)


def test_singleton_sets_give_zero_privacy():
    model = random_model(np.random.default_rng(1), 5)
    truth = np.array([4, 3, 2, 1, 0, 0])
    rec = ExposureRecord(np.array([0, 2, 5]), (np.array([4]), np.array([2]), np.array([0])), truth)
    assert attack(rec, model).privacy == 0.0


def test_dominant_location_attracts_the_guess():
    # location 0 is where the chain nearly always goes; a fake there hides a truth at 1
    P = np.array([[0.98, 0.01, 0.01], [0.98, 0.01, 0.01], [0.98, 0.01, 0.01]])
    model = model_from(P, [0.98, 0.01, 0.01])
    truth = np.ones(6, dtype=int)
    res = attack(expose(truth, [np.zeros(6, dtype=int)], beta=1.0, rng=0), model)
    assert res.privacy == 1.0 and res.diversity_overhead == 2.0


def test_attack_matches_brute_force_with_gaps():
    rng = np.random.default_rng(12)
    for _ in range(40):
        R, L = 4, 4 + int(rng.integers(0, 5))
        model = random_model(rng, R)
        truth = rng.integers(0, R, L)
        positions = np.sort(rng.choice(L, size=int(rng.integers(1, 5)), replace=False))
        sets = tuple(np.unique(np.r_[truth[p], rng.choice(R, 2)]) for p in positions)
        rec = ExposureRecord(positions, sets, truth)
        got = localization_attack(rec, model)
        (best, _), (li, steps) = oracles.attack_brute(positions, sets, model.transition, model.pi_bar[0])
        assert np.isclose(oracles.path_score(got, li, steps), best)


def test_nothing_exposed():
    model = random_model(np.random.default_rng(2), 3)
    rec = ExposureRecord(np.array([], dtype=int), (), np.array([0, 1]))
    assert len(localization_attack(rec, model)) == 0
    assert score_attack(rec, []).privacy == 0.0


def test_fill_unexposed_keeps_exposed_guesses():
    rng = np.random.default_rng(3)
    model = random_model(rng, 4)
    truth = rng.integers(0, 4, 10)
    rec = expose(truth, [rng.integers(0, 4, 10)], beta=0.5, rng=1)
    inferred = localization_attack(rec, model)
    full = fill_unexposed(rec, inferred, model)
    assert len(full) == 10 and np.array_equal(full[rec.positions], inferred)
    assert attack(rec, model, full_trace=True).inferred.shape == (10,)


def test_semantic_overhead_counts_classes():
    classes = SemanticClasses(np.array([0, 0, 1, 1]))
    rec = ExposureRecord(np.array([0, 1]), (np.array([0, 1]), np.array([1, 2, 3])), np.array([0, 1]))
    assert score_attack(rec, [0, 1], classes).semantic_overhead == 1.5


def test_uniform_iid_frequencies():
    x = np.concatenate(baseline_fakes("uniform_iid", 1000, 40, rng=0, n_locations=4))
    assert np.abs(np.bincount(x, minlength=4) / len(x) - 0.25).max() < 0.01


def test_rw_aggregate_follows_model_transitions():
    P = np.array([[0.7, 0.2, 0.1], [0.3, 0.4, 0.3], [0.5, 0.1, 0.4]])
    model = model_from(P, [0.5, 0.3, 0.2])
    (x,) = baseline_fakes("rw_aggregate", 200_000, 1, rng=0, model=model)
    emp = learn_profile(Trace("x", x), 3).transition
    assert np.abs(emp - P).sum(1).max() < 0.02


def test_rw_user_resembles_the_user():
    rng = np.random.default_rng(5)
    P = np.array([[0.8, 0.2, 0.0, 0.0], [0.1, 0.6, 0.3, 0.0], [0.0, 0.2, 0.8, 0.0], [0.25] * 4])
    x = [0]
    for _ in range(2000):
        x.append(rng.choice(4, p=P[x[-1]]))
    prof = learn_profile(Trace("u", x), 4)
    (fake,) = baseline_fakes("rw_user", 2000, 1, rng=1, profile=prof)
    assert geographic_similarity(learn_profile(Trace("f", fake), 4), prof).score > 0.9
    with pytest.raises(ValueError):
        baseline_fakes("rw_user", 10, 1)
    with pytest.raises(ValueError):
        baseline_fakes("teleport", 10, 1)


def test_scenario_without_fakes_has_zero_privacy():
    rng = np.random.default_rng(6)
    model = random_model(rng, 4)
    classes = SemanticClasses(np.array([0, 0, 1, 1]))
    truths = {u: Trace(u, rng.integers(0, 4, 12)) for u in ("a", "b")}
    pools = {u: [FakeTrace(u, rng.integers(0, 4, 12), -1.0)] for u in truths}
    res = run_scenario(truths, model, classes, methods=("ours", "uniform_iid"), num_fakes=(0, 2),
                       selections=2, exposures=2, pools=pools)
    assert res.lookup("ours", 0)["median_privacy"] == 0.0
    assert res.lookup("uniform_iid", 0)["mean_diversity_overhead"] == 1.0
    assert len(res.rows) == 2 * 2 * 2
    again = run_scenario(truths, model, classes, methods=("ours", "uniform_iid"), num_fakes=(0, 2),
                         selections=2, exposures=2, pools=pools)
    assert again.rows == res.rows
    with pytest.raises(ValueError):
        run_scenario(truths, model, classes, methods=("ours",))
