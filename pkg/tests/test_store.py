from collections import Counter

import numpy as np

from semfake import store
from semfake.generator import FakeTrace, Pool
from semfake.semantics import SemanticClasses, SemanticGraph


def test_classes_round_trip(tmp_path):
    c = SemanticClasses(np.array([0, 1, 1, 2, 0]))
    store.save_classes(c, tmp_path / "c.csv")
    assert np.array_equal(store.load_classes(tmp_path / "c.csv").partition, c.partition)


def test_graph_round_trip(tmp_path):
    W = np.array([[0, 0.5, 0], [0.5, 0, 0.25], [0, 0.25, 0]])
    store.save_graph(SemanticGraph(W, np.zeros(3)), tmp_path / "g.csv")
    assert np.array_equal(store.load_graph(tmp_path / "g.csv", 3).weights, W)


def test_pool_round_trip(tmp_path):
    pool = Pool([FakeTrace("a", [1, 2, 3], -1.5, fake_id="a_0000", verdict="pass"),
                 FakeTrace("b", [0, 0, 1], -0.1 / 3, fake_id="b_0000", verdict="pass")],
                Counter({("a", "geographic"): 4}))
    paths = [tmp_path / n for n in ("p.csv", "s.csv", "r.csv")]
    store.save_pool(pool, *paths)
    back = store.load_pool(paths[0], paths[1])
    assert [f.fake_id for f in back.fakes] == ["a_0000", "b_0000"]
    assert [f.locations.tolist() for f in back.fakes] == [[1, 2, 3], [0, 0, 1]]
    assert back.fakes[1].log_likelihood == -0.1 / 3  # repr keeps every bit
    assert paths[2].read_text() == "seed_user,reason,count\na,geographic,4\n"
    assert len(store.pool_corpus_traces(back)) == 2
