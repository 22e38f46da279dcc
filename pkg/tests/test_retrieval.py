import numpy as np
import pytest

from rtlfuse.errors import DuplicateId, EmptyStore, MetricMissing
from rtlfuse.metrics import QualityMetrics
from rtlfuse.retrieval import StoreEntry, VectorStore, index_add, query_topk, zero_shot_predict


def entry(eid, vec, **metrics):
    return StoreEntry(eid, np.asarray(vec, dtype=float),
                      QualityMetrics(**metrics))


def brute_force_topk(entries, query, k):
    """Independent full-scan oracle."""
    q = np.asarray(query, dtype=float)
    qn = np.linalg.norm(q)
    scored = []
    for e in entries:
        en = np.linalg.norm(e.embedding)
        sim = float(e.embedding @ q / (en * qn)) if en > 0 and qn > 0 else 0.0
        scored.append((e.id, sim))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:k]


def test_add_and_size():
    store = VectorStore()
    index_add(store, entry("a", [1, 0], slack=1.0))
    assert len(store) == 1


def test_duplicate_id():
    store = VectorStore()
    store.add(entry("a", [1, 0]))
    with pytest.raises(DuplicateId):
        store.add(entry("a", [0, 1]))


def test_empty_store_query():
    with pytest.raises(EmptyStore):
        VectorStore().query_topk([1.0], 1)


def test_non_finite_embedding_rejected():
    with pytest.raises(ValueError):
        entry("bad", [np.nan, 1.0])


def test_self_retrieval_similarity_one():
    store = VectorStore()
    vecs = np.random.default_rng(0).normal(size=(20, 8))
    for i, v in enumerate(vecs):
        store.add(entry(f"e{i}", v, slack=float(i + 1)))
    for i, v in enumerate(vecs):
        top, sim = store.query_topk(v, 1)[0]
        assert top.id == f"e{i}"
        assert abs(sim - 1.0) < 1e-6


def test_orthogonal_similarities_zero():
    store = VectorStore()
    store.add(entry("x", [1, 0, 0]))
    store.add(entry("y", [0, 1, 0]))
    hits = store.query_topk([0, 0, 1], 2)
    assert all(s == 0.0 for _, s in hits)
    assert [e.id for e, _ in hits] == ["x", "y"]  # tie broken by id ascending


def test_hand_similarity_case():
    store = VectorStore()
    store.add(entry("a", [3, 4], slack=1.2))
    store.add(entry("b", [4, 3], slack=9.9))
    hits = store.query_topk([3, 4], 2)
    assert hits[0][0].id == "a" and abs(hits[0][1] - 1.0) < 1e-12
    assert abs(hits[1][1] - 24.0 / 25.0) < 1e-12


def test_topk_matches_brute_force_oracle():
    rng = np.random.default_rng(1)
    store = VectorStore()
    entries = [entry(f"id{i:03d}", rng.normal(size=6)) for i in range(50)]
    for e in entries:
        store.add(e)
    for _ in range(25):
        q = rng.normal(size=6)
        k = int(rng.integers(1, 8))
        got = [(e.id, s) for e, s in store.query_topk(q, k)]
        expected = brute_force_topk(entries, q, k)
        assert [g[0] for g in got] == [e[0] for e in expected]
        assert np.allclose([g[1] for g in got], [e[1] for e in expected])


def test_scale_invariance():
    rng = np.random.default_rng(2)
    store = VectorStore()
    for i in range(12):
        store.add(entry(f"e{i}", rng.normal(size=5)))
    q = rng.normal(size=5)
    base = store.query_topk(q, 12)
    for c in (0.001, 7.0, 1e6):
        scaled = store.query_topk(c * q, 12)
        assert [e.id for e, _ in scaled] == [e.id for e, _ in base]
        assert np.allclose([s for _, s in scaled], [s for _, s in base])


def test_k_larger_than_store():
    store = VectorStore()
    store.add(entry("only", [1.0, 2.0]))
    assert len(store.query_topk([1.0, 0.0], 10)) == 1


def test_zero_shot_top1_verbatim():
    store = VectorStore()
    store.add(entry("near", [1, 0], slack=1.2))
    store.add(entry("far", [0, 1], slack=3.4))
    assert zero_shot_predict(store, [0.9, 0.1], "slack") == 1.2


def test_zero_shot_topk_mean():
    store = VectorStore()
    for i, label in enumerate([1.0, 2.0, 3.0]):
        store.add(entry(f"e{i}", [1, 0], slack=label))  # equal similarities
    assert zero_shot_predict(store, [1, 0], "slack", k=3) == 2.0


def test_zero_shot_missing_metric():
    store = VectorStore()
    store.add(entry("a", [1, 0], slack=1.0))
    with pytest.raises(MetricMissing):
        store.zero_shot_predict([1, 0], "power")


def test_persistence_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    store = VectorStore()
    # float32 persistence: use float32-representable embeddings for exactness
    vecs = rng.normal(size=(200, 16)).astype(np.float32).astype(np.float64)
    for i, v in enumerate(vecs):
        store.add(StoreEntry(f"id{i:04d}", v,
                             QualityMetrics(slack=float(i), power=0.5, area=2.0),
                             design=f"d{i % 5}", register=f"r{i}"))
    prefix = str(tmp_path / "store")
    store.save(prefix)
    loaded = VectorStore.load(prefix)
    assert len(loaded) == len(store)
    for _ in range(10):
        q = rng.normal(size=16)
        a = [(e.id, s) for e, s in store.query_topk(q, 7)]
        b = [(e.id, s) for e, s in loaded.query_topk(q, 7)]
        assert a == b
    e0 = loaded.query_topk(vecs[3], 1)[0][0]
    assert e0.metrics.slack == 3.0 and e0.design == "d3"


def test_concurrent_readers_during_writes():
    import threading

    store = VectorStore()
    rng = np.random.default_rng(4)
    for i in range(32):
        store.add(entry(f"seed{i}", rng.normal(size=4)))
    errors = []

    def reader():
        local = np.random.default_rng(0)
        try:
            for _ in range(200):
                hits = store.query_topk(local.normal(size=4), 3)
                assert len(hits) >= 3
        except Exception as exc:  # noqa: BLE001
            errors.append(exc)

    def writer():
        local = np.random.default_rng(5)
        for i in range(100):
            store.add(entry(f"new{i}", local.normal(size=4)))

    threads = [threading.Thread(target=reader) for _ in range(4)]
    threads.append(threading.Thread(target=writer))
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(store) == 132
