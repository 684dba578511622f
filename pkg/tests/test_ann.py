import threading

import numpy as np
import pytest

from multisage.ann import (AnnIndex, IndexConfig, MedoidCache, bench, build_index, exact_knn, exact_knn_batch,
                           query_by_medoid, recall_at_k, refine_pool)
from multisage.core import PinStore, cosine_similarity
from multisage.io import FormatError
from multisage.synth import WorldConfig, generate_world

from conftest import make_store, unit_rows


@pytest.fixture(scope="module")
def pool():
    rng = np.random.default_rng(5)
    return make_store(rng.normal(size=(1000, 16)))


@pytest.fixture(scope="module")
def index(pool):
    return build_index(pool, pool.ids, IndexConfig(max_neighbors=8, build_beam=64, query_beam=50))


class TestRefine:
    def test_identical_pair_keeps_one(self):
        store = make_store([[1.0, 2.0], [1.0, 2.0], [0.0, 1.0]])
        assert refine_pool(store).tolist() == [0, 2]

    def test_quality_floor_empties_pool(self):
        store = make_store([[1.0, 0.0], [0.0, 1.0]], quality=[0.1, 0.2])
        assert refine_pool(store, IndexConfig(quality_floor=0.5)).size == 0

    def test_quality_floor_partial(self):
        store = make_store([[1.0, 0.0], [0.0, 1.0]], quality=[0.1, 0.9])
        assert refine_pool(store, IndexConfig(quality_floor=0.5)).tolist() == [1]

    def test_planted_duplicates(self, rng):
        base = unit_rows(rng.normal(size=(900, 32)))
        src = rng.choice(900, 100, replace=False)
        # similarity 0.999: rotate a little towards a random orthogonal direction
        noise = rng.normal(size=(100, 32))
        noise -= (noise * base[src]).sum(axis=1, keepdims=True) * base[src]
        noise = unit_rows(noise)
        dup = 0.999 * base[src] + np.sqrt(1 - 0.999 ** 2) * noise
        store = make_store(np.vstack([base, dup]))
        vecs = unit_rows(store.vectors.astype(np.float64))
        sims = vecs[:900] @ vecs[:900].T
        np.fill_diagonal(sims, 0)
        collisions = int((np.triu(sims) >= 0.99).sum())
        kept = refine_pool(store, IndexConfig(dedup_threshold=0.99))
        assert abs(kept.size - 900) <= collisions
        assert np.isin(np.arange(900, 1000), kept).sum() <= 5

    def test_deterministic_scan_order(self, rng):
        v = unit_rows(rng.normal(size=(50, 8)))
        store = make_store(np.vstack([v, v]), ids=np.r_[np.arange(50) + 100, np.arange(50)])
        assert refine_pool(store).tolist() == list(range(50))


class TestIndex:
    def test_single_pin(self):
        store = make_store([[0.3, 0.4]])
        idx = build_index(store, [0])
        assert [p for p, _ in idx.query([1.0, 0.0], 5)] == [0]

    def test_empty_pool_rejected(self):
        with pytest.raises(ValueError):
            build_index(make_store([[1.0, 0.0]]), [])

    def test_empty_index_query(self):
        z = np.zeros((1, 0), dtype=np.int64)
        idx = AnnIndex(np.zeros(0), np.zeros((0, 2)), np.zeros(0), z, z, np.zeros(0), -1, IndexConfig())
        assert idx.query([1.0, 0.0], 3) == []

    def test_self_retrieval(self, pool, index):
        for pin in pool.ids[::50]:
            top = index.query(pool.get(pin), 1)
            assert top[0][0] == pin and abs(top[0][1]) < 1e-9

    def test_orthogonal_query_two_pins(self):
        store = make_store([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        out = build_index(store, [0, 1]).query([0.0, 0.0, 1.0], 2)
        assert sorted(p for p, _ in out) == [0, 1]
        assert [d for _, d in out] == sorted(d for _, d in out)

    def test_results_sorted_subset_and_consistent(self, pool, index, rng):
        accepted = set(pool.ids[::2].tolist())
        half = build_index(pool, sorted(accepted), IndexConfig(max_neighbors=8, build_beam=64))
        for _ in range(20):
            q = rng.normal(size=16)
            res = half.query(q, 10)
            assert len(res) == 10
            assert all(p in accepted for p, _ in res)
            dists = [d for _, d in res]
            assert dists == sorted(dists)
            for p, d in res:
                assert abs((1 - cosine_similarity(q, pool.get(p))) - d) < 1e-6

    def test_exhaustive_beam_matches_exact(self, rng):
        store = make_store(rng.normal(size=(50, 8)))
        idx = build_index(store, store.ids, IndexConfig(max_neighbors=4, build_beam=50, query_beam=50))
        for _ in range(20):
            q = rng.normal(size=8)
            got = [p for p, _ in idx.query(q, 10, beam=50)]
            assert got == [p for p, _ in exact_knn(store, store.ids, q, 10)]

    def test_adjacency_symmetric(self, index):
        for pin in index.ids[:100]:
            for layer in range(int(index.levels[index._row[int(pin)]]) + 1):
                for nb in index.neighbors(pin, layer):
                    assert pin in index.neighbors(nb, layer)

    def test_build_deterministic(self, pool):
        cfg = IndexConfig(max_neighbors=8, build_beam=32, seed=4)
        assert build_index(pool, pool.ids, cfg).to_bytes() == build_index(pool, pool.ids, cfg).to_bytes()

    def test_round_trip(self, index, pool, tmp_path):
        index.save(tmp_path / "idx.bin")
        back = AnnIndex.load(tmp_path / "idx.bin", pool)
        assert back.to_bytes() == index.to_bytes()
        q = pool.get(17)
        assert back.query(q, 5) == index.query(q, 5)

    def test_bad_file(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"nope")
        with pytest.raises(FormatError):
            AnnIndex.load(tmp_path / "x.bin")

    def test_beam_monotone_recall(self, index, pool, rng):
        queries = rng.normal(size=(1000, 16))
        rows = bench(index, queries, 10, beams=(10, 20, 50, 100))
        recalls = [r for _, r, _ in rows]
        assert all(b >= a for a, b in zip(recalls, recalls[1:]))
        assert all(0.0 <= r <= 1.0 for r in recalls)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            IndexConfig(max_neighbors=1)
        with pytest.raises(ValueError):
            IndexConfig(dedup_threshold=0.0)


class TestExact:
    def test_whole_pool_sorted(self, rng):
        store = make_store(rng.normal(size=(7, 3)))
        out = exact_knn(store, store.ids, rng.normal(size=3), 20)
        assert len(out) == 7
        assert [d for _, d in out] == sorted(d for _, d in out)

    def test_batch_agrees(self, pool, rng):
        vecs = unit_rows(pool.vectors)
        qs = unit_rows(rng.normal(size=(5, 16)))
        rows = exact_knn_batch(vecs, qs, 4)
        for q, r in zip(qs, rows):
            assert pool.ids[r].tolist() == [p for p, _ in exact_knn(pool, pool.ids, q, 4)]

    def test_recall_bounds(self):
        truth = np.array([[1, 2, 3], [4, 5, 6]])
        assert recall_at_k(truth, truth) == 1.0
        assert recall_at_k(np.array([[7, 8, 9], [7, 8, 9]]), truth) == 0.0
        assert recall_at_k(np.array([[3, 2, -1], [4, 9, 9]]), truth) == pytest.approx(0.5)


class TestCache:
    def test_second_call_hits(self, index):
        cache = MedoidCache()
        a = query_by_medoid(index, cache, 5, 10)
        b = query_by_medoid(index, cache, 5, 10)
        assert a == b and cache.hits == 1 and cache.misses == 1
        assert 5 not in [p for p, _ in a] and len(a) == 10

    def test_shared_medoid_one_traversal(self, index):
        cache = MedoidCache()
        before = index.traversals
        for _user in range(2):
            query_by_medoid(index, cache, 42, 10)
        assert index.traversals - before == 1

    def test_lru_thrash(self, index):
        cache = MedoidCache(capacity=1)
        for _ in range(5):
            query_by_medoid(index, cache, 1, 5)
            query_by_medoid(index, cache, 2, 5)
        assert cache.hit_rate == 0.0

    def test_transparency(self, index):
        cache = MedoidCache()
        for m in [3, 9, 3, 27, 9]:
            assert query_by_medoid(index, cache, m, 8) == query_by_medoid(index, None, m, 8)

    def test_unknown_medoid(self, index):
        with pytest.raises(KeyError):
            query_by_medoid(index, MedoidCache(), 10**9, 5)

    def test_rebuild_clears(self, pool, index):
        cache = MedoidCache()
        query_by_medoid(index, cache, 1, 5)
        other = build_index(pool, pool.ids[:500], IndexConfig(max_neighbors=8, build_beam=32))
        query_by_medoid(other, cache, 1, 5)
        assert cache.hits == 0 and len(cache) == 1

    def test_concurrent_get_or_compute_runs_once(self):
        cache = MedoidCache()
        calls = []
        barrier = threading.Barrier(8)

        def compute():
            calls.append(1)
            return ("value",)

        def worker():
            barrier.wait()
            assert cache.get_or_compute("k", compute) == ("value",)

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(calls) == 1 and cache.hits == 7

    def test_capacity_validation(self):
        with pytest.raises(ValueError):
            MedoidCache(capacity=0)


def test_clustered_recall_smoke():
    world = generate_world(WorldConfig(n_users=0, n_topics=10, pins_per_topic=300, seed=2))
    idx = build_index(world.pins, world.pins.ids, IndexConfig())
    rng = np.random.default_rng(0)
    queries = world.pins.vectors[rng.choice(len(world.pins), 200, replace=False)].astype(np.float64)
    queries = queries + rng.normal(size=queries.shape) * 0.01
    ((_, recall, _),) = bench(idx, queries, 10, beams=(100,))
    assert recall >= 0.9
