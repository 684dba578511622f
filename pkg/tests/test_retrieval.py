import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multisage.ann import IndexConfig, MedoidCache, build_index
from multisage.core import make_rng
from multisage.representation import ClusterSummary, UserProfile
from multisage.retrieval import (RetrievalConfig, diversity, mean_pairwise_cosine_distance, merge_candidates,
                                 recommend)

from conftest import make_store, unit_rows


@pytest.fixture(scope="module")
def world():
    """Three orthogonal topics of 200 pins each in 12-d."""
    rng = np.random.default_rng(9)
    centers = np.eye(12)[:3]
    vecs = np.vstack([c + rng.normal(size=(200, 12)) * 0.05 for c in centers])
    store = make_store(unit_rows(vecs))
    return store, build_index(store, store.ids, IndexConfig(max_neighbors=8, build_beam=64))


def profile_of(*pairs):
    return UserProfile(1, tuple(ClusterSummary(m, w, 1) for m, w in pairs))


class TestRecommend:
    def test_empty_profile(self, world):
        _, idx = world
        assert len(recommend(UserProfile(1), idx, MedoidCache())) == 0

    def test_single_cluster_takes_whole_budget(self, world):
        _, idx = world
        recs = recommend(profile_of((0, 1.0)), idx, MedoidCache(), RetrievalConfig(3, 150), make_rng(0))
        assert recs.sampled == (0,)
        assert len(recs) == 150

    def test_budget_split_and_bound(self, world):
        _, idx = world
        prof = profile_of((0, 3.0), (200, 2.0), (400, 1.0))
        recs = recommend(prof, idx, MedoidCache(), RetrievalConfig(3, 90), make_rng(1))
        assert len(recs) <= 90
        assert len(set(recs.pins)) == len(recs)
        counts = {m: sum(r.source == m for r in recs) for m in recs.sampled}
        assert all(c == 30 for c in counts.values())

    def test_identical_neighbourhoods_dedup(self, world):
        store, idx = world
        # 0 and its nearest neighbour share almost all of their neighbours
        nearest = idx.query(store.get(0), 2)[1][0]
        prof = profile_of((0, 1.0), (nearest, 1.0))
        recs = recommend(prof, idx, MedoidCache(), RetrievalConfig(2, 100), make_rng(0))
        assert len(recs) < 100

    def test_deterministic_for_seed(self, world):
        _, idx = world
        prof = profile_of((0, 3.0), (200, 2.0), (400, 1.0), (5, 1.0))
        a = recommend(prof, idx, MedoidCache(), RetrievalConfig(2, 60), make_rng(7))
        b = recommend(prof, idx, None, RetrievalConfig(2, 60), make_rng(7))
        assert a == b

    def test_exhaustive_when_e_exceeds_clusters(self, world):
        _, idx = world
        prof = profile_of((0, 5.0), (200, 1.0))
        first = recommend(prof, idx, None, RetrievalConfig(3, 60), make_rng(0)).pins
        for seed in range(1, 10):
            assert recommend(prof, idx, None, RetrievalConfig(3, 60), make_rng(seed)).pins == first

    def test_excludes_acted_pins(self, world):
        _, idx = world
        recs = recommend(profile_of((0, 1.0)), idx, None, RetrievalConfig(1, 50), make_rng(0))
        seen = frozenset(recs.pins[:10])
        again = recommend(profile_of((0, 1.0)), idx, None, RetrievalConfig(1, 50), make_rng(0), exclude=seen)
        assert not seen & set(again.pins)
        assert 0 not in recs.pins

    def test_more_medoids_more_diverse(self, world):
        store, idx = world
        prof = profile_of((0, 1.0), (200, 1.0), (400, 1.0))
        one = recommend(prof, idx, None, RetrievalConfig(1, 90), make_rng(3))
        three = recommend(prof, idx, None, RetrievalConfig(3, 90), make_rng(3))
        assert diversity(three, store).value > diversity(one, store).value

    def test_json(self, world):
        _, idx = world
        recs = recommend(profile_of((0, 1.0)), idx, None, RetrievalConfig(1, 3), make_rng(0))
        payload = recs.to_json()
        assert payload["sampled_medoids"] == [0] and len(payload["pins"]) == 3

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RetrievalConfig(0, 10)
        with pytest.raises(ValueError):
            RetrievalConfig(5, 4)


class TestMerge:
    def test_keeps_best_similarity(self):
        out = merge_candidates([(1, [(10, 0.5), (11, 0.1)]), (2, [(10, 0.2)])], 10)
        assert [(r.pin, r.source) for r in out] == [(11, 1), (10, 2)]
        assert out[1].similarity == pytest.approx(0.8)

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.integers(0, 5), st.lists(st.tuples(st.integers(0, 30), st.floats(0, 2)),
                                                          max_size=20)), max_size=5), st.integers(1, 40))
    def test_budget_and_dedup(self, lists, budget):
        out = merge_candidates(lists, budget, exclude=frozenset({3}))
        pins = [r.pin for r in out]
        assert len(pins) <= budget and len(set(pins)) == len(pins) and 3 not in pins
        sims = [r.similarity for r in out]
        assert sims == sorted(sims, reverse=True)


class TestDiversity:
    def test_identical(self):
        store = make_store([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        assert diversity([0, 1, 2], store).value == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal(self):
        store = make_store([[1.0, 0.0], [0.0, 1.0]])
        assert diversity([0, 1], store).value == pytest.approx(1.0)

    def test_degenerate(self):
        store = make_store([[1.0, 0.0]])
        assert diversity([0], store) == (0.0, True)

    @given(st.integers(2, 12), st.integers(0, 10**6))
    def test_matches_pairwise_definition(self, n, seed):
        x = np.random.default_rng(seed).normal(size=(n, 5))
        u = unit_rows(x)
        pairs = [1 - u[i] @ u[j] for i in range(n) for j in range(i + 1, n)]
        assert mean_pairwise_cosine_distance(x) == pytest.approx(np.mean(pairs), abs=1e-12)
