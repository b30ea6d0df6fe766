import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from llmsched.cache import CacheConfig, CacheStats, SemanticCache
from llmsched.domain import Query
from llmsched.embedding import EmbedderConfig, HashedTokenEmbedder, cosine
from llmsched.errors import InvalidInputError

EMBED = HashedTokenEmbedder(EmbedderConfig(dimension=16))


def make_cache(**kw):
    defaults = dict(capacity=100, tau=0.9, cluster_trigger=10_000)
    defaults.update(kw)
    return SemanticCache(CacheConfig(**defaults), EMBED)


def query(payload, qid=None):
    return Query(id=qid or payload.replace(" ", "-")[:40], payload=payload,
                 input_tokens=5, arrival_period=0, truth_category="x")


def unit(vec):
    vec = np.asarray(vec, dtype=float)
    return vec / np.linalg.norm(vec)


def linear_scan_oracle(entries, emb, tau):
    """Reference lookup: full scan, argmax cosine with threshold, ties by
    (last_access desc, key asc)."""
    best = None
    for e in entries:
        sim = cosine(e.embedding, emb)
        key = (-sim, -e.last_access, e.key)
        if sim >= tau and (best is None or key < best[0]):
            best = (key, e)
    return None if best is None else (best[1].key, -best[0][0])


class TestLookup:
    def test_empty_cache_misses(self):
        assert make_cache().lookup(query("anything")) is None

    def test_exact_payload_hits(self):
        cache = make_cache()
        cache.insert(query("parse this line", "a"), "resp-a")
        hit = cache.lookup(query("parse this line", "b"))
        assert hit is not None
        assert hit.response == "resp-a"
        assert hit.similarity == pytest.approx(1.0)

    def test_below_threshold_misses(self):
        cache = make_cache(tau=0.99)
        cache.insert(query("alpha beta gamma", "a"), "r")
        assert cache.lookup(query("alpha delta zzz", "b")) is None

    def test_hit_bumps_metadata_not_response(self):
        cache = make_cache()
        cache.insert(query("p q r", "a"), "resp")
        entry = cache.entries()[0]
        before = (entry.hit_count, entry.last_access)
        cache.lookup(query("p q r", "b"))
        after = (entry.hit_count, entry.last_access)
        assert after[0] == before[0] + 1
        assert after[1] > before[1]
        assert entry.response == "resp"

    def test_tie_breaks_to_most_recent_then_key(self):
        cache = make_cache(tau=0.5, tau_min=0.5)
        cache.insert_embedding("b", unit([1, 0, 0]), "resp-b")
        cache.insert_embedding("a", unit([1, 0, 0]), "resp-a")
        # identical embeddings; "a" inserted later so it is more recent
        hit = cache.lookup_embedding(unit([1, 0, 0]))
        assert hit.key == "a"
        # equalize recency: key order decides ("a" < "b")
        cache2 = make_cache(tau=0.5, tau_min=0.5)
        cache2.insert_embedding("b", unit([0, 1, 0]), "r1")
        cache2.insert_embedding("a", unit([0, 1, 0]), "r2")
        cache2.lookup_embedding(unit([0, 1, 0]))  # bumps "a"
        cache2.lookup_embedding(unit([0, 1, 0]))  # still "a" (most recent)
        assert cache2.lookup_embedding(unit([0, 1, 0])).key == "a"

    def test_matches_linear_scan_oracle_random(self):
        rng = np.random.default_rng(42)
        for trial in range(25):
            cache = make_cache(tau=0.9, cluster_trigger=10_000)
            for i in range(50):
                cache.insert_embedding(f"k{i:03d}", unit(rng.normal(size=8)), f"r{i}")
            probe = unit(rng.normal(size=8))
            expected = linear_scan_oracle(cache.entries(), probe, cache.tau)
            got = cache.lookup_embedding(probe)
            if expected is None:
                assert got is None
            else:
                assert got is not None and got.key == expected[0]


class TestInsertAndEviction:
    def test_lru_eviction(self):
        cache = make_cache(capacity=2)
        cache.insert_embedding("A", unit([1, 0, 0]), "ra")
        cache.insert_embedding("B", unit([0, 1, 0]), "rb")
        cache.insert_embedding("C", unit([0, 0, 1]), "rc")
        assert sorted(e.key for e in cache.entries()) == ["B", "C"]

    def test_recently_read_entry_survives(self):
        cache = make_cache(capacity=2, tau=0.5, tau_min=0.5)
        cache.insert_embedding("A", unit([1, 0, 0]), "ra")
        cache.insert_embedding("B", unit([0, 1, 0]), "rb")
        cache.lookup_embedding(unit([1, 0, 0]))  # refresh A
        cache.insert_embedding("C", unit([0, 0, 1]), "rc")
        assert sorted(e.key for e in cache.entries()) == ["A", "C"]

    def test_read_your_write(self):
        cache = make_cache()
        cache.insert(query("hello there", "a"), "resp")
        assert cache.lookup(query("hello there", "b")).response == "resp"

    def test_capacity_bound_under_many_inserts(self):
        cache = make_cache(capacity=100)
        rng = np.random.default_rng(0)
        for i in range(1000):
            cache.insert_embedding(f"k{i}", unit(rng.normal(size=4)), "r")
            assert cache.size <= 100
        assert cache.size == 100

    def test_duplicate_key_replaces(self):
        cache = make_cache()
        cache.insert_embedding("a", unit([1, 0]), "old")
        cache.insert_embedding("a", unit([1, 0]), "new")
        assert cache.size == 1
        assert cache.lookup_embedding(unit([1, 0])).response == "new"


class TestRecluster:
    def test_noop_below_trigger(self):
        cache = make_cache(cluster_trigger=50)
        for i in range(10):
            cache.insert_embedding(f"k{i}", unit(np.eye(16)[i % 16] + 0.01), "r")
        cache.recluster()
        assert cache.cluster_count == 0

    def test_assignments_are_argmin_distance(self):
        cache = make_cache(cluster_trigger=4, recluster_interval=10_000)
        rng = np.random.default_rng(1)
        for i in range(30):
            cache.insert_embedding(f"k{i}", unit(rng.normal(size=6)), "r")
        cache.recluster()
        centroids = cache.centroids
        for e in cache.entries():
            d2 = ((centroids - e.embedding) ** 2).sum(axis=1)
            assert e.cluster_id == int(np.argmin(d2))

    def test_probe_all_clusters_equals_linear_scan(self):
        rng = np.random.default_rng(7)
        for trial in range(10):
            cache = make_cache(tau=0.8, cluster_trigger=5, recluster_interval=10_000,
                               probe_clusters=64)
            for i in range(60):
                cache.insert_embedding(f"k{i:03d}", unit(rng.normal(size=8)), f"r{i}")
            cache.recluster()
            assert cache.cluster_count >= 2
            probe = unit(rng.normal(size=8))
            expected = linear_scan_oracle(cache.entries(), probe, cache.tau)
            got = cache.lookup_embedding(probe)
            if expected is None:
                assert got is None
            else:
                assert got is not None and got.key == expected[0]

    def test_recluster_triggered_by_insert_interval(self):
        cache = make_cache(cluster_trigger=10, recluster_interval=10)
        rng = np.random.default_rng(2)
        for i in range(25):
            cache.insert_embedding(f"k{i}", unit(rng.normal(size=4)), "r")
        assert cache.cluster_count >= 2

    def test_inserts_after_clustering_get_cluster_ids(self):
        cache = make_cache(cluster_trigger=5, recluster_interval=10_000, tau=0.5,
                           tau_min=0.5, probe_clusters=64)
        rng = np.random.default_rng(3)
        for i in range(10):
            cache.insert_embedding(f"k{i}", unit(rng.normal(size=4)), "r")
        cache.recluster()
        cache.insert_embedding("late", unit([1, 0, 0, 0]), "late-resp")
        entry = [e for e in cache.entries() if e.key == "late"][0]
        assert entry.cluster_id is not None
        assert cache.lookup_embedding(unit([1, 0, 0, 0])).key == "late"


class TestAdaptThreshold:
    def test_tightens_on_low_success(self):
        cache = make_cache(tau=0.90, tau_step=0.01, tau_max=0.99)
        stats = CacheStats(lookups=10, hits=10, inspected_hits=10, inspected_correct=5)
        assert cache.adapt_threshold(stats) == pytest.approx(0.91)

    def test_clamps_at_max(self):
        cache = make_cache(tau=0.99, tau_max=0.99)
        stats = CacheStats(lookups=10, hits=10, inspected_hits=10, inspected_correct=5)
        assert cache.adapt_threshold(stats) == pytest.approx(0.99)

    def test_relaxes_on_high_success(self):
        cache = make_cache(tau=0.90, tau_step=0.01, high_success_bound=0.98)
        stats = CacheStats(lookups=200, hits=200, inspected_hits=200, inspected_correct=199)
        assert cache.adapt_threshold(stats) == pytest.approx(0.89)

    def test_unchanged_when_nothing_inspected(self):
        cache = make_cache(tau=0.9)
        assert cache.adapt_threshold(CacheStats(lookups=5, hits=2)) == pytest.approx(0.9)

    def test_unchanged_in_mid_band(self):
        cache = make_cache(tau=0.9, low_success_bound=0.9, high_success_bound=0.98)
        stats = CacheStats(lookups=100, hits=100, inspected_hits=100, inspected_correct=95)
        assert cache.adapt_threshold(stats) == pytest.approx(0.9)

    @given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), max_size=40))
    @settings(max_examples=60)
    def test_tau_stays_within_bounds(self, windows):
        cache = make_cache(tau=0.9, tau_min=0.7, tau_max=0.99, tau_step=0.05)
        for hits, correct in windows:
            correct = min(correct, hits)
            cache.adapt_threshold(
                CacheStats(lookups=hits, hits=hits, inspected_hits=hits,
                           inspected_correct=correct)
            )
            assert 0.7 <= cache.tau <= 0.99

    def test_stats_validation(self):
        with pytest.raises(InvalidInputError):
            CacheStats(lookups=1, hits=2)


class TestSnapshot:
    def build(self):
        cache = make_cache(cluster_trigger=5, recluster_interval=10_000, tau=0.85)
        rng = np.random.default_rng(11)
        for i in range(12):
            cache.insert_embedding(f"k{i}", unit(rng.normal(size=6)), f"resp-{i}")
        cache.recluster()
        cache.lookup_embedding(unit(rng.normal(size=6)))
        return cache

    def test_round_trip_is_lossless(self, tmp_path):
        cache = self.build()
        path = tmp_path / "snap.json"
        cache.save_snapshot(path)
        first = path.read_bytes()

        restored = SemanticCache.from_snapshot(path, cache.config, EMBED)
        restored.save_snapshot(path)
        assert path.read_bytes() == first

        # restored cache behaves identically
        probe = unit(np.arange(1.0, 7.0))
        a = cache.lookup_embedding(probe)
        b = restored.lookup_embedding(probe)
        assert (a is None) == (b is None)
        if a is not None:
            assert (a.key, a.response, a.similarity) == (b.key, b.response, b.similarity)
        assert restored.tau == cache.tau

    def test_rejects_unknown_version(self, tmp_path):
        cache = self.build()
        state = cache.dump_state()
        state["version"] = 99
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(state))
        with pytest.raises(InvalidInputError):
            SemanticCache.from_snapshot(path, cache.config, EMBED)


class TestConfigValidation:
    def test_tau_bounds_ordering(self):
        with pytest.raises(InvalidInputError):
            CacheConfig(tau=0.9, tau_min=0.95, tau_max=0.99)

    def test_capacity_positive(self):
        with pytest.raises(InvalidInputError):
            CacheConfig(capacity=0)

    def test_dict_round_trip(self):
        cfg = CacheConfig(capacity=5, tau=0.8, tau_min=0.75, tau_max=0.95)
        assert CacheConfig.from_dict(cfg.to_dict()) == cfg
