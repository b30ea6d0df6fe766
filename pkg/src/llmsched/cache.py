"""Adaptive semantic cache.

Stores verified query/response pairs keyed by query id, serves lookups by
cosine similarity against stored embeddings, evicts least-recently-used
entries at capacity, and periodically organizes entries into k-means
clusters so lookups only scan the nearest clusters' members.  The
similarity threshold adapts to the measured cache success rate: it
tightens when returned matches are often wrong and relaxes when they are
consistently right.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, NamedTuple

import numpy as np

from .cluster import default_cluster_count, kmeans
from .domain import Query
from .embedding import Embedding
from .errors import InvalidInputError


@dataclass(frozen=True)
class CacheConfig:
    capacity: int = 10_000
    tau: float = 0.9
    tau_min: float = 0.7
    tau_max: float = 0.99
    tau_step: float = 0.01
    low_success_bound: float = 0.90
    high_success_bound: float = 0.98
    cluster_trigger: int = 500
    recluster_interval: int = 100
    probe_clusters: int = 1
    kmeans_max_iter: int = 50
    seed: int = 0
    # Cluster-count rule; callable config is a code-level seam, config files
    # always get the default policy.
    k_policy: Callable[[int], int] = field(default=default_cluster_count, compare=False)

    def __post_init__(self):
        if self.capacity < 1:
            raise InvalidInputError("cache capacity must be >= 1")
        if not 0.0 < self.tau <= 1.0:
            raise InvalidInputError("tau must be in (0, 1]")
        if not self.tau_min <= self.tau <= self.tau_max:
            raise InvalidInputError("tau must satisfy tau_min <= tau <= tau_max")
        if self.tau_step <= 0:
            raise InvalidInputError("tau_step must be > 0")
        if not 0.0 <= self.low_success_bound <= self.high_success_bound <= 1.0:
            raise InvalidInputError(
                "success bounds must satisfy 0 <= low <= high <= 1"
            )
        if self.cluster_trigger < 1 or self.recluster_interval < 1:
            raise InvalidInputError("cluster_trigger and recluster_interval must be >= 1")
        if self.probe_clusters < 1:
            raise InvalidInputError("probe_clusters must be >= 1")

    def to_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "tau": self.tau,
            "tau_min": self.tau_min,
            "tau_max": self.tau_max,
            "tau_step": self.tau_step,
            "low_success_bound": self.low_success_bound,
            "high_success_bound": self.high_success_bound,
            "cluster_trigger": self.cluster_trigger,
            "recluster_interval": self.recluster_interval,
            "probe_clusters": self.probe_clusters,
            "kmeans_max_iter": self.kmeans_max_iter,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CacheConfig":
        known = {f for f in cls.__dataclass_fields__ if f != "k_policy"}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class CacheStats:
    """Counters for one observation window.

    ``lookups``/``hits`` are directly measurable; ``inspected_hits`` and
    ``inspected_correct`` come from the small label-checked sample of served
    hits and drive threshold adaptation.
    """

    lookups: int = 0
    hits: int = 0
    inspected_hits: int = 0
    inspected_correct: int = 0

    def __post_init__(self):
        if self.hits > self.lookups or self.inspected_correct > self.inspected_hits:
            raise InvalidInputError("inconsistent cache stats")

    @property
    def success_rate(self) -> float | None:
        if self.inspected_hits == 0:
            return None
        return self.inspected_correct / self.inspected_hits


@dataclass
class CacheEntry:
    key: str
    embedding: Embedding
    response: str
    hit_count: int = 0
    last_access: int = 0
    cluster_id: int | None = None


class CacheHit(NamedTuple):
    key: str
    response: str
    similarity: float


class SemanticCache:
    """Similarity cache with LRU eviction and cluster-scoped lookup.

    Exclusive-writer semantics: lookups may run concurrently between
    mutations, but insert/recluster/adapt_threshold require exclusive
    access (lookup also bumps access metadata, so treat it as a writer when
    sharing across threads).
    """

    SNAPSHOT_VERSION = 1

    def __init__(self, config: CacheConfig, embed_fn: Callable[[str], Embedding]):
        self.config = config
        self._embed = embed_fn
        self._entries: dict[str, CacheEntry] = {}
        self._tau = config.tau
        self._tick = 0
        self._inserts_since_recluster = 0
        self._recluster_runs = 0
        self._centroids: np.ndarray | None = None
        # Lazily rebuilt lookup structures.
        self._matrix: np.ndarray | None = None
        self._norms: np.ndarray | None = None
        self._keys: list[str] = []
        self._cluster_rows: dict[int, np.ndarray] = {}
        self._dirty = True

    # -- introspection -------------------------------------------------

    @property
    def tau(self) -> float:
        return self._tau

    @property
    def size(self) -> int:
        return len(self._entries)

    @property
    def centroids(self) -> np.ndarray | None:
        return self._centroids

    @property
    def cluster_count(self) -> int:
        return 0 if self._centroids is None else len(self._centroids)

    def entries(self) -> list[CacheEntry]:
        return list(self._entries.values())

    # -- lookup ----------------------------------------------------------

    def lookup(self, query: Query) -> CacheHit | None:
        return self.lookup_embedding(self._embed(query.payload))

    def lookup_embedding(self, embedding: Embedding) -> CacheHit | None:
        """Best stored match with similarity >= tau, or None.

        With clustering active only the ``probe_clusters`` nearest
        centroids' members are scanned, so the global best match may be
        missed; that approximation is bounded by the probe_clusters knob.
        Ties on similarity break toward the most recently accessed entry,
        then the lexicographically smallest key.
        """
        self._tick += 1
        if not self._entries:
            return None
        self._rebuild()
        rows = self._candidate_rows(embedding)
        if rows.size == 0:
            return None

        matrix = self._matrix[rows]
        sims = matrix @ embedding
        norm_q = float(np.sqrt(embedding @ embedding))
        with np.errstate(invalid="ignore", divide="ignore"):
            sims = sims / (self._norms[rows] * norm_q)

        best_sim = float(np.max(sims))
        if best_sim < self._tau:
            return None
        tied = rows[np.nonzero(sims == best_sim)[0]]
        best_key = None
        best_rank = None
        for row in tied:
            entry = self._entries[self._keys[row]]
            rank = (-entry.last_access, entry.key)
            if best_rank is None or rank < best_rank:
                best_rank = rank
                best_key = entry.key
        entry = self._entries[best_key]
        entry.hit_count += 1
        entry.last_access = self._tick
        return CacheHit(key=entry.key, response=entry.response, similarity=best_sim)

    def _candidate_rows(self, embedding: Embedding) -> np.ndarray:
        if self._centroids is None:
            return np.arange(len(self._keys))
        d2 = np.einsum("ij,ij->i", self._centroids - embedding, self._centroids - embedding)
        probe = min(self.config.probe_clusters, len(self._centroids))
        nearest = np.argsort(d2, kind="stable")[:probe]
        groups = [self._cluster_rows.get(int(c), np.empty(0, dtype=int)) for c in nearest]
        return np.concatenate(groups) if groups else np.empty(0, dtype=int)

    # -- insertion and eviction -------------------------------------------

    def insert(self, query: Query, response: str) -> None:
        """Store a response for later reuse.

        Callers must only insert responses already verified correct (the
        update loop's inspection path); the cache itself cannot check them.
        """
        self.insert_embedding(query.id, self._embed(query.payload), response)

    def insert_embedding(self, key: str, embedding: Embedding, response: str) -> None:
        if not key:
            raise InvalidInputError("cache key must be non-empty")
        self._tick += 1
        cluster_id = None
        if self._centroids is not None:
            diff = self._centroids - embedding
            cluster_id = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
        # Duplicate keys replace the stored entry (refresh semantics).
        self._entries[key] = CacheEntry(
            key=key,
            embedding=embedding,
            response=response,
            hit_count=0,
            last_access=self._tick,
            cluster_id=cluster_id,
        )
        if len(self._entries) > self.config.capacity:
            lru = min(self._entries.values(), key=lambda e: e.last_access)
            del self._entries[lru.key]
        self._dirty = True
        self._inserts_since_recluster += 1
        if (
            self._inserts_since_recluster >= self.config.recluster_interval
            and len(self._entries) >= self.config.cluster_trigger
        ):
            self.recluster()

    # -- clustering -------------------------------------------------------

    def recluster(self) -> None:
        """Re-partition stored embeddings with k-means; no-op below the
        trigger size."""
        if len(self._entries) < self.config.cluster_trigger:
            return
        entries = list(self._entries.values())
        matrix = np.stack([e.embedding for e in entries])
        k = self.config.k_policy(len(entries))
        result = kmeans(
            matrix,
            k,
            seed=self.config.seed + self._recluster_runs,
            max_iter=self.config.kmeans_max_iter,
        )
        for entry, label in zip(entries, result.labels):
            entry.cluster_id = int(label)
        self._centroids = result.centroids
        self._recluster_runs += 1
        self._inserts_since_recluster = 0
        self._dirty = True

    # -- threshold adaptation ----------------------------------------------

    def adapt_threshold(self, stats: CacheStats) -> float:
        """Adjust tau from the latest inspection window and return it.

        A low success rate tightens the threshold (fewer false matches); a
        consistently high one relaxes it (more coverage).  An undefined
        success rate (nothing inspected) leaves tau untouched.
        """
        rate = stats.success_rate
        cfg = self.config
        if rate is not None:
            if rate < cfg.low_success_bound:
                self._tau = min(self._tau + cfg.tau_step, cfg.tau_max)
            elif rate > cfg.high_success_bound:
                self._tau = max(self._tau - cfg.tau_step, cfg.tau_min)
        return self._tau

    # -- snapshots ---------------------------------------------------------

    def dump_state(self) -> dict:
        return {
            "version": self.SNAPSHOT_VERSION,
            "tau": self._tau,
            "tick": self._tick,
            "inserts_since_recluster": self._inserts_since_recluster,
            "recluster_runs": self._recluster_runs,
            "centroids": None
            if self._centroids is None
            else [[float(v) for v in row] for row in self._centroids],
            "entries": [
                {
                    "key": e.key,
                    "embedding": [float(v) for v in e.embedding],
                    "response": e.response,
                    "hit_count": e.hit_count,
                    "last_access": e.last_access,
                    "cluster_id": e.cluster_id,
                }
                for e in self._entries.values()
            ],
        }

    def save_snapshot(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.dump_state(), fh, sort_keys=True)
            fh.write("\n")

    def load_state(self, state: Mapping) -> None:
        if state.get("version") != self.SNAPSHOT_VERSION:
            raise InvalidInputError(f"unsupported snapshot version {state.get('version')!r}")
        self._entries = {}
        for item in state["entries"]:
            emb = np.asarray(item["embedding"], dtype=np.float64)
            emb.flags.writeable = False
            self._entries[item["key"]] = CacheEntry(
                key=item["key"],
                embedding=emb,
                response=item["response"],
                hit_count=int(item["hit_count"]),
                last_access=int(item["last_access"]),
                cluster_id=item["cluster_id"],
            )
        self._tau = float(state["tau"])
        self._tick = int(state["tick"])
        self._inserts_since_recluster = int(state["inserts_since_recluster"])
        self._recluster_runs = int(state["recluster_runs"])
        raw = state["centroids"]
        self._centroids = None if raw is None else np.asarray(raw, dtype=np.float64)
        self._dirty = True

    @classmethod
    def from_snapshot(
        cls, path: str | Path, config: CacheConfig, embed_fn: Callable[[str], Embedding]
    ) -> "SemanticCache":
        cache = cls(config, embed_fn)
        with open(path, "r", encoding="utf-8") as fh:
            cache.load_state(json.load(fh))
        return cache

    # -- internals ----------------------------------------------------------

    def _rebuild(self) -> None:
        if not self._dirty:
            return
        self._keys = list(self._entries.keys())
        self._matrix = np.stack([self._entries[k].embedding for k in self._keys])
        self._norms = np.sqrt(np.einsum("ij,ij->i", self._matrix, self._matrix))
        if self._centroids is not None:
            by_cluster: dict[int, list[int]] = {}
            for row, key in enumerate(self._keys):
                cid = self._entries[key].cluster_id
                if cid is not None:
                    by_cluster.setdefault(cid, []).append(row)
            self._cluster_rows = {
                cid: np.asarray(rows, dtype=int) for cid, rows in by_cluster.items()
            }
        else:
            self._cluster_rows = {}
        self._dirty = False


def with_tau(config: CacheConfig, tau: float) -> CacheConfig:
    """Copy of ``config`` with a different starting threshold."""
    return replace(config, tau=tau)
