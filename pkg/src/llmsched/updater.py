"""Periodic feedback loop.

At period boundaries where ``period mod q_interval == 0`` a lightweight
inspection runs: a small sample of the window's LLM-served jobs -- balanced
across LLMs and diversified by farthest-point sampling on embeddings -- is
checked against ground truth.  Correct responses are promoted into the
cache, every inspected job feeds the retraining buffer, and the prediction
models retrain when their measured error crosses its threshold.  A seeded
handful of served cache hits is label-checked too, feeding the cache's
threshold adaptation.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .cache import CacheStats, SemanticCache
from .domain import RESERVED_TARGETS, CompletedJob, Query
from .embedding import Embedding
from .errors import InvalidInputError
from .predictor import (
    ModelBundle,
    ModelConfig,
    TrainingRow,
    classification_accuracy,
    mean_absolute_error,
    raw_features,
    retrain,
)


@dataclass(frozen=True)
class UpdateConfig:
    q_interval: int = 1
    inspection_rate: float = 0.01
    classifier_acc_floor: float = 0.85
    # Absolute MAE ceiling; when None it defaults to mae_ceiling_fraction of
    # the mean observed cost in the inspected batch (scale-free).
    regressor_mae_ceiling: float | None = None
    mae_ceiling_fraction: float = 0.25
    max_retrain_rows: int = 5000
    cache_inspect_limit: int = 10

    def __post_init__(self):
        if self.q_interval < 1:
            raise InvalidInputError("q_interval must be >= 1")
        if not 0.0 < self.inspection_rate <= 1.0:
            raise InvalidInputError("inspection_rate must be in (0, 1]")
        if not 0.0 <= self.classifier_acc_floor <= 1.0:
            raise InvalidInputError("classifier_acc_floor must be in [0, 1]")
        if self.regressor_mae_ceiling is not None and self.regressor_mae_ceiling < 0:
            raise InvalidInputError("regressor_mae_ceiling must be >= 0")
        if self.mae_ceiling_fraction <= 0:
            raise InvalidInputError("mae_ceiling_fraction must be > 0")
        if self.max_retrain_rows < 1:
            raise InvalidInputError("max_retrain_rows must be >= 1")
        if self.cache_inspect_limit < 0:
            raise InvalidInputError("cache_inspect_limit must be >= 0")

    def to_dict(self) -> dict:
        return {
            "q_interval": self.q_interval,
            "inspection_rate": self.inspection_rate,
            "classifier_acc_floor": self.classifier_acc_floor,
            "regressor_mae_ceiling": self.regressor_mae_ceiling,
            "mae_ceiling_fraction": self.mae_ceiling_fraction,
            "max_retrain_rows": self.max_retrain_rows,
            "cache_inspect_limit": self.cache_inspect_limit,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "UpdateConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})


def should_update(period: int, cfg: UpdateConfig) -> bool:
    """True iff the update process runs after this period."""
    if period < 1:
        raise InvalidInputError("period must be >= 1")
    return period % cfg.q_interval == 0


@dataclass(frozen=True)
class InspectedJob:
    job: CompletedJob
    query: Query


@dataclass(frozen=True)
class InspectionBatch:
    sampled: tuple[InspectedJob, ...]
    per_llm_counts: dict[str, int]


def farthest_point_sample(points: np.ndarray, quota: int, rng: np.random.Generator) -> list[int]:
    """Indices of ``quota`` points spread out by greedy max-min distance.

    The RNG only picks the starting candidate; the first selected point is
    the one farthest from it (the candidate itself is not auto-included),
    and each further pick maximizes the minimum distance to the selection.
    Ties break toward the lowest index.
    """
    n = len(points)
    if quota >= n:
        return list(range(n))
    if quota <= 0:
        return []
    points = np.asarray(points, dtype=np.float64)
    start = int(rng.integers(n))
    dist = np.linalg.norm(points - points[start], axis=1)
    selected = [int(np.argmax(dist))]
    min_dist = np.linalg.norm(points - points[selected[0]], axis=1)
    min_dist[selected[0]] = -1.0
    while len(selected) < quota:
        nxt = int(np.argmax(min_dist))
        selected.append(nxt)
        min_dist = np.minimum(min_dist, np.linalg.norm(points - points[nxt], axis=1))
        min_dist[nxt] = -1.0
    return selected


def sample_for_inspection(
    completed: Sequence[InspectedJob],
    cfg: UpdateConfig,
    seed: int,
    embed_fn: Callable[[str], Embedding],
) -> InspectionBatch:
    """Pick the jobs whose ground truth this window's inspection may consume.

    Target size is max(one per represented LLM, ceil(inspection_rate * n)),
    split evenly across the LLMs that served jobs (counts differ by at most
    one among LLMs with jobs left); within each LLM's pool, farthest-point
    sampling on embeddings keeps the picks diverse.
    """
    eligible = [item for item in completed if item.job.target not in RESERVED_TARGETS]
    if not eligible:
        return InspectionBatch(sampled=(), per_llm_counts={})

    pools: dict[str, list[InspectedJob]] = {}
    for item in eligible:
        pools.setdefault(item.job.target, []).append(item)
    llm_ids = sorted(pools)

    target = max(len(llm_ids), math.ceil(cfg.inspection_rate * len(eligible)))
    target = min(target, len(eligible))

    quotas = {llm: 0 for llm in llm_ids}
    remaining = target
    while remaining > 0:
        progressed = False
        for llm in llm_ids:
            if remaining == 0:
                break
            if quotas[llm] < len(pools[llm]):
                quotas[llm] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            break

    rng = np.random.default_rng(seed)
    sampled: list[InspectedJob] = []
    per_llm_counts: dict[str, int] = {}
    for llm in llm_ids:
        quota = quotas[llm]
        if quota == 0:
            continue
        pool = pools[llm]
        embeddings = np.stack([embed_fn(item.query.payload) for item in pool])
        picked = farthest_point_sample(embeddings, quota, rng)
        sampled.extend(pool[i] for i in sorted(picked))
        per_llm_counts[llm] = quota
    return InspectionBatch(sampled=tuple(sampled), per_llm_counts=per_llm_counts)


@dataclass(frozen=True)
class UpdateOutcome:
    period: int
    triggered: bool
    samples: int = 0
    per_llm_counts: dict[str, int] = field(default_factory=dict)
    accuracy: float | None = None
    mae: float | None = None
    retrained_classifier: bool = False
    retrained_regressor: bool = False
    tau_before: float | None = None
    tau_after: float | None = None
    labels_llm: int = 0
    labels_cache: int = 0
    cache_insertions: int = 0
    buffer_size: int = 0

    def to_record(self) -> dict:
        return {
            "period": self.period,
            "triggered": self.triggered,
            "samples": self.samples,
            "per_llm_counts": dict(sorted(self.per_llm_counts.items())),
            "accuracy": self.accuracy,
            "mae": self.mae,
            "retrained_classifier": self.retrained_classifier,
            "retrained_regressor": self.retrained_regressor,
            "tau_before": self.tau_before,
            "tau_after": self.tau_after,
            "labels_llm": self.labels_llm,
            "labels_cache": self.labels_cache,
            "cache_insertions": self.cache_insertions,
            "buffer_size": self.buffer_size,
        }


@dataclass
class WindowLog:
    """Completed work accumulated since the last triggered update."""

    llm_jobs: list[InspectedJob] = field(default_factory=list)
    cache_jobs: list[InspectedJob] = field(default_factory=list)
    lookups: int = 0
    hits: int = 0


class UpdateManager:
    """Owns the retraining buffer and runs the per-period update phase.

    Updates run exclusively at the period boundary; nothing here is safe to
    call while scheduling is in flight.
    """

    def __init__(
        self,
        cfg: UpdateConfig,
        init_rows: Sequence[TrainingRow],
        llm_order: Sequence[str],
        embed_fn: Callable[[str], Embedding],
        seed: int,
    ):
        self.cfg = cfg
        self._init_rows = list(init_rows)
        self._llm_index = {llm_id: k for k, llm_id in enumerate(llm_order)}
        self._embed = embed_fn
        self._seed = seed
        self.buffer: deque[TrainingRow] = deque(maxlen=cfg.max_retrain_rows)

    def run_period(
        self,
        period: int,
        window: WindowLog,
        cache: SemanticCache | None,
        bundle: ModelBundle,
    ) -> tuple[UpdateOutcome, ModelBundle]:
        """Run the update phase for ``period``; returns the outcome and the
        (possibly retrained) bundle.  No-op in non-trigger periods."""
        tau = cache.tau if cache is not None else None
        if not should_update(period, self.cfg):
            return UpdateOutcome(period=period, triggered=False,
                                 tau_before=tau, tau_after=tau,
                                 buffer_size=len(self.buffer)), bundle

        batch = sample_for_inspection(
            window.llm_jobs, self.cfg, seed=_mix(self._seed, period, 1), embed_fn=self._embed
        )
        outcome, bundle = self.apply_update(period, batch, cache, bundle, window)
        return outcome, bundle

    def apply_update(
        self,
        period: int,
        batch: InspectionBatch,
        cache: SemanticCache | None,
        bundle: ModelBundle,
        window: WindowLog,
    ) -> tuple[UpdateOutcome, ModelBundle]:
        tau_before = cache.tau if cache is not None else None

        # Promote inspected-correct responses and buffer every sampled job.
        cache_insertions = 0
        for item in batch.sampled:
            if item.job.success and cache is not None:
                cache.insert(item.query, item.job.response)
                cache_insertions += 1
            self.buffer.append(self._row_for(item))

        accuracy = mae = None
        retrain_cls = retrain_reg = False
        if batch.sampled:
            accuracy, mae = self._batch_errors(batch, bundle)
            ceiling = self.cfg.regressor_mae_ceiling
            if ceiling is None:
                mean_cost = float(np.mean([i.job.actual_cost for i in batch.sampled]))
                ceiling = self.cfg.mae_ceiling_fraction * mean_cost
            retrain_cls = accuracy < self.cfg.classifier_acc_floor
            retrain_reg = mae > ceiling
            if retrain_cls or retrain_reg:
                rows = self._init_rows + list(self.buffer)
                bundle = retrain(bundle, rows, retrain_cls, retrain_reg,
                                 seed=_mix(self._seed, period, 2))

        # Label-check a seeded handful of served cache hits to estimate the
        # cache success rate, then let the cache adapt its threshold.
        inspected_hits = inspected_correct = 0
        tau_after = tau_before
        if cache is not None:
            cache_sample = self._sample_cache_hits(window.cache_jobs, period)
            inspected_hits = len(cache_sample)
            inspected_correct = sum(1 for item in cache_sample if item.job.success)
            stats = CacheStats(
                lookups=window.lookups,
                hits=window.hits,
                inspected_hits=inspected_hits,
                inspected_correct=inspected_correct,
            )
            tau_after = cache.adapt_threshold(stats)

        outcome = UpdateOutcome(
            period=period,
            triggered=True,
            samples=len(batch.sampled),
            per_llm_counts=batch.per_llm_counts,
            accuracy=accuracy,
            mae=mae,
            retrained_classifier=retrain_cls,
            retrained_regressor=retrain_reg,
            tau_before=tau_before,
            tau_after=tau_after,
            labels_llm=len(batch.sampled),
            labels_cache=inspected_hits,
            cache_insertions=cache_insertions,
            buffer_size=len(self.buffer),
        )
        return outcome, bundle

    # -- internals ---------------------------------------------------------

    def _row_for(self, item: InspectedJob) -> TrainingRow:
        k = self._llm_index[item.job.target]
        features = raw_features(self._embed(item.query.payload), k, len(self._llm_index))
        return TrainingRow(features=features, success=int(bool(item.job.success)),
                           cost=item.job.actual_cost)

    def _batch_errors(self, batch: InspectionBatch, bundle: ModelBundle) -> tuple[float, float]:
        embeddings = np.stack([self._embed(i.query.payload) for i in batch.sampled])
        tokens = np.array([i.query.input_tokens for i in batch.sampled], dtype=np.float64)
        perf, cost = bundle.predict_matrix(embeddings, tokens)
        cols = np.array([self._llm_index[i.job.target] for i in batch.sampled])
        rows = np.arange(len(batch.sampled))
        probs = perf[rows, cols]
        preds = cost[rows, cols]
        labels = np.array([1.0 if i.job.success else 0.0 for i in batch.sampled])
        actual = np.array([i.job.actual_cost for i in batch.sampled])
        return classification_accuracy(probs, labels), mean_absolute_error(preds, actual)

    def _sample_cache_hits(self, cache_jobs: Sequence[InspectedJob], period: int) -> list[InspectedJob]:
        limit = self.cfg.cache_inspect_limit
        if limit == 0 or not cache_jobs:
            return []
        if len(cache_jobs) <= limit:
            return list(cache_jobs)
        rng = np.random.default_rng(_mix(self._seed, period, 3))
        idx = rng.choice(len(cache_jobs), size=limit, replace=False)
        return [cache_jobs[i] for i in sorted(idx)]


def _mix(*parts: int) -> list[int]:
    """Entropy list for np.random.default_rng derived from integer parts."""
    return [abs(int(p)) for p in parts]
