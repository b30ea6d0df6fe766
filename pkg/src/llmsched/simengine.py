"""Deterministic rolling-horizon simulation.

One run: resolve the workload, collect the bootstrap set by submitting the
first ``init_fraction`` of queries to every candidate endpoint, train the
predictors, then play the remaining queries period by period through the
configured method (adaptive cache + scheduler + update loop, or one of the
baselines).  Identical (config, seed) always produce identical reports.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .cache import CacheConfig, SemanticCache
from .domain import (
    CACHE_TARGET,
    SKIPPED_TARGET,
    Assignment,
    CompletedJob,
    HorizonBatch,
    LLMProfile,
    Query,
    WorkloadRecord,
    invocation_cost,
    load_workload,
)
from .embedding import CachingEmbedder, EmbedderConfig, make_embedder
from .errors import ConfigError, InvalidInputError
from .predictor import ModelBundle, ModelConfig, TrainingRow, raw_features, train
from .scenario import (
    CategorySpec,
    Scenario,
    default_scenario,
    load_scenario,
    make_synthetic_workload,
)
from .scheduler import SchedulingRule, allocate
from .updater import InspectedJob, UpdateConfig, UpdateManager, UpdateOutcome, WindowLog

REPORT_VERSION = 1

METHOD_SLS = "sls"
METHOD_FIFO = "fifo"
METHOD_RANDOM = "random"
METHOD_STATIC_ONCE = "static_once"
METHOD_SINGLE = "single"

_RNG_KEY = b"llmsched-rng-v1"


def stable_u64(text: str) -> int:
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8, key=_RNG_KEY).digest()
    return int.from_bytes(digest, "big")


def _rng(*parts: int) -> np.random.Generator:
    return np.random.default_rng([abs(int(p)) for p in parts])


# -- ground-truth oracle ---------------------------------------------------


def true_answer(payload: str) -> str:
    """Canonical correct response for a payload; shared by duplicates."""
    digest = hashlib.blake2b(payload.encode("utf-8"), digest_size=6, key=b"truth").hexdigest()
    return f"ans-{digest}"


def wrong_answer(payload: str, llm_id: str) -> str:
    digest = hashlib.blake2b(
        f"{payload}|{llm_id}".encode("utf-8"), digest_size=6, key=b"wrong"
    ).hexdigest()
    return f"err-{digest}"


class MockProvider:
    """Stands in for one endpoint's API.

    Outcomes are keyed per (run seed, provider, query), so resubmitting a
    query to the same provider within a run repeats its result, and
    identical (seed, query sequence) always produce identical outcomes.
    """

    def __init__(self, profile: LLMProfile, categories: Mapping[str, CategorySpec],
                 run_seed: int):
        self.profile = profile
        self._categories = categories
        self._entropy = [abs(run_seed), 2, stable_u64(profile.id)]

    def execute(self, query: Query, period: int) -> CompletedJob:
        rng = np.random.default_rng(self._entropy + [stable_u64(query.id)])
        p = self.profile.success_table[query.truth_category]
        success = bool(rng.random() < p)
        spec = self._categories[query.truth_category]
        tokens = max(
            1,
            int(round(math.exp(rng.normal(math.log(spec.output_tokens_mean),
                                          spec.output_tokens_sigma)))),
        )
        cost = invocation_cost(query, self.profile, tokens)
        latency = self.profile.latency.latency_ms(tokens)
        response = true_answer(query.payload) if success else wrong_answer(
            query.payload, self.profile.id
        )
        return CompletedJob(
            query_id=query.id,
            target=self.profile.id,
            response=response,
            actual_cost=cost,
            actual_latency=latency,
            success=success,
            period=period,
        )


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class AblationFlags:
    no_cache: bool = False
    no_scheduler: bool = False
    no_updater: bool = False

    def any_set(self) -> bool:
        return self.no_cache or self.no_scheduler or self.no_updater

    def to_dict(self) -> dict:
        return {
            "no_cache": self.no_cache,
            "no_scheduler": self.no_scheduler,
            "no_updater": self.no_updater,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AblationFlags":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: bool(v) for k, v in data.items() if k in known})


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"  # synthetic | file
    path: str | None = None
    size: int = 3000
    duplicate_fraction: float = 0.5
    hot_pool_size: int = 5
    seed: int = 3

    def __post_init__(self):
        if self.kind not in ("synthetic", "file"):
            raise InvalidInputError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise InvalidInputError("file datasets require a path")
        if self.kind == "synthetic" and self.size < 10:
            raise InvalidInputError("synthetic datasets require size >= 10")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "path": self.path,
            "size": self.size,
            "duplicate_fraction": self.duplicate_fraction,
            "hot_pool_size": self.hot_pool_size,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DatasetConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})


def _parse_method(method: str, scenario: Scenario) -> None:
    base, _, arg = method.partition(":")
    if base == METHOD_SINGLE:
        if not arg:
            raise ConfigError("method", "single requires a target, e.g. 'single:omni'")
        if arg not in scenario.provider_ids():
            raise ConfigError("method", f"unknown provider {arg!r} for single method")
        return
    if arg:
        raise ConfigError("method", f"method {base!r} takes no argument")
    if base not in (METHOD_SLS, METHOD_FIFO, METHOD_RANDOM, METHOD_STATIC_ONCE):
        raise ConfigError("method", f"unknown method {method!r}")


@dataclass(frozen=True)
class SimConfig:
    scenario: Scenario
    dataset: DatasetConfig = DatasetConfig()
    seed: int = 0
    repetitions: int = 30
    method: str = METHOD_SLS
    init_fraction: float = 0.01
    lambda_range: tuple[float, float] = (0.1, 0.2)
    # When set, periods take exactly this many queries instead of Poisson
    # draws; horizon control for protocol tests.
    period_size: int | None = None
    ablations: AblationFlags = AblationFlags()
    embedder: EmbedderConfig = EmbedderConfig()
    cache: CacheConfig = CacheConfig()
    update: UpdateConfig = UpdateConfig()
    rule: SchedulingRule = SchedulingRule()
    model: ModelConfig = ModelConfig()

    def __post_init__(self):
        if not 0.0 < self.init_fraction < 1.0:
            raise InvalidInputError("init_fraction must be in (0, 1)")
        if self.repetitions < 1:
            raise InvalidInputError("repetitions must be >= 1")
        lo, hi = self.lambda_range
        if not 0.0 < lo <= hi:
            raise InvalidInputError("lambda_range must satisfy 0 < low <= high")
        if self.period_size is not None and self.period_size < 1:
            raise InvalidInputError("period_size must be >= 1")
        _parse_method(self.method, self.scenario)
        if self.ablations.any_set() and self.method_base != METHOD_SLS:
            raise InvalidInputError("ablations only apply to the sls method")

    @property
    def method_base(self) -> str:
        return self.method.partition(":")[0]

    @property
    def single_target(self) -> str | None:
        base, _, arg = self.method.partition(":")
        return arg if base == METHOD_SINGLE else None

    def uses_init(self) -> bool:
        return self.method_base in (METHOD_SLS, METHOD_STATIC_ONCE)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "repetitions": self.repetitions,
            "method": self.method,
            "init_fraction": self.init_fraction,
            "lambda_range": list(self.lambda_range),
            "period_size": self.period_size,
            "dataset": self.dataset.to_dict(),
            "scenario": self.scenario.to_dict(),
            "ablations": self.ablations.to_dict(),
            "embedder": self.embedder.to_dict(),
            "cache": self.cache.to_dict(),
            "update": self.update.to_dict(),
            "rule": self.rule.to_dict(),
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping, base_dir: str | Path | None = None) -> "SimConfig":
        base = Path(base_dir) if base_dir else Path.cwd()

        def section(name, parser, default):
            raw = data.get(name)
            if raw is None:
                return default
            if not isinstance(raw, Mapping):
                raise ConfigError(name, "expected an object")
            try:
                return parser(raw)
            except (InvalidInputError, KeyError, TypeError, ValueError) as exc:
                raise ConfigError(name, str(exc))

        raw_scenario = data.get("scenario", {"builtin": "default"})
        if not isinstance(raw_scenario, Mapping):
            raise ConfigError("scenario", "expected an object")
        try:
            if "builtin" in raw_scenario:
                if raw_scenario["builtin"] != "default":
                    raise InvalidInputError(f"unknown builtin {raw_scenario['builtin']!r}")
                scenario = default_scenario()
            elif "path" in raw_scenario:
                scenario = load_scenario(base / raw_scenario["path"])
            else:
                scenario = Scenario.from_dict(raw_scenario)
        except (InvalidInputError, KeyError, TypeError, ValueError, OSError) as exc:
            raise ConfigError("scenario", str(exc))

        dataset = section("dataset", DatasetConfig.from_dict, DatasetConfig())
        if dataset.kind == "file" and dataset.path:
            dataset = replace(dataset, path=str(base / dataset.path))

        lam = data.get("lambda_range", [0.1, 0.2])
        try:
            return cls(
                scenario=scenario,
                dataset=dataset,
                seed=int(data.get("seed", 0)),
                repetitions=int(data.get("repetitions", 30)),
                method=str(data.get("method", METHOD_SLS)),
                init_fraction=float(data.get("init_fraction", 0.01)),
                lambda_range=(float(lam[0]), float(lam[1])),
                period_size=None if data.get("period_size") is None else int(data["period_size"]),
                ablations=section("ablations", AblationFlags.from_dict, AblationFlags()),
                embedder=section("embedder", EmbedderConfig.from_dict, EmbedderConfig()),
                cache=section("cache", CacheConfig.from_dict, CacheConfig()),
                update=section("update", UpdateConfig.from_dict, UpdateConfig()),
                rule=section("rule", SchedulingRule.from_dict, SchedulingRule()),
                model=section("model", ModelConfig.from_dict, ModelConfig()),
            )
        except InvalidInputError as exc:
            raise ConfigError("config", str(exc))

    def scenario_hash(self) -> str:
        blob = json.dumps(
            {"scenario": self.scenario.to_dict(), "dataset": self.dataset.to_dict()},
            sort_keys=True,
        ).encode("utf-8")
        return hashlib.blake2b(blob, digest_size=8).hexdigest()


# -- workload -----------------------------------------------------------------


def dataset_records(cfg: SimConfig) -> list[WorkloadRecord]:
    if cfg.dataset.kind == "file":
        records = load_workload(cfg.dataset.path)
    else:
        records = make_synthetic_workload(
            size=cfg.dataset.size,
            duplicate_fraction=cfg.dataset.duplicate_fraction,
            hot_pool_size=cfg.dataset.hot_pool_size,
            categories=cfg.scenario.categories,
            seed=cfg.dataset.seed,
        )
    if len(records) < 10:
        raise ConfigError("dataset", "workload must contain at least 10 queries")
    known = set(cfg.scenario.categories)
    for record in records:
        if record.truth_category not in known:
            raise ConfigError(
                "dataset",
                f"query {record.id!r} has unknown truth_category {record.truth_category!r}",
            )
    return records


def generate_workload(
    records: Sequence[WorkloadRecord],
    cfg: SimConfig,
    run_seed: int,
) -> tuple[list[Query], list[HorizonBatch], float | None]:
    """Split the dataset into the bootstrap set and per-period batches.

    Methods without an initialization phase schedule every query.  Per-period
    counts are Poisson with a rate drawn once from lambda_range * dataset
    size; the final period takes whatever remains.
    """
    s = len(records)
    init_count = math.ceil(cfg.init_fraction * s) if cfg.uses_init() else 0
    init_queries = [rec.to_query(0) for rec in records[:init_count]]
    rest = records[init_count:]

    lam: float | None = None
    counts: list[int] = []
    if cfg.period_size is not None:
        counts = [cfg.period_size] * math.ceil(len(rest) / cfg.period_size)
    else:
        rng = _rng(run_seed, 11)
        lam = float(rng.uniform(cfg.lambda_range[0] * s, cfg.lambda_range[1] * s))
        remaining = len(rest)
        idle = 0
        while remaining > 0:
            count = int(rng.poisson(lam))
            idle = idle + 1 if count == 0 else 0
            if idle > 1000:  # pathological rate; flush the tail
                count = remaining
            counts.append(min(count, remaining))
            remaining -= counts[-1]

    batches = []
    cursor = 0
    for t, count in enumerate(counts, start=1):
        chunk = rest[cursor:cursor + count]
        cursor += count
        batches.append(HorizonBatch(period=t, queries=tuple(r.to_query(t) for r in chunk)))
    return init_queries, batches, lam


def period_makespan(per_llm_ms: Mapping[str, float], cache_ms: float) -> float:
    """Period completion time: max over serving LLMs of serial processing
    time plus cache retrieval time, or cache time alone if no LLM served."""
    if per_llm_ms:
        return max(t + cache_ms for t in per_llm_ms.values())
    return cache_ms


# -- results -------------------------------------------------------------------


@dataclass(frozen=True)
class PeriodMetrics:
    period: int
    n_queries: int
    cost: float
    perf: float
    makespan_ms: float
    cache_hit_rate: float
    cache_perf: float
    scheduler_hit_rate: float
    scheduler_perf: float
    cache_served: int
    llm_served: int
    skipped: int
    correct: int

    def to_record(self) -> dict:
        return {
            "period": self.period,
            "n_queries": self.n_queries,
            "cost": self.cost,
            "perf": self.perf,
            "makespan_ms": self.makespan_ms,
            "cache_hit_rate": self.cache_hit_rate,
            "cache_perf": self.cache_perf,
            "scheduler_hit_rate": self.scheduler_hit_rate,
            "scheduler_perf": self.scheduler_perf,
            "cache_served": self.cache_served,
            "llm_served": self.llm_served,
            "skipped": self.skipped,
            "correct": self.correct,
        }


@dataclass
class RunReport:
    version: int
    seed: int
    method: str
    scenario_hash: str
    lam: float | None
    config: dict
    initialization: dict
    totals: dict
    counts: dict
    periods: list[dict]
    events: list[dict]
    jobs: list[dict] = field(default_factory=list)

    def to_dict(self, include_jobs: bool = False) -> dict:
        data = {
            "version": self.version,
            "seed": self.seed,
            "method": self.method,
            "scenario_hash": self.scenario_hash,
            "lambda": self.lam,
            "config": self.config,
            "initialization": self.initialization,
            "totals": self.totals,
            "counts": self.counts,
            "periods": self.periods,
            "events": self.events,
        }
        if include_jobs:
            data["jobs"] = self.jobs
        return data


def _stat3(values: Sequence[float]) -> dict:
    return {"avg": float(np.mean(values)), "max": float(max(values)), "min": float(min(values))}


@dataclass
class ExperimentResult:
    """All repetitions of one configuration plus their aggregate."""

    config: dict
    scenario_hash: str
    reports: list[RunReport]

    def summary(self) -> dict:
        return {
            "perf": _stat3([r.totals["perf"] for r in self.reports]),
            "cost": _stat3([r.totals["cost"] for r in self.reports]),
            "makespan_ms": _stat3([r.totals["makespan_ms"] for r in self.reports]),
            "cache_hit_rate": _stat3(
                [r.counts["cache_served"] / max(1, r.counts["scheduled_queries"])
                 for r in self.reports]
            ),
        }

    def to_summary_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "method": self.config["method"],
            "scenario_hash": self.scenario_hash,
            "config": self.config,
            "repetitions": [
                {"seed": r.seed, "totals": r.totals, "lambda": r.lam} for r in self.reports
            ],
            "summary": self.summary(),
        }


# -- the engine ----------------------------------------------------------------


class Simulation:
    """One repetition of one configuration."""

    def __init__(self, cfg: SimConfig, records: Sequence[WorkloadRecord], run_seed: int):
        self.cfg = cfg
        self.records = records
        self.run_seed = run_seed
        scenario = cfg.scenario
        self.llms = list(scenario.providers)
        self.providers = {
            llm.id: MockProvider(llm, scenario.categories, run_seed) for llm in self.llms
        }
        self.embed = CachingEmbedder(make_embedder(cfg.embedder))
        self.cache: SemanticCache | None = None
        self.bundle: ModelBundle | None = None
        self.updater: UpdateManager | None = None
        self._window = WindowLog()
        self._rr_position = 0
        self._random_rng = _rng(run_seed, 3)
        self._fallback_rng = _rng(run_seed, 4)
        self._static_targets: dict[str, str] = {}
        self._events: list[dict] = []
        self._job_log: list[dict] = []

    # -- initialization ------------------------------------------------------

    def _init_phase(
        self, init_queries: Sequence[Query]
    ) -> tuple[list[TrainingRow], float, float, dict[str, bool]]:
        """Submit every bootstrap query to every candidate endpoint.

        Returns the labeled rows, the charged initialization cost and time
        (endpoints run in parallel, jobs on one endpoint serially), and a
        map of which queries any endpoint answered correctly.
        """
        rows: list[TrainingRow] = []
        total_cost = 0.0
        per_llm_ms = {llm.id: 0.0 for llm in self.llms}
        any_correct: dict[str, bool] = {}
        m = len(self.llms)
        for query in init_queries:
            emb = self.embed(query.payload)
            succeeded = False
            for k, llm in enumerate(self.llms):
                job = self.providers[llm.id].execute(query, period=0)
                rows.append(
                    TrainingRow(
                        features=raw_features(emb, k, m),
                        success=int(bool(job.success)),
                        cost=job.actual_cost,
                    )
                )
                total_cost += job.actual_cost
                per_llm_ms[llm.id] += job.actual_latency
                succeeded = succeeded or bool(job.success)
            any_correct[query.id] = succeeded
        init_time = max(per_llm_ms.values()) if init_queries else 0.0
        return rows, total_cost, init_time, any_correct

    # -- per-period routing ----------------------------------------------------

    def _route_misses(self, misses: Sequence[Query]) -> list[tuple[Assignment, Query]]:
        cfg = self.cfg
        base = cfg.method_base
        if base == METHOD_SLS and not cfg.ablations.no_scheduler:
            plan = allocate(misses, self.bundle, self.llms, cfg.rule, self.embed)
            return list(zip(plan.assignments, misses))
        out: list[tuple[Assignment, Query]] = []
        for query in misses:
            if base == METHOD_SLS:  # no_scheduler ablation: uniform choice
                target = self.llms[int(self._fallback_rng.integers(len(self.llms)))].id
            elif base == METHOD_FIFO:
                target = self.llms[self._rr_position % len(self.llms)].id
                self._rr_position += 1
            elif base == METHOD_RANDOM:
                target = self.llms[int(self._random_rng.integers(len(self.llms)))].id
            elif base == METHOD_SINGLE:
                target = cfg.single_target
            else:  # static_once
                target = self._static_targets[query.id]
            out.append((Assignment(query.id, target, 0.0, 0.0), query))
        return out

    def _run_period(self, batch: HorizonBatch) -> PeriodMetrics:
        cfg = self.cfg
        period = batch.period
        jobs: list[CompletedJob] = []
        lookups = 0
        misses: list[Query] = []

        for query in batch.queries:
            if self.cache is not None:
                lookups += 1
                hit = self.cache.lookup(query)
                if hit is not None:
                    job = CompletedJob(
                        query_id=query.id,
                        target=CACHE_TARGET,
                        response=hit.response,
                        actual_cost=0.0,
                        actual_latency=cfg.scenario.cache_lookup_ms,
                        success=hit.response == true_answer(query.payload),
                        period=period,
                    )
                    jobs.append(job)
                    self._window.cache_jobs.append(InspectedJob(job, query))
                    continue
            misses.append(query)

        per_llm_ms: dict[str, float] = {}
        for assignment, query in self._route_misses(misses):
            if assignment.target == SKIPPED_TARGET:
                jobs.append(
                    CompletedJob(query.id, SKIPPED_TARGET, "", 0.0, 0.0, False, period)
                )
                continue
            job = self.providers[assignment.target].execute(query, period)
            jobs.append(job)
            per_llm_ms[job.target] = per_llm_ms.get(job.target, 0.0) + job.actual_latency
            self._window.llm_jobs.append(InspectedJob(job, query))

        cache_served = sum(1 for j in jobs if j.target == CACHE_TARGET)
        self._window.lookups += lookups
        self._window.hits += cache_served

        cache_ms = lookups * cfg.scenario.cache_lookup_ms
        makespan = period_makespan(per_llm_ms, cache_ms)
        cost = sum(j.actual_cost for j in jobs)
        correct = sum(1 for j in jobs if j.success)
        n = len(batch)
        skipped = sum(1 for j in jobs if j.target == SKIPPED_TARGET)
        llm_served = n - cache_served - skipped
        routed = llm_served + skipped
        llm_correct = sum(
            1 for j in jobs if j.success and j.target not in (CACHE_TARGET, SKIPPED_TARGET)
        )
        cache_correct = sum(1 for j in jobs if j.success and j.target == CACHE_TARGET)

        for job in jobs:
            self._job_log.append(
                {
                    "period": period,
                    "query_id": job.query_id,
                    "target": job.target,
                    "cost": job.actual_cost,
                    "latency_ms": job.actual_latency,
                    "success": bool(job.success),
                }
            )

        self._after_period(period)

        return PeriodMetrics(
            period=period,
            n_queries=n,
            cost=cost,
            perf=correct / n if n else 0.0,
            makespan_ms=makespan,
            cache_hit_rate=cache_served / n if n else 0.0,
            cache_perf=cache_correct / cache_served if cache_served else 0.0,
            scheduler_hit_rate=routed / n if n else 0.0,
            scheduler_perf=llm_correct / routed if routed else 0.0,
            cache_served=cache_served,
            llm_served=llm_served,
            skipped=skipped,
            correct=correct,
        )

    def _after_period(self, period: int) -> None:
        if self.cfg.method_base != METHOD_SLS:
            return
        tau = self.cache.tau if self.cache is not None else None
        if self.updater is not None:
            outcome, self.bundle = self.updater.run_period(
                period, self._window, self.cache, self.bundle
            )
            if outcome.triggered:
                self._window = WindowLog()
        else:
            outcome = UpdateOutcome(period=period, triggered=False,
                                    tau_before=tau, tau_after=tau)
        record = outcome.to_record()
        record["tau"] = self.cache.tau if self.cache is not None else None
        record["bundle_digest"] = self.bundle.digest() if self.bundle is not None else None
        self._events.append(record)

    # -- one full repetition -----------------------------------------------------

    def run(self) -> RunReport:
        cfg = self.cfg
        init_queries, batches, lam = generate_workload(self.records, cfg, self.run_seed)

        init_cost = 0.0
        init_time = 0.0
        if cfg.uses_init():
            rows, init_cost, init_time, any_correct = self._init_phase(init_queries)
            self.bundle = train(
                rows, self.llms, cfg.embedder, cfg.model,
                seed=abs(self.run_seed) * 1_000_003 + 17,
            )
            if cfg.method_base == METHOD_SLS:
                if not cfg.ablations.no_cache:
                    self.cache = SemanticCache(cfg.cache, self.embed)
                    # Bootstrap jobs are fully labeled: queries any endpoint
                    # answered correctly enter the cache as verified pairs.
                    for query in init_queries:
                        if any_correct[query.id]:
                            self.cache.insert(query, true_answer(query.payload))
                if not cfg.ablations.no_updater:
                    self.updater = UpdateManager(
                        cfg.update,
                        init_rows=rows,
                        llm_order=[llm.id for llm in self.llms],
                        embed_fn=self.embed,
                        seed=abs(self.run_seed) * 1_000_003 + 29,
                    )
            if cfg.method_base == METHOD_STATIC_ONCE:
                every = [q for b in batches for q in b.queries]
                plan = allocate(every, self.bundle, self.llms, cfg.rule, self.embed)
                self._static_targets = {a.query_id: a.target for a in plan.assignments}

        period_metrics = [self._run_period(batch) for batch in batches]

        scheduled = sum(p.n_queries for p in period_metrics)
        correct = sum(p.correct for p in period_metrics)
        totals = {
            "cost": init_cost + sum(p.cost for p in period_metrics),
            "perf": correct / scheduled if scheduled else 0.0,
            "makespan_ms": init_time + sum(p.makespan_ms for p in period_metrics),
        }
        counts = {
            "queries": len(self.records),
            "init_queries": len(init_queries),
            "scheduled_queries": scheduled,
            "cache_served": sum(p.cache_served for p in period_metrics),
            "llm_served": sum(p.llm_served for p in period_metrics),
            "skipped": sum(p.skipped for p in period_metrics),
            "correct": correct,
            "periods": len(period_metrics),
        }
        return RunReport(
            version=REPORT_VERSION,
            seed=self.run_seed,
            method=cfg.method,
            scenario_hash=cfg.scenario_hash(),
            lam=lam,
            config=cfg.to_dict(),
            initialization={
                "cost": init_cost,
                "time_ms": init_time,
                "queries": len(init_queries),
                "jobs": len(init_queries) * len(self.llms),
            },
            totals=totals,
            counts=counts,
            periods=[p.to_record() for p in period_metrics],
            events=self._events,
            jobs=self._job_log,
        )


def run(cfg: SimConfig) -> ExperimentResult:
    """Run every repetition (seeds seed, seed+1, ...) and aggregate."""
    records = dataset_records(cfg)
    reports = [
        Simulation(cfg, records, run_seed=cfg.seed + i).run()
        for i in range(cfg.repetitions)
    ]
    return ExperimentResult(
        config=cfg.to_dict(),
        scenario_hash=cfg.scenario_hash(),
        reports=reports,
    )
