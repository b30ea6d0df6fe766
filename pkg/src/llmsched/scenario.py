"""Scenario definitions and synthetic workload construction.

A scenario bundles the candidate endpoints (prices, latency models,
per-category success rates) with the category-level generation parameters
the mock providers draw from.  The shipped default mirrors a realistic
fleet: one expensive generalist that is strong almost everywhere, three
cheap specialists that only shine on their own category, a bargain-bin
model that is weak everywhere, and a "hard" category nobody handles well.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .domain import LatencyModel, LLMProfile, WorkloadRecord
from .errors import InvalidInputError


@dataclass(frozen=True)
class CategorySpec:
    """Generation parameters for one query category.

    ``output_tokens_mean``/``sigma`` parameterize the seeded log-normal the
    providers draw response lengths from; ``input_tokens`` and ``weight``
    only drive synthetic workload construction.
    """

    output_tokens_mean: float
    output_tokens_sigma: float = 0.0
    input_tokens: int = 48
    weight: float = 1.0

    def __post_init__(self):
        if self.output_tokens_mean < 1:
            raise InvalidInputError("output_tokens_mean must be >= 1")
        if self.output_tokens_sigma < 0:
            raise InvalidInputError("output_tokens_sigma must be >= 0")
        if self.input_tokens < 1:
            raise InvalidInputError("input_tokens must be >= 1")
        if self.weight <= 0:
            raise InvalidInputError("weight must be > 0")

    def to_dict(self) -> dict:
        return {
            "output_tokens_mean": self.output_tokens_mean,
            "output_tokens_sigma": self.output_tokens_sigma,
            "input_tokens": self.input_tokens,
            "weight": self.weight,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CategorySpec":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass(frozen=True)
class Scenario:
    providers: tuple[LLMProfile, ...]
    categories: Mapping[str, CategorySpec]
    cache_lookup_ms: float = 1.0

    def __post_init__(self):
        if not self.providers:
            raise InvalidInputError("scenario needs at least one provider")
        if not self.categories:
            raise InvalidInputError("scenario needs at least one category")
        if self.cache_lookup_ms < 0:
            raise InvalidInputError("cache_lookup_ms must be >= 0")
        ids = [p.id for p in self.providers]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("provider ids must be unique")
        for provider in self.providers:
            missing = set(self.categories) - set(provider.success_table)
            if missing:
                raise InvalidInputError(
                    f"provider {provider.id!r} lacks success rates for "
                    f"categories: {sorted(missing)}"
                )

    def provider_ids(self) -> list[str]:
        return [p.id for p in self.providers]

    def to_dict(self) -> dict:
        return {
            "providers": [p.to_dict() for p in self.providers],
            "categories": {
                name: spec.to_dict() for name, spec in sorted(self.categories.items())
            },
            "cache_lookup_ms": self.cache_lookup_ms,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Scenario":
        return cls(
            providers=tuple(LLMProfile.from_dict(p) for p in data["providers"]),
            categories={
                str(name): CategorySpec.from_dict(spec)
                for name, spec in data["categories"].items()
            },
            cache_lookup_ms=float(data.get("cache_lookup_ms", 1.0)),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.blake2b(blob, digest_size=8).hexdigest()


def load_scenario(path: str | Path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return Scenario.from_dict(json.load(fh))


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def default_scenario() -> Scenario:
    """The synthetic fleet shipped with the repo.

    Success-rate structure: "omni" is strong on everything but priced ~10x
    the specialists; each "*-mini" dominates one category and is weak off
    it; "pico" is cheap and weak everywhere.  The "hard" category defeats
    every model, so feasibility-cutoff rules skip those queries.
    """
    categories = {
        "parse": CategorySpec(output_tokens_mean=60, output_tokens_sigma=0.25,
                              input_tokens=50, weight=0.3),
        "classify": CategorySpec(output_tokens_mean=30, output_tokens_sigma=0.25,
                                 input_tokens=40, weight=0.3),
        "extract": CategorySpec(output_tokens_mean=45, output_tokens_sigma=0.25,
                                input_tokens=45, weight=0.3),
        "hard": CategorySpec(output_tokens_mean=120, output_tokens_sigma=0.25,
                             input_tokens=60, weight=0.18),
    }
    providers = (
        LLMProfile(
            id="omni",
            price_input=4e-6,
            price_output=1.2e-5,
            latency=LatencyModel(base_ms=900.0, per_output_token_ms=8.0),
            success_table={"parse": 0.94, "classify": 0.94, "extract": 0.94, "hard": 0.35},
        ),
        LLMProfile(
            id="parse-mini",
            price_input=8e-7,
            price_output=2.4e-6,
            latency=LatencyModel(base_ms=250.0, per_output_token_ms=2.0),
            success_table={"parse": 0.97, "classify": 0.12, "extract": 0.10, "hard": 0.10},
        ),
        LLMProfile(
            id="classify-mini",
            price_input=8e-7,
            price_output=2.4e-6,
            latency=LatencyModel(base_ms=250.0, per_output_token_ms=2.0),
            success_table={"parse": 0.10, "classify": 0.97, "extract": 0.12, "hard": 0.10},
        ),
        LLMProfile(
            id="extract-mini",
            price_input=8e-7,
            price_output=2.4e-6,
            latency=LatencyModel(base_ms=250.0, per_output_token_ms=2.0),
            success_table={"parse": 0.12, "classify": 0.10, "extract": 0.97, "hard": 0.10},
        ),
        LLMProfile(
            id="pico",
            price_input=8e-7,
            price_output=2.4e-6,
            latency=LatencyModel(base_ms=200.0, per_output_token_ms=1.5),
            success_table={"parse": 0.15, "classify": 0.15, "extract": 0.15, "hard": 0.10},
        ),
    )
    return Scenario(providers=providers, categories=categories, cache_lookup_ms=1.0)


_VERBS = ("rewrite", "summarize", "label", "dedupe", "audit", "normalize", "rank", "trace")
_NOUNS = ("ticket", "trace", "invoice", "snippet", "alert", "headline", "schema", "digest")


def _payload_tokens(uid: str) -> int:
    digest = hashlib.blake2b(uid.encode("utf-8"), digest_size=4, key=b"llmsched-tok").digest()
    return int.from_bytes(digest, "big") % 9 - 4  # jitter in [-4, 4]


def make_synthetic_workload(
    size: int,
    duplicate_fraction: float,
    hot_pool_size: int,
    categories: Mapping[str, CategorySpec],
    seed: int,
) -> list[WorkloadRecord]:
    """Build a workload where ~``duplicate_fraction`` of the stream consists
    of repeats drawn from a small pool of hot payloads.

    Deterministic for a given seed.  Payloads carry a category keyword plus
    a few filler tokens so hashed-token embeddings separate categories.
    """
    if size < 10:
        raise InvalidInputError("synthetic workloads need size >= 10")
    if not 0.0 <= duplicate_fraction < 1.0:
        raise InvalidInputError("duplicate_fraction must be in [0, 1)")
    if hot_pool_size < 1:
        raise InvalidInputError("hot_pool_size must be >= 1")

    rng = np.random.default_rng([seed, 101])
    names = sorted(categories)
    weights = np.array([categories[n].weight for n in names], dtype=np.float64)
    weights /= weights.sum()

    def make_payload(uid: str) -> tuple[str, str, int]:
        category = names[int(rng.choice(len(names), p=weights))]
        verb = _VERBS[int(rng.integers(len(_VERBS)))]
        noun = _NOUNS[int(rng.integers(len(_NOUNS)))]
        # Tokens are fused (no punctuation, which the embedder splits on)
        # and the category keyword is doubled so its hash bucket carries
        # twice the weight of any uid token; category-prefixed filler gives
        # each category its own vocabulary, and two uid-derived tokens keep
        # distinct payloads below any sane similarity threshold even when
        # single buckets collide.
        payload = (
            f"{category} {category} {category}{verb} {category}{noun} "
            f"j{uid} r{uid}"
        )
        tokens = max(1, categories[category].input_tokens + _payload_tokens(uid))
        return payload, category, tokens

    n_hot = int(round(size * duplicate_fraction))
    hot_pool = [make_payload(f"hot{i}") for i in range(min(hot_pool_size, max(1, n_hot)))]
    stream = [hot_pool[i % len(hot_pool)] for i in range(n_hot)]
    stream += [make_payload(f"uniq{j}") for j in range(size - n_hot)]

    order = rng.permutation(len(stream))
    records = []
    for pos, idx in enumerate(order):
        payload, category, tokens = stream[int(idx)]
        records.append(
            WorkloadRecord(
                id=f"q{pos:05d}",
                payload=payload,
                input_tokens=tokens,
                truth_category=category,
            )
        )
    return records
