"""Per-horizon allocation of cache-missed queries to LLMs.

Each query is scored independently against every candidate under the active
rule and routed to the argmax.  Because the per-horizon objective is
separable across queries under the one-target-per-query constraint, this
greedy per-query argmax is exactly optimal for the horizon; the test suite
checks that against brute-force enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

from .domain import SKIPPED_TARGET, Assignment, LLMProfile, Query
from .embedding import Embedding, make_embedder
from .errors import InvalidInputError, StateError
from .predictor import ModelBundle, PredictionPair

# Sentinel score for candidates that must not be submitted.
INFEASIBLE = float("-inf")


class RuleKind(str, Enum):
    RATIO = "ratio"
    MAX_PERF = "max_perf"
    MIN_COST = "min_cost"
    CUSTOM = "custom"


@dataclass(frozen=True)
class SchedulingRule:
    """Selection rule: performance-to-cost ratio (optionally weighted),
    performance-first, cost-first with a feasibility cutoff, or a custom
    scoring function (return INFEASIBLE to mean "do not submit")."""

    kind: RuleKind = RuleKind.RATIO
    ratio_weight: float = 1.0
    feasibility_cutoff: float = 0.5
    custom_score: Callable[[float, float], float] | None = None

    def __post_init__(self):
        if self.ratio_weight <= 0:
            raise InvalidInputError("ratio_weight must be > 0")
        if not 0.0 < self.feasibility_cutoff < 1.0:
            raise InvalidInputError("feasibility_cutoff must be in (0, 1)")
        if self.kind == RuleKind.CUSTOM and self.custom_score is None:
            raise InvalidInputError("custom rule requires a scoring function")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "ratio_weight": self.ratio_weight,
            "feasibility_cutoff": self.feasibility_cutoff,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SchedulingRule":
        kind = RuleKind(str(data.get("kind", "ratio")))
        if kind == RuleKind.CUSTOM:
            raise InvalidInputError("custom rules are only available via the API")
        return cls(
            kind=kind,
            ratio_weight=float(data.get("ratio_weight", 1.0)),
            feasibility_cutoff=float(data.get("feasibility_cutoff", 0.5)),
        )


def score(rule: SchedulingRule, pair: PredictionPair) -> float:
    """Score one (query, LLM) candidate; higher wins, INFEASIBLE never runs."""
    if rule.kind != RuleKind.CUSTOM and pair.cost <= 0:
        raise InvalidInputError("predicted cost must be > 0")
    if rule.kind == RuleKind.RATIO:
        return pair.perf / pair.cost**rule.ratio_weight
    if rule.kind == RuleKind.MAX_PERF:
        return pair.perf
    if rule.kind == RuleKind.MIN_COST:
        return -pair.cost if pair.perf > rule.feasibility_cutoff else INFEASIBLE
    return rule.custom_score(pair.perf, pair.cost)


def _score_matrix(rule: SchedulingRule, perf: np.ndarray, cost: np.ndarray) -> np.ndarray:
    if rule.kind != RuleKind.CUSTOM and np.any(cost <= 0):
        raise InvalidInputError("predicted cost must be > 0")
    if rule.kind == RuleKind.RATIO:
        return perf / cost**rule.ratio_weight
    if rule.kind == RuleKind.MAX_PERF:
        return perf.copy()
    if rule.kind == RuleKind.MIN_COST:
        return np.where(perf > rule.feasibility_cutoff, -cost, INFEASIBLE)
    fn = rule.custom_score
    out = np.empty_like(perf)
    for i in range(perf.shape[0]):
        for k in range(perf.shape[1]):
            out[i, k] = fn(float(perf[i, k]), float(cost[i, k]))
    return out


def choose(scores: np.ndarray, cost: np.ndarray) -> int | None:
    """Argmax with deterministic tie-breaking.

    Ties on score break toward lower predicted cost, then lower LLM index.
    Returns None when every candidate is infeasible.
    """
    best = float(np.max(scores))
    if math.isinf(best) and best < 0:
        return None
    candidates = np.nonzero(scores == best)[0]
    return int(min(candidates, key=lambda k: (cost[k], k)))


@dataclass(frozen=True)
class HorizonPlan:
    """Assignments for one horizon plus the predicted objective snapshot.

    The snapshot aggregates the chosen pairs over the scheduled queries
    (SKIPPED contributes zero perf and zero cost); official run metrics are
    computed over all queries by the simulator.
    """

    assignments: tuple[Assignment, ...]
    predicted_cost: float
    predicted_perf: float


def allocate(
    queries: Sequence[Query],
    bundle: ModelBundle | None,
    llms: Sequence[LLMProfile],
    rule: SchedulingRule,
    embed_fn: Callable[[str], Embedding] | None = None,
) -> HorizonPlan:
    """Route every query to the argmax-scoring LLM (or SKIPPED when the rule
    rejects all candidates, which only MIN_COST and custom rules can do)."""
    if bundle is None:
        raise StateError("allocate requires a trained model bundle")
    if not llms:
        raise InvalidInputError("allocate requires at least one LLM")
    bundle_ids = [llm.id for llm in bundle.llms]
    if [llm.id for llm in llms] != bundle_ids:
        raise InvalidInputError("llms must match the bundle's LLM ordering")
    if not queries:
        return HorizonPlan(assignments=(), predicted_cost=0.0, predicted_perf=0.0)

    if embed_fn is None:
        embed_fn = make_embedder(bundle.embedder)
    embeddings = np.stack([embed_fn(q.payload) for q in queries])
    tokens = np.array([q.input_tokens for q in queries], dtype=np.float64)
    perf, cost = bundle.predict_matrix(embeddings, tokens)
    scores = _score_matrix(rule, perf, cost)

    assignments = []
    total_cost = 0.0
    total_perf = 0.0
    for i, query in enumerate(queries):
        k = choose(scores[i], cost[i])
        if k is None:
            assignments.append(
                Assignment(query.id, SKIPPED_TARGET, predicted_perf=0.0, predicted_cost=0.0)
            )
            continue
        assignments.append(
            Assignment(
                query.id,
                llms[k].id,
                predicted_perf=float(perf[i, k]),
                predicted_cost=float(cost[i, k]),
            )
        )
        total_cost += float(cost[i, k])
        total_perf += float(perf[i, k])
    return HorizonPlan(
        assignments=tuple(assignments),
        predicted_cost=total_cost,
        predicted_perf=total_perf / len(queries),
    )
