"""Core value objects shared by every component.

All money amounts are USD held in IEEE doubles.  Per-token prices sit around
1e-6, which is far above double-precision noise for the workload sizes this
engine targets; reports round to two decimals at display time only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .errors import InvalidInputError

# Routing targets that are not LLM endpoints.
CACHE_TARGET = "CACHE"
SKIPPED_TARGET = "SKIPPED"
RESERVED_TARGETS = frozenset({CACHE_TARGET, SKIPPED_TARGET})


@dataclass(frozen=True)
class Query:
    """One job: an opaque text payload plus its provider-counted token count.

    ``truth_category`` is only ever read by the simulator's ground-truth
    oracle; scheduling components must not look at it.
    """

    id: str
    payload: str
    input_tokens: int
    arrival_period: int
    truth_category: str

    def __post_init__(self):
        if not self.id:
            raise InvalidInputError("query id must be non-empty")
        if self.input_tokens < 1:
            raise InvalidInputError(f"query {self.id!r}: input_tokens must be >= 1")
        if self.arrival_period < 0:
            raise InvalidInputError(f"query {self.id!r}: arrival_period must be >= 0")


@dataclass(frozen=True)
class LatencyModel:
    """Linear per-call latency: ``base_ms + per_output_token_ms * tokens``."""

    base_ms: float
    per_output_token_ms: float = 0.0

    def __post_init__(self):
        if self.base_ms <= 0:
            raise InvalidInputError("base_ms must be > 0")
        if self.per_output_token_ms < 0:
            raise InvalidInputError("per_output_token_ms must be >= 0")

    def latency_ms(self, output_tokens: int) -> float:
        return self.base_ms + self.per_output_token_ms * output_tokens

    def to_dict(self) -> dict:
        return {"base_ms": self.base_ms, "per_output_token_ms": self.per_output_token_ms}

    @classmethod
    def from_dict(cls, data: Mapping) -> "LatencyModel":
        return cls(
            base_ms=float(data["base_ms"]),
            per_output_token_ms=float(data.get("per_output_token_ms", 0.0)),
        )


@dataclass(frozen=True)
class LLMProfile:
    """One candidate endpoint: token prices, a latency model, and the
    per-category success probabilities used by the simulator's oracle.

    The success table is ground truth for mock execution only; the scheduler
    never reads it.
    """

    id: str
    price_input: float
    price_output: float
    latency: LatencyModel
    success_table: Mapping[str, float]

    def __post_init__(self):
        if not self.id:
            raise InvalidInputError("llm id must be non-empty")
        if self.id in RESERVED_TARGETS:
            raise InvalidInputError(f"llm id {self.id!r} is a reserved target name")
        if self.price_input < 0 or self.price_output < 0:
            raise InvalidInputError(f"llm {self.id!r}: prices must be >= 0")
        for category, p in self.success_table.items():
            if not 0.0 <= p <= 1.0:
                raise InvalidInputError(
                    f"llm {self.id!r}: success rate for {category!r} must be in [0, 1]"
                )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "price_input": self.price_input,
            "price_output": self.price_output,
            "latency": self.latency.to_dict(),
            "success_table": dict(sorted(self.success_table.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "LLMProfile":
        return cls(
            id=str(data["id"]),
            price_input=float(data["price_input"]),
            price_output=float(data["price_output"]),
            latency=LatencyModel.from_dict(data["latency"]),
            success_table={str(k): float(v) for k, v in data["success_table"].items()},
        )


@dataclass(frozen=True)
class Assignment:
    """Routing decision for one query: an LLM id, CACHE, or SKIPPED."""

    query_id: str
    target: str
    predicted_perf: float
    predicted_cost: float

    def __post_init__(self):
        if not 0.0 <= self.predicted_perf <= 1.0:
            raise InvalidInputError("predicted_perf must be in [0, 1]")
        if self.predicted_cost < 0:
            raise InvalidInputError("predicted_cost must be >= 0")


@dataclass(frozen=True)
class CompletedJob:
    """Post-execution realization of one assignment.

    ``success`` records the ground-truth outcome.  Scheduling components may
    only read it for jobs that went through inspection; the simulator's
    metrics layer reads it freely.
    """

    query_id: str
    target: str
    response: str
    actual_cost: float
    actual_latency: float
    success: bool | None
    period: int


@dataclass(frozen=True)
class HorizonBatch:
    """The job set of one scheduling period."""

    period: int
    queries: tuple[Query, ...]

    def __post_init__(self):
        for q in self.queries:
            if q.arrival_period != self.period:
                raise InvalidInputError(
                    f"query {q.id!r} arrived in period {q.arrival_period}, "
                    f"not {self.period}"
                )

    def __len__(self) -> int:
        return len(self.queries)


def invocation_cost(query: Query, llm: LLMProfile, output_tokens: int) -> float:
    """Cost of running ``query`` on ``llm``: input and generated tokens priced
    separately."""
    if output_tokens < 0:
        raise InvalidInputError("output_tokens must be >= 0")
    return query.input_tokens * llm.price_input + output_tokens * llm.price_output


@dataclass(frozen=True)
class WorkloadRecord:
    """One line of a workload file; a query before period assignment."""

    id: str
    payload: str
    input_tokens: int
    truth_category: str

    def to_query(self, period: int) -> Query:
        return Query(
            id=self.id,
            payload=self.payload,
            input_tokens=self.input_tokens,
            arrival_period=period,
            truth_category=self.truth_category,
        )


def workload_line(record: WorkloadRecord) -> str:
    return json.dumps(
        {
            "id": record.id,
            "payload": record.payload,
            "input_tokens": record.input_tokens,
            "truth_category": record.truth_category,
        },
        sort_keys=True,
        ensure_ascii=False,
    )


def save_workload(records: list[WorkloadRecord], path: str | Path) -> None:
    """Write a workload file, one JSON record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(workload_line(record) + "\n")


def load_workload(path: str | Path) -> list[WorkloadRecord]:
    """Read a workload file written by :func:`save_workload`.

    The round trip is bit-exact: saving the loaded records reproduces the
    file byte for byte.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                records.append(
                    WorkloadRecord(
                        id=str(data["id"]),
                        payload=str(data["payload"]),
                        input_tokens=int(data["input_tokens"]),
                        truth_category=str(data["truth_category"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidInputError(f"{path}:{lineno}: bad workload record: {exc}")
    return records
