"""Query embeddings and the vector similarity kernel.

The default embedder is a hashed bag of tokens: split the payload on
whitespace/punctuation, hash every token into one of ``dimension`` buckets
with a fixed key, accumulate counts, and L2-normalize.  It is deterministic
across processes and keeps the property the cache relies on: payloads that
share tokens land near each other.  Heavier models can be attached through
the external-plugin kind without code changes.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import subprocess
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import InvalidInputError, PluginProtocolError

DEFAULT_DIMENSION = 256

HASHED_TOKEN = "hashed-token"
EXTERNAL_PLUGIN = "external-plugin"

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)
_BUCKET_KEY = b"llmsched-embed-v1"

# An embedding is a fixed-length 1-D float64 array, L2-normalized by every
# producer in this module.
Embedding = np.ndarray


@dataclass(frozen=True)
class EmbedderConfig:
    dimension: int = DEFAULT_DIMENSION
    kind: str = HASHED_TOKEN
    plugin_command: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.dimension < 2:
            raise InvalidInputError("embedding dimension must be >= 2")
        if self.kind not in (HASHED_TOKEN, EXTERNAL_PLUGIN):
            raise InvalidInputError(f"unknown embedder kind {self.kind!r}")
        if self.kind == EXTERNAL_PLUGIN and not self.plugin_command:
            raise InvalidInputError("external-plugin embedder requires plugin_command")

    def to_dict(self) -> dict:
        data: dict = {"dimension": self.dimension, "kind": self.kind}
        if self.plugin_command is not None:
            data["plugin_command"] = list(self.plugin_command)
        return data

    @classmethod
    def from_dict(cls, data: Mapping) -> "EmbedderConfig":
        command = data.get("plugin_command")
        return cls(
            dimension=int(data.get("dimension", DEFAULT_DIMENSION)),
            kind=str(data.get("kind", HASHED_TOKEN)),
            plugin_command=tuple(command) if command else None,
        )


def _bucket(token: str, dimension: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=_BUCKET_KEY).digest()
    return int.from_bytes(digest, "big") % dimension


class HashedTokenEmbedder:
    """Deterministic dependency-free embedder; safe for concurrent use."""

    def __init__(self, config: EmbedderConfig):
        if config.kind != HASHED_TOKEN:
            raise InvalidInputError("HashedTokenEmbedder requires kind 'hashed-token'")
        self.config = config

    def embed(self, payload: str) -> Embedding:
        if not payload:
            raise InvalidInputError("payload must be non-empty")
        dim = self.config.dimension
        values = np.zeros(dim, dtype=np.float64)
        for token in _TOKEN_RE.findall(payload):
            values[_bucket(token, dim)] += 1.0
        norm = math.sqrt(float(values @ values))
        if norm == 0.0:
            # Payload had no word characters at all: fall back to a fixed
            # unit basis vector so downstream cosine math stays defined.
            values[0] = 1.0
        else:
            values /= norm
        values.flags.writeable = False
        return values

    __call__ = embed


class PluginEmbedder:
    """Embedder backed by an external process.

    Contract: the payload is written to the plugin's stdin; the plugin must
    answer on stdout with exactly ``dimension`` finite floats, either as a
    JSON array or whitespace-separated.  Anything else is a protocol error.
    Vectors are L2-normalized on this side of the boundary.
    """

    def __init__(self, config: EmbedderConfig):
        if config.kind != EXTERNAL_PLUGIN:
            raise InvalidInputError("PluginEmbedder requires kind 'external-plugin'")
        self.config = config

    def embed(self, payload: str) -> Embedding:
        if not payload:
            raise InvalidInputError("payload must be non-empty")
        try:
            proc = subprocess.run(
                list(self.config.plugin_command or ()),
                input=payload.encode("utf-8"),
                capture_output=True,
                timeout=30,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise PluginProtocolError(f"plugin execution failed: {exc}")
        if proc.returncode != 0:
            raise PluginProtocolError(f"plugin exited with status {proc.returncode}")
        values = _parse_plugin_response(proc.stdout.decode("utf-8", "replace"))
        if len(values) != self.config.dimension:
            raise PluginProtocolError(
                f"plugin returned {len(values)} values, expected {self.config.dimension}"
            )
        arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise PluginProtocolError("plugin returned non-finite values")
        norm = math.sqrt(float(arr @ arr))
        if norm == 0.0:
            raise PluginProtocolError("plugin returned the zero vector")
        arr /= norm
        arr.flags.writeable = False
        return arr

    __call__ = embed


def _parse_plugin_response(text: str) -> Sequence[float]:
    text = text.strip()
    if not text:
        raise PluginProtocolError("plugin returned empty output")
    try:
        data = json.loads(text)
        if isinstance(data, list):
            return [float(v) for v in data]
        raise PluginProtocolError("plugin JSON output is not an array")
    except json.JSONDecodeError:
        pass
    try:
        return [float(part) for part in text.split()]
    except ValueError:
        raise PluginProtocolError("plugin output is neither a JSON array nor floats")


class CachingEmbedder:
    """Memoizes an embedder on payload text (embedding is a pure function)."""

    def __init__(self, base: Callable[[str], Embedding]):
        self._base = base
        self._memo: dict[str, Embedding] = {}

    def embed(self, payload: str) -> Embedding:
        hit = self._memo.get(payload)
        if hit is None:
            hit = self._memo[payload] = self._base(payload)
        return hit

    __call__ = embed


def make_embedder(config: EmbedderConfig) -> Callable[[str], Embedding]:
    if config.kind == HASHED_TOKEN:
        return HashedTokenEmbedder(config)
    return PluginEmbedder(config)


def embed(payload: str, config: EmbedderConfig) -> Embedding:
    """One-shot embedding of ``payload`` under ``config``."""
    return make_embedder(config)(payload)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two vectors; scale differences do not affect it."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise InvalidInputError("cosine requires two vectors of equal dimension")
    norm_a = math.sqrt(float(a @ a))
    norm_b = math.sqrt(float(b @ b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise InvalidInputError("cosine is undefined for zero vectors")
    return float(a @ b) / (norm_a * norm_b)
