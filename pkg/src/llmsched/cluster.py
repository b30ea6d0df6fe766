"""Small deterministic k-means (seeded k-means++ init, Lloyd iterations)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray  # (k, d)
    labels: np.ndarray  # (n,) int
    iterations: int
    wcss: float
    # Within-cluster sum of squares recorded after the initial assignment and
    # after every Lloyd iteration; non-increasing by construction.
    wcss_trace: tuple[float, ...]


def default_cluster_count(size: int) -> int:
    """Default cluster-count policy: ceil(sqrt(size / 2)), clamped to [2, 64]."""
    if size < 1:
        raise InvalidInputError("size must be >= 1")
    return min(64, max(2, math.ceil(math.sqrt(size / 2))))


def _pairwise_sq_dist(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||x - c||^2 expanded to avoid an (n, k, d) intermediate.
    p2 = np.einsum("ij,ij->i", points, points)
    c2 = np.einsum("ij,ij->i", centroids, centroids)
    d2 = p2[:, None] + c2[None, :] - 2.0 * (points @ centroids.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _wcss(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    diff = points - centroids[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    chosen = [int(rng.integers(n))]
    d2 = _pairwise_sq_dist(points, points[chosen[-1]][None, :])[:, 0]
    while len(chosen) < k:
        total = float(d2.sum())
        if total <= 0.0:
            # All remaining mass sits on already-chosen coordinates
            # (e.g. identical points); fall back to a uniform draw.
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, _pairwise_sq_dist(points, points[idx][None, :])[:, 0])
    return points[chosen].copy()


def kmeans(points: np.ndarray, k: int, seed: int, max_iter: int = 50) -> KMeansResult:
    """Lloyd's algorithm with seeded k-means++ initialization.

    Stops when assignments are stable or after ``max_iter`` iterations.
    Empty clusters keep their previous centroid, which preserves the
    monotone non-increase of the WCSS trace.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise InvalidInputError("kmeans requires a non-empty (n, d) array")
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    if max_iter < 1:
        raise InvalidInputError("max_iter must be >= 1")
    k = min(k, len(points))

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, k, rng)
    labels = np.argmin(_pairwise_sq_dist(points, centroids), axis=1)
    trace = [_wcss(points, labels, centroids)]

    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = points[members].mean(axis=0)
        new_labels = np.argmin(_pairwise_sq_dist(points, centroids), axis=1)
        trace.append(_wcss(points, new_labels, centroids))
        stable = bool(np.array_equal(new_labels, labels))
        labels = new_labels
        if stable:
            break

    return KMeansResult(
        centroids=centroids,
        labels=labels,
        iterations=iterations,
        wcss=trace[-1],
        wcss_trace=tuple(trace),
    )
