import itertools

import numpy as np
import pytest

from llmsched.cluster import default_cluster_count, kmeans
from llmsched.errors import InvalidInputError


def brute_force_best_two_partition(points):
    """Minimum-WCSS 2-partition by enumerating every nonempty split."""
    n = len(points)
    best = None
    best_wcss = float("inf")
    for size in range(1, n):
        for left in itertools.combinations(range(n), size):
            left = set(left)
            right = set(range(n)) - left
            wcss = 0.0
            for group in (left, right):
                pts = points[sorted(group)]
                wcss += float(((pts - pts.mean(axis=0)) ** 2).sum())
            if wcss < best_wcss:
                best_wcss = wcss
                best = (frozenset(left), frozenset(right))
    return best, best_wcss


class TestKMeans:
    def test_two_well_separated_pairs(self):
        points = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]])
        result = kmeans(points, k=2, seed=0)
        groups = frozenset(
            frozenset(np.nonzero(result.labels == j)[0].tolist()) for j in set(result.labels)
        )
        (best, best_wcss) = brute_force_best_two_partition(points)
        assert groups == frozenset(best)
        assert result.wcss == pytest.approx(best_wcss)

    def test_identical_points_collapse(self):
        points = np.ones((6, 3))
        result = kmeans(points, k=3, seed=1)
        assert len(set(result.labels.tolist())) == 1
        assert result.wcss == pytest.approx(0.0)

    def test_wcss_trace_non_increasing(self):
        rng = np.random.default_rng(0)
        for trial in range(50):
            points = rng.normal(size=(rng.integers(6, 40), rng.integers(2, 6)))
            result = kmeans(points, k=int(rng.integers(2, 5)), seed=trial)
            trace = result.wcss_trace
            for before, after in zip(trace, trace[1:]):
                assert after <= before * (1 + 1e-9) + 1e-12

    def test_deterministic_for_fixed_seed(self):
        rng = np.random.default_rng(3)
        points = rng.normal(size=(30, 4))
        a = kmeans(points, k=4, seed=9)
        b = kmeans(points, k=4, seed=9)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.centroids, b.centroids)

    def test_k_clamped_to_point_count(self):
        points = np.array([[0.0], [1.0]])
        result = kmeans(points, k=10, seed=0)
        assert len(result.centroids) == 2

    def test_every_label_is_nearest_centroid(self):
        rng = np.random.default_rng(5)
        points = rng.normal(size=(40, 3))
        result = kmeans(points, k=5, seed=5)
        d2 = ((points[:, None, :] - result.centroids[None]) ** 2).sum(axis=2)
        assert np.array_equal(result.labels, np.argmin(d2, axis=1))

    def test_rejects_empty_input(self):
        with pytest.raises(InvalidInputError):
            kmeans(np.empty((0, 2)), k=2, seed=0)


class TestDefaultClusterCount:
    @pytest.mark.parametrize("size,expected", [
        (1, 2), (8, 2), (50, 5), (500, 16), (2 * 64 * 64, 64), (10**6, 64),
    ])
    def test_values(self, size, expected):
        assert default_cluster_count(size) == expected

    def test_rejects_zero(self):
        with pytest.raises(InvalidInputError):
            default_cluster_count(0)
