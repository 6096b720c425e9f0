import unittest

import numpy as np
import scipy.linalg

from eo_curator import errors, models, statistics
from tests import helpers


def reference_frechet(
    a: models.GaussianStats, b: models.GaussianStats
) -> float:
    root = scipy.linalg.sqrtm(a.cov @ b.cov)
    delta = a.mean - b.mean
    return float(
        delta @ delta + np.trace(a.cov + b.cov - 2 * np.real(root))
    )


class AccumulatorTestCase(unittest.TestCase):
    def test_two_points(self) -> None:
        stats = statistics.accumulate_stats([[0.0, 0.0], [2.0, 2.0]])
        self.assertEqual(stats.n, 2)
        np.testing.assert_array_equal(stats.mean, [1.0, 1.0])
        np.testing.assert_array_equal(stats.cov, [[2.0, 2.0], [2.0, 2.0]])

    def test_single_sample(self) -> None:
        stats = statistics.accumulate_stats([[3.0, 4.0, 5.0]])
        self.assertEqual(stats.n, 1)
        np.testing.assert_array_equal(stats.mean, [3.0, 4.0, 5.0])
        np.testing.assert_array_equal(stats.cov, np.zeros((3, 3)))

    def test_empty_stream(self) -> None:
        with self.assertRaises(errors.EmptyStream):
            statistics.accumulate_stats([])
        with self.assertRaises(errors.EmptyStream):
            statistics.GaussianAccumulator(3).finalize()

    def test_matches_numpy(self) -> None:
        rng = np.random.default_rng(5)
        data = rng.normal(50, 10, (200, 6))
        stats = statistics.accumulate_stats(iter(data))
        np.testing.assert_allclose(stats.mean, data.mean(axis=0), atol=1e-10)
        np.testing.assert_allclose(
            stats.cov, np.cov(data, rowvar=False), atol=1e-9
        )

    def test_merge_matches_single_pass(self) -> None:
        rng = np.random.default_rng(6)
        data = rng.normal(0, 3, (150, 4))
        whole = statistics.GaussianAccumulator(4).update(data).finalize()
        merged = statistics.GaussianAccumulator(4)
        for chunk in np.array_split(data, [7, 40, 41, 120]):
            merged.merge(statistics.GaussianAccumulator(4).update(chunk))
        result = merged.finalize()
        self.assertEqual(result.n, 150)
        np.testing.assert_allclose(result.mean, whole.mean, atol=1e-10)
        np.testing.assert_allclose(result.cov, whole.cov, atol=1e-10)

    def test_random_splits_match_single_pass(self) -> None:
        rng = np.random.default_rng(16)
        data = rng.normal(10, 3, (10_000, 8))
        whole = statistics.GaussianAccumulator(8).update(data).finalize()
        for _ in range(100):
            cuts = np.sort(rng.integers(0, len(data), rng.integers(1, 12)))
            merged = statistics.GaussianAccumulator(8)
            for chunk in np.array_split(data, cuts):
                merged.merge(statistics.GaussianAccumulator(8).update(chunk))
            result = merged.finalize()
            self.assertEqual(result.n, len(data))
            np.testing.assert_allclose(
                result.mean, whole.mean, rtol=1e-10, atol=1e-10
            )
            np.testing.assert_allclose(
                result.cov, whole.cov, rtol=1e-10, atol=1e-10
            )

    def test_merge_is_associative(self) -> None:
        rng = np.random.default_rng(7)
        parts = [rng.normal(0, 1, (n, 3)) for n in (5, 11, 2)]

        def acc(rows: np.ndarray) -> statistics.GaussianAccumulator:
            return statistics.GaussianAccumulator(3).update(rows)

        left = acc(parts[0]).merge(acc(parts[1])).merge(acc(parts[2]))
        right = acc(parts[0]).merge(acc(parts[1]).merge(acc(parts[2])))
        np.testing.assert_allclose(
            left.finalize().cov, right.finalize().cov, atol=1e-10
        )

    def test_empty_merge_is_identity(self) -> None:
        acc = statistics.GaussianAccumulator(2).update([[1.0, 2.0]])
        acc.merge(statistics.GaussianAccumulator(2))
        acc.update(np.empty((0, 2)))
        self.assertEqual(acc.n, 1)

    def test_dimension_mismatch(self) -> None:
        acc = statistics.GaussianAccumulator(3)
        with self.assertRaises(errors.DimensionMismatch):
            acc.update([[1.0, 2.0]])
        with self.assertRaises(errors.DimensionMismatch):
            acc.merge(statistics.GaussianAccumulator(2))

    def test_non_finite_vector(self) -> None:
        with self.assertRaises(errors.NotFiniteInput):
            statistics.accumulate_stats([[1.0, np.inf]])


class SqrtmTestCase(unittest.TestCase):
    def test_identity(self) -> None:
        np.testing.assert_allclose(
            statistics.sqrtm_spd(np.eye(4)), np.eye(4), atol=1e-12
        )

    def test_diagonal(self) -> None:
        np.testing.assert_allclose(
            statistics.sqrtm_spd(np.diag([4.0, 9.0])),
            np.diag([2.0, 3.0]),
            atol=1e-12,
        )

    def test_random_spd(self) -> None:
        rng = np.random.default_rng(8)
        for d in (2, 5, 24):
            matrix = helpers.random_spd(rng, d)
            root = statistics.sqrtm_spd(matrix)
            np.testing.assert_allclose(root, root.T, atol=1e-12)
            np.testing.assert_allclose(root @ root, matrix, atol=1e-8)

    def test_reconstruction_sweep(self) -> None:
        rng = np.random.default_rng(11)
        for _ in range(1000):
            matrix = helpers.random_spd(rng, int(rng.integers(2, 17)))
            root = statistics.sqrtm_spd(matrix)
            size = float(np.linalg.norm(matrix))
            self.assertLessEqual(
                float(np.linalg.norm(root @ root - matrix)),
                1e-8 * max(1.0, size),
            )

    def test_not_symmetric(self) -> None:
        with self.assertRaises(errors.NotSymmetric):
            statistics.sqrtm_spd(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with self.assertRaises(errors.NotSymmetric):
            statistics.sqrtm_spd(np.ones((2, 3)))

    def test_not_finite(self) -> None:
        with self.assertRaises(errors.NotFiniteInput):
            statistics.sqrtm_spd(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_negative_eigenvalue_is_clamped(self) -> None:
        matrix = np.diag([4.0, -1e-12])
        np.testing.assert_allclose(
            statistics.sqrtm_spd(matrix), np.diag([2.0, 0.0]), atol=1e-12
        )


class FrechetTestCase(unittest.TestCase):
    def test_shifted_identity(self) -> None:
        a = helpers.gaussian([0, 0], [[1, 0], [0, 1]])
        b = helpers.gaussian([1, 1], [[1, 0], [0, 1]])
        self.assertAlmostEqual(
            statistics.frechet_distance(a, b, eps=0), 2.0, places=12
        )

    def test_scaled_covariance(self) -> None:
        a = helpers.gaussian([0, 0], [[1, 0], [0, 1]])
        b = helpers.gaussian([2, 0], [[4, 0], [0, 1]])
        self.assertAlmostEqual(
            statistics.frechet_distance(a, b, eps=0), 5.0, places=12
        )

    def test_identical_is_zero(self) -> None:
        rng = np.random.default_rng(9)
        stats = helpers.gaussian(
            rng.normal(size=5), helpers.random_spd(rng, 5)
        )
        self.assertAlmostEqual(
            statistics.frechet_distance(stats, stats), 0.0, places=8
        )

    def test_symmetric_and_matches_oracle(self) -> None:
        rng = np.random.default_rng(10)
        for d in (2, 8, 24):
            a = helpers.gaussian(
                rng.normal(size=d), helpers.random_spd(rng, d)
            )
            b = helpers.gaussian(
                rng.normal(size=d), helpers.random_spd(rng, d)
            )
            forward = statistics.frechet_distance(a, b, eps=0)
            self.assertAlmostEqual(
                forward, statistics.frechet_distance(b, a, eps=0), places=6
            )
            self.assertAlmostEqual(
                forward, reference_frechet(a, b), delta=1e-6 * forward
            )
            self.assertGreaterEqual(forward, 0.0)

    def test_oracle_sweep(self) -> None:
        rng = np.random.default_rng(12)
        for _ in range(200):
            d = int(rng.integers(2, 9))
            a = helpers.gaussian(
                rng.normal(size=d), helpers.random_spd(rng, d)
            )
            b = helpers.gaussian(
                rng.normal(size=d), helpers.random_spd(rng, d)
            )
            expected = reference_frechet(a, b)
            self.assertAlmostEqual(
                statistics.frechet_distance(a, b, eps=0),
                expected,
                delta=1e-6 * max(1.0, expected),
            )

    def test_singular_covariances(self) -> None:
        zero = np.zeros((3, 3))
        a = helpers.gaussian([0, 0, 0], zero)
        b = helpers.gaussian([0, 0, 3], zero)
        self.assertAlmostEqual(statistics.frechet_distance(a, b), 9.0)

    def test_dimension_mismatch(self) -> None:
        with self.assertRaises(errors.DimensionMismatch):
            statistics.frechet_distance(
                helpers.gaussian([0], [[1]]),
                helpers.gaussian([0, 0], [[1, 0], [0, 1]]),
            )
