import numpy as np
import pytest

from glasdi.param_space import SampleSet, build_grid
from glasdi.shepard import interpolate_coeffs, shepard_weights


class TestShepardWeights:
    def test_coincident_query_takes_full_weight(self):
        neighbors = [np.array([float(i), 0.0]) for i in range(8)]
        w = shepard_weights(np.array([5.0, 0.0]), neighbors)
        expected = np.zeros(8)
        expected[5] = 1.0
        np.testing.assert_array_equal(w.weights, expected)

    def test_two_equidistant_neighbors_split_evenly(self):
        w = shepard_weights(
            np.array([0.0, 0.0]), [np.array([1.0, 0.0]), np.array([-1.0, 0.0])]
        )
        np.testing.assert_allclose(w.weights, [0.5, 0.5])

    def test_hand_evaluated_inverse_square_kernel(self):
        # phi = (1/1, 1/4) -> weights (0.8, 0.2)
        w = shepard_weights(
            np.array([0.0, 0.0]), [np.array([1.0, 0.0]), np.array([2.0, 0.0])]
        )
        np.testing.assert_allclose(w.weights, [0.8, 0.2], rtol=1e-15)

    def test_rejects_duplicate_neighbors(self):
        with pytest.raises(ValueError):
            shepard_weights(
                np.array([0.5, 0.5]), [np.array([1.0, 0.0]), np.array([1.0, 0.0])]
            )

    def test_rejects_empty_neighbors(self):
        with pytest.raises(ValueError):
            shepard_weights(np.array([0.0]), [])

    def test_partition_of_unity_and_positivity(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            k = int(rng.integers(1, 9))
            neighbors = rng.uniform(-5, 5, size=(k, 3))
            query = rng.uniform(-5, 5, size=3)
            w = shepard_weights(query, neighbors)
            assert abs(float(np.sum(w.weights)) - 1.0) <= 1e-12
            assert np.all(w.weights >= 0.0)


class TestInterpolateCoeffs:
    def setup_method(self):
        self.space = build_grid(((0.0, 1.0), (0.0, 1.0)), (5, 5))
        self.sampled = SampleSet((0, 4, 20, 24, 12))
        rng = np.random.default_rng(7)
        self.coeffs = [rng.normal(size=(4, 3)) for _ in self.sampled]

    def test_k1_returns_nearest_exactly(self):
        query = self.space.point(12) + np.array([0.01, 0.0])
        out = interpolate_coeffs(query, self.space, self.sampled, self.coeffs, 1)
        np.testing.assert_array_equal(out, self.coeffs[4])

    def test_query_on_training_point_reproduces_it_for_any_k(self):
        for k in range(1, len(self.sampled) + 1):
            out = interpolate_coeffs(
                self.space.point(20), self.space, self.sampled, self.coeffs, k
            )
            np.testing.assert_array_equal(out, self.coeffs[2])

    def test_componentwise_hull_containment(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            query = rng.uniform(size=2)
            k = int(rng.integers(1, len(self.sampled) + 1))
            out = interpolate_coeffs(query, self.space, self.sampled, self.coeffs, k)
            stacked = np.stack(self.coeffs)
            assert np.all(out <= stacked.max(axis=0) + 1e-12)
            assert np.all(out >= stacked.min(axis=0) - 1e-12)

    def test_rejects_mismatched_coefficient_list(self):
        with pytest.raises(ValueError):
            interpolate_coeffs(
                np.array([0.5, 0.5]), self.space, self.sampled, self.coeffs[:-1], 1
            )

    def test_rejects_inconsistent_shapes(self):
        bad = list(self.coeffs)
        bad[0] = np.zeros((2, 2))
        with pytest.raises(ValueError):
            interpolate_coeffs(np.array([0.5, 0.5]), self.space, self.sampled, bad, 2)

    def test_weighted_combination_matches_manual_sum(self):
        from glasdi.param_space import knn_indices
        from glasdi.shepard import shepard_weights as sw

        query = np.array([0.3, 0.7])
        k = 3
        out = interpolate_coeffs(query, self.space, self.sampled, self.coeffs, k)
        nearest = knn_indices(self.space, query, self.sampled, k)
        pos = {g: p for p, g in enumerate(self.sampled)}
        weights = sw(query, self.space.points[nearest])
        manual = sum(
            wgt * self.coeffs[pos[g]] for g, wgt in zip(nearest, weights.weights)
        )
        np.testing.assert_allclose(out, manual, rtol=1e-15)
