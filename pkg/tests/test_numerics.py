import unittest
import os
import sys

import numpy as np

# Add the src directory to the Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(project_root, 'src'))

from core.errors import DimensionError, LabelRangeError, NumericError
from core.numerics import (as_vector, cosine_similarity, cross_entropy, cross_entropy_rows, kl_divergence,
                           kl_rows, softmax)


class TestSoftmax(unittest.TestCase):

    def test_uniform_logits(self):
        """Equal logits give a uniform distribution"""
        np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5])

    def test_temperature_two(self):
        """softmax([ln 4, 0], T=2) = [2/3, 1/3]"""
        np.testing.assert_allclose(softmax([np.log(4.0), 0.0], temperature=2.0), [2 / 3, 1 / 3], rtol=1e-12)

    def test_large_logits_do_not_overflow(self):
        probs = softmax([1000.0, 0.0])
        self.assertTrue(np.all(np.isfinite(probs)))
        np.testing.assert_allclose(probs, [1.0, 0.0], atol=1e-300)

    def test_batch_rows_sum_to_one(self):
        logits = np.random.default_rng(0).normal(size=(7, 5)) * 10
        probs = softmax(logits, temperature=3.0)
        np.testing.assert_allclose(probs.sum(axis=1), np.ones(7), rtol=1e-12)
        self.assertTrue(np.all(probs > 0))

    def test_empty_and_non_finite_rejected(self):
        with self.assertRaises(DimensionError):
            softmax([])
        with self.assertRaises(NumericError):
            softmax([0.0, np.nan])
        with self.assertRaises(ValueError):
            softmax([0.0, 1.0], temperature=0.0)


class TestDivergences(unittest.TestCase):

    def test_kl_identical_is_zero(self):
        p = [0.2, 0.3, 0.5]
        self.assertEqual(kl_divergence(p, p), 0.0)

    def test_kl_known_value(self):
        """KL([1, 0] || [0.5, 0.5]) = ln 2"""
        self.assertAlmostEqual(kl_divergence([1.0, 0.0], [0.5, 0.5]), np.log(2.0), places=12)

    def test_kl_length_mismatch(self):
        with self.assertRaises(DimensionError):
            kl_divergence([0.5, 0.5], [1.0])

    def test_kl_zero_q_is_clamped(self):
        value = kl_divergence([0.5, 0.5], [1.0, 0.0])
        self.assertTrue(np.isfinite(value))
        self.assertGreater(value, 10.0)

    def test_cross_entropy(self):
        self.assertAlmostEqual(cross_entropy([0.25, 0.75], 1), -np.log(0.75), places=12)
        self.assertTrue(np.isfinite(cross_entropy([1.0, 0.0], 1)))
        with self.assertRaises(LabelRangeError):
            cross_entropy([0.5, 0.5], 2)


class TestCosine(unittest.TestCase):

    def test_orthogonal_and_opposite(self):
        self.assertEqual(cosine_similarity([1.0, 0.0], [0.0, 1.0]), 0.0)
        self.assertAlmostEqual(cosine_similarity([1.0, 1.0], [-1.0, 0.0]), -1 / np.sqrt(2), places=12)
        self.assertEqual(cosine_similarity([2.0, 0.0], [-3.0, 0.0]), -1.0)

    def test_degenerate_vector_gives_zero(self):
        self.assertEqual(cosine_similarity([0.0, 0.0], [1.0, 2.0]), 0.0)
        self.assertEqual(cosine_similarity([1e-13, 0.0], [1.0, 2.0]), 0.0)

    def test_result_is_clamped(self):
        v = np.random.default_rng(3).normal(size=1000)
        self.assertLessEqual(cosine_similarity(v, v * 7.0), 1.0)
        self.assertGreaterEqual(cosine_similarity(v, -v), -1.0)

    def test_as_vector(self):
        vector = as_vector([1, 2, 3])
        self.assertEqual(vector.dtype, np.float64)
        with self.assertRaises(DimensionError):
            as_vector([[1.0]])
        with self.assertRaises(NumericError):
            as_vector([np.inf])



class TestExampleValues(unittest.TestCase):

    def test_softmax_of_one_zero(self):
        np.testing.assert_allclose(softmax([1.0, 0.0]), [0.73106, 0.26894], atol=1e-5)

    def test_kl_half_against_quarter(self):
        self.assertAlmostEqual(kl_divergence([0.5, 0.5], [0.25, 0.75]), 0.14384, delta=1e-4)

    def test_cross_entropy_of_uniform_pair(self):
        self.assertAlmostEqual(cross_entropy([0.5, 0.5], 1), 0.69315, delta=1e-5)
        self.assertAlmostEqual(cross_entropy([0.5, 0.5], 1), np.log(2.0), delta=1e-6)

    def test_cosine_of_diagonal_and_axis(self):
        self.assertAlmostEqual(cosine_similarity([1.0, 1.0], [1.0, 0.0]), 0.70711, delta=1e-6)


class TestNumericProperties(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(2024)

    def test_extreme_logits_with_low_temperature(self):
        """The max is removed before the temperature divides, so nothing overflows"""
        np.testing.assert_array_equal(softmax([1e308, 0.0], temperature=0.1), [1.0, 0.0])
        np.testing.assert_array_equal(softmax([-1e308, 1e308], temperature=0.1), [0.0, 1.0])
        probs = softmax([1e308, 1e308, -1e308], temperature=0.1)
        np.testing.assert_allclose(probs, [0.5, 0.5, 0.0])

    def test_softmax_sums_to_one(self):
        print("Checking softmax normalisation over random lengths and temperatures...")
        for length in (1, 2, 17, 1000, 10000):
            for temperature in (0.1, 0.5, 1.0, 7.0, 100.0):
                scale = 10.0 ** self.rng.uniform(-3, 300)
                logits = self.rng.uniform(-1.0, 1.0, size=length) * scale
                probs = softmax(logits, temperature)
                self.assertTrue(np.all(np.isfinite(probs)))
                self.assertAlmostEqual(float(np.sum(probs)), 1.0, delta=1e-9,
                                       msg=f"length {length}, T={temperature}, scale {scale:g}")
        print("✅ softmax sums to 1")

    def test_kl_is_non_negative(self):
        for _ in range(500):
            size = int(self.rng.integers(1, 50))
            p = self.rng.dirichlet(np.full(size, 0.3))
            q = self.rng.dirichlet(np.full(size, 0.3))
            self.assertGreaterEqual(kl_divergence(p, q), 0.0)

    def test_kl_rows_match_single_vectors(self):
        p = self.rng.dirichlet(np.ones(6), size=9)
        q = self.rng.dirichlet(np.ones(6), size=9)
        rows = kl_rows(p, q)
        self.assertEqual(rows.shape, (9,))
        for i in range(9):
            self.assertAlmostEqual(rows[i], kl_divergence(p[i], q[i]), delta=1e-14)

    def test_cross_entropy_rows(self):
        p = np.array([[0.25, 0.75], [0.5, 0.5]])
        np.testing.assert_allclose(cross_entropy_rows(p, [1, 0]), [-np.log(0.75), np.log(2.0)], rtol=1e-12)
        with self.assertRaises(DimensionError):
            cross_entropy_rows(p, [1])
        with self.assertRaises(LabelRangeError):
            cross_entropy_rows(p, [1, 2])

    def test_nan_target_propagates(self):
        self.assertTrue(np.isnan(kl_rows([[np.nan, 0.5]], [[0.5, 0.5]])[0]))

    def test_cosine_symmetry_and_scale_invariance(self):
        print("Checking cosine symmetry and scale invariance...")
        for _ in range(200):
            size = int(self.rng.integers(2, 300))
            a = self.rng.normal(size=size)
            b = self.rng.normal(size=size)
            base = cosine_similarity(a, b)
            self.assertEqual(base, cosine_similarity(b, a))
            for alpha, beta in ((3.0, 0.5), (1e-6, 1e6), (1e200, 1e200), (1e250, 1e-3)):
                self.assertAlmostEqual(cosine_similarity(alpha * a, beta * b), base, delta=1e-9)
        print("✅ cosine is symmetric and scale invariant")

    def test_identical_huge_vectors(self):
        self.assertEqual(cosine_similarity([1e200, 0.0], [1e200, 0.0]), 1.0)
        self.assertAlmostEqual(cosine_similarity([1e308, 1e308], [-1e308, -1e308]), -1.0, delta=1e-12)

    def test_non_finite_cosine_input(self):
        with self.assertRaises(NumericError):
            cosine_similarity([np.inf, 0.0], [1.0, 0.0])
        with self.assertRaises(NumericError):
            cosine_similarity([np.nan, 1.0], [1.0, 0.0])

    def test_functions_are_pure(self):
        """Same inputs give bit-identical outputs and the inputs are left untouched"""
        logits = self.rng.normal(size=(4, 5))
        p = self.rng.dirichlet(np.ones(5))
        q = self.rng.dirichlet(np.ones(5))
        a, b = self.rng.normal(size=64), self.rng.normal(size=64)
        copies = [x.copy() for x in (logits, p, q, a, b)]

        np.testing.assert_array_equal(softmax(logits, 2.0), softmax(logits, 2.0))
        self.assertEqual(kl_divergence(p, q), kl_divergence(p, q))
        self.assertEqual(cross_entropy(p, 3), cross_entropy(p, 3))
        self.assertEqual(cosine_similarity(a, b), cosine_similarity(a, b))
        for original, copy in zip((logits, p, q, a, b), copies):
            np.testing.assert_array_equal(original, copy)


if __name__ == '__main__':
    unittest.main(verbosity=2)
