import unittest
import threading
import os
import sys

import numpy as np

# Add the src directory to the Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(project_root, 'src'))

from core.accuracy_tracker import AccuracyMatrix, RunCollector, compute_metrics, mean_std, summarize
from core.continual_trainer import evaluate
from core.errors import MetricsStateError
from network.mlp import MlpSpec, init


class TestAccuracyMatrix(unittest.TestCase):

    def test_all_ones(self):
        matrix = AccuracyMatrix.from_rows([[1.0], [1.0, 1.0], [1.0, 1.0, 1.0]])
        metrics = compute_metrics(matrix)
        self.assertEqual(metrics.avg, 1.0)
        self.assertEqual(metrics.last, 1.0)

    def test_two_task_example(self):
        """R = [[1, -], [0, 1]] -> avg (1 + 0.5) / 2 = 0.75, last 0.5"""
        metrics = compute_metrics(AccuracyMatrix.from_rows([[1.0], [0.0, 1.0]]))
        self.assertAlmostEqual(metrics.avg, 0.75, places=12)
        self.assertAlmostEqual(metrics.last, 0.5, places=12)
        self.assertEqual(metrics.first_task_curve, [1.0, 0.0])
        self.assertEqual(metrics.first_task_final, 0.0)
        self.assertEqual(metrics.final_accuracies, [0.0, 1.0])

    def test_single_task(self):
        metrics = compute_metrics(AccuracyMatrix.from_rows([[0.62]]))
        self.assertEqual(metrics.avg, metrics.last)
        self.assertEqual(metrics.avg, 0.62)

    def test_incomplete_matrix(self):
        matrix = AccuracyMatrix(3)
        matrix.record(0, 0, 0.9)
        matrix.record(1, 0, 0.8)
        with self.assertRaises(MetricsStateError):
            compute_metrics(matrix)

    def test_record_checks(self):
        matrix = AccuracyMatrix(2)
        with self.assertRaises(IndexError):
            matrix.record(0, 1, 0.5)
        with self.assertRaises(ValueError):
            matrix.record(1, 0, 1.5)

    def test_csv_format(self):
        matrix = AccuracyMatrix.from_rows([[0.5], [0.25, 1.0]])
        self.assertEqual(
            matrix.to_csv(),
            "after_task,acc_task_1,acc_task_2\n"
            "1,0.500000,\n"
            "2,0.250000,1.000000\n")


class TestEvaluate(unittest.TestCase):

    def test_permuting_test_set_keeps_accuracy(self):
        rng = np.random.default_rng(0)
        net = init(MlpSpec(5, (8,), 6), 2)
        x = rng.normal(size=(40, 5))
        y = rng.integers(0, 4, size=40)
        perm = rng.permutation(40)
        self.assertEqual(evaluate(net, x, y, range(0, 4)), evaluate(net, x[perm], y[perm], range(0, 4)))

    def test_predictions_restricted_to_seen_classes(self):
        """An unseen class with a huge logit never wins"""
        net = init(MlpSpec(2, (), 3), 0)
        _, bias = net.layers()[0]
        bias[2] = 1e6
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        self.assertEqual(evaluate(net, x, np.array([2, 2]), range(0, 3)), 1.0)
        self.assertEqual(evaluate(net, x, np.array([2, 2]), range(0, 2)), 0.0)


class TestAggregation(unittest.TestCase):

    def _metrics(self, first, second):
        return compute_metrics(AccuracyMatrix.from_rows([[1.0], [first, second]]))

    def test_mean_std(self):
        self.assertEqual(mean_std([0.5]), (0.5, 0.0))
        mean, std = mean_std([1.0, 2.0, 3.0])
        self.assertAlmostEqual(mean, 2.0)
        self.assertAlmostEqual(std, 1.0)
        with self.assertRaises(ValueError):
            mean_std([])

    def test_summarize(self):
        summary = summarize([self._metrics(0.0, 1.0), self._metrics(0.5, 1.0)])
        self.assertEqual(summary['runs'], 2)
        self.assertAlmostEqual(summary['first_task_final_mean'], 0.25)
        self.assertEqual(summary['first_task_curve_mean'], [1.0, 0.25])

    def test_collector(self):
        collector = RunCollector()

        def add(seed):
            collector.add(('strong', seed % 2, seed), self._metrics(seed / 10.0, 1.0))

        threads = [threading.Thread(target=add, args=(seed,)) for seed in range(8)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()

        ordered = collector.ordered('strong')
        self.assertEqual([key for key, _ in ordered], sorted(key for key, _ in ordered))
        self.assertEqual(len(ordered), 8)
        aggregate = collector.aggregate('strong')
        self.assertEqual(aggregate['runs'], 8)
        self.assertEqual(sorted(aggregate['by_class_order_seed']), ['0', '1'])
        self.assertEqual(collector.aggregate('plain'), {'runs': 0})

        collector.fail(('plain', 0, 0), 'NumericError: boom')
        self.assertIn(('plain', 0, 0), collector.failures)


if __name__ == '__main__':
    unittest.main(verbosity=2)
