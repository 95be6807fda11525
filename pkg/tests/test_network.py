import unittest
import tempfile
import shutil
import os
import sys

import numpy as np

# Add the src directory to the Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(project_root, 'src'))

from core.errors import ClassRangeError, DimensionError, LabelRangeError
from core.numerics import softmax
from network.mlp import LossSpec, MlpSpec, Network, backward, flatten, forward, init, loss_value, unflatten
from network.snapshot import FunctionSnapshot, load_snapshot, save_snapshot, snapshot


def reference_forward(spec, params, x):
    """Straight-line forward pass used as an oracle"""
    h = np.atleast_2d(x)
    layers = unflatten(spec, params)
    for index, (w, b) in enumerate(layers):
        z = np.dot(h, w) + b
        if index < len(layers) - 1:
            h = np.maximum(z, 0.0) if spec.activation == 'relu' else np.tanh(z)
        else:
            h = z
    return h


def central_difference(net, x, loss, index, h=1e-5):
    plus = net.copy()
    plus.params[index] += h
    minus = net.copy()
    minus.params[index] -= h
    return (loss_value(plus, x, loss) - loss_value(minus, x, loss)) / (2 * h)


class TestMlp(unittest.TestCase):

    def test_param_count(self):
        """Widths (2, [4], 2) hold 2*4 + 4 + 4*2 + 2 = 22 parameters"""
        spec = MlpSpec(2, (4,), 2)
        self.assertEqual(spec.param_count, 22)
        self.assertEqual(init(spec, 0).params.shape, (22,))

    def test_init_is_deterministic(self):
        spec = MlpSpec(5, (8, 8), 6)
        a = init(spec, 42)
        b = init(spec, 42)
        c = init(spec, 43)
        self.assertEqual(a.params.tobytes(), b.params.tobytes())
        self.assertFalse(np.array_equal(a.params, c.params))

    def test_init_glorot_bounds_and_zero_bias(self):
        spec = MlpSpec(10, (20,), 4)
        net = init(spec, 7)
        for w, b in net.layers():
            fan_in, fan_out = w.shape
            self.assertLessEqual(np.max(np.abs(w)), np.sqrt(6.0 / (fan_in + fan_out)))
            self.assertTrue(np.all(b == 0.0))

    def test_flatten_inverts_unflatten(self):
        spec = MlpSpec(3, (4, 5), 2)
        net = init(spec, 1)
        np.testing.assert_array_equal(flatten(net.layers()), net.params)

    def test_identity_network(self):
        """Identity weights and zero biases map x to itself"""
        spec = MlpSpec(3, (), 3)
        net = Network(spec, flatten([(np.eye(3), np.zeros(3))]))
        x = np.array([0.5, -1.0, 2.0])
        np.testing.assert_array_equal(forward(net, x), x)

        deep = MlpSpec(3, (3,), 3)
        net = Network(deep, flatten([(np.eye(3), np.zeros(3)), (np.eye(3), np.zeros(3))]))
        x = np.array([0.5, 1.0, 2.0])
        np.testing.assert_array_equal(forward(net, x), x)

    def test_forward_matches_reference(self):
        rng = np.random.default_rng(5)
        for activation in ('relu', 'tanh'):
            spec = MlpSpec(6, (9, 7), 5, activation)
            net = init(spec, 11)
            x = rng.normal(size=(4, 6))
            np.testing.assert_allclose(forward(net, x), reference_forward(spec, net.params, x),
                                       rtol=1e-12, atol=1e-12)

    def test_wrong_input_dimension(self):
        net = init(MlpSpec(3, (4,), 2), 0)
        with self.assertRaises(DimensionError):
            forward(net, np.zeros(4))
        with self.assertRaises(DimensionError):
            Network(net.spec, np.zeros(5))

    def test_loss_range_checks(self):
        net = init(MlpSpec(3, (4,), 4), 0)
        x = np.zeros((2, 3))
        with self.assertRaises(ClassRangeError):
            backward(net, x, LossSpec.cross_entropy([0, 1], range(0, 5)))
        with self.assertRaises(LabelRangeError):
            backward(net, x, LossSpec.cross_entropy([0, 3], range(0, 3)))
        with self.assertRaises(DimensionError):
            backward(net, x, LossSpec.kl(np.full((2, 3), 1 / 3), range(0, 2)))


class TestGradients(unittest.TestCase):
    """Analytic gradients against central finite differences"""

    def setUp(self):
        self.rng = np.random.default_rng(2024)

    def _relative_error(self, analytic, numeric):
        return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-5)

    def _check(self, net, x, loss, triples):
        gradient = backward(net, x, loss)
        self.assertEqual(gradient.shape, net.params.shape)
        worst = 0.0
        for _ in range(triples):
            index = int(self.rng.integers(net.spec.param_count))
            worst = max(worst, self._relative_error(gradient[index], central_difference(net, x, loss, index)))
        return worst

    def test_cross_entropy_gradient(self):
        print("Checking cross-entropy gradients against finite differences...")
        worst = 0.0
        for trial in range(20):
            spec = MlpSpec(5, (7, 6), 6, 'tanh')
            net = init(spec, trial)
            x = self.rng.normal(size=(3, 5))
            loss = LossSpec.cross_entropy(self.rng.integers(0, 4, size=3), range(0, 4))
            worst = max(worst, self._check(net, x, loss, 3))
        self.assertLess(worst, 1e-4)
        print("✅ Cross-entropy gradient check passed")

    def test_kl_gradient(self):
        print("Checking KL gradients against finite differences...")
        worst = 0.0
        for trial in range(20):
            spec = MlpSpec(5, (7, 6), 6, 'tanh')
            net = init(spec, 100 + trial)
            x = self.rng.normal(size=(3, 5))
            target = self.rng.dirichlet(np.ones(3), size=3)
            loss = LossSpec.kl(target, range(0, 3), temperature=2.0)
            worst = max(worst, self._check(net, x, loss, 3))
        self.assertLess(worst, 1e-4)
        print("✅ KL gradient check passed")

    def test_relu_gradient(self):
        spec = MlpSpec(4, (6,), 4, 'relu')
        net = init(spec, 9)
        x = self.rng.normal(size=(2, 4))
        loss = LossSpec.cross_entropy([0, 2], range(0, 4))
        self.assertLess(self._check(net, x, loss, 5), 1e-4)

    def test_kl_gradient_vanishes_at_target(self):
        """KL against the network's own softened outputs has zero gradient"""
        spec = MlpSpec(4, (8,), 6)
        net = init(spec, 3)
        x = self.rng.normal(size=(5, 4))
        target = softmax(forward(net, x)[:, 0:4], 2.0)
        gradient = backward(net, x, LossSpec.kl(target, range(0, 4), temperature=2.0))
        self.assertLess(np.linalg.norm(gradient), 1e-8)

    def test_cross_entropy_gradient_vanishes_when_confident(self):
        spec = MlpSpec(2, (), 2)
        net = Network(spec, flatten([(np.array([[50.0, -50.0], [0.0, 0.0]]), np.zeros(2))]))
        loss = LossSpec.cross_entropy([0], range(0, 2))
        self.assertLess(np.linalg.norm(backward(net, np.array([1.0, 0.0]), loss)), 1e-8)
        self.assertLess(loss_value(net, np.array([1.0, 0.0]), loss), 1e-8)

    def test_masked_classes_get_no_gradient(self):
        """Output units outside the loss range receive no gradient"""
        spec = MlpSpec(3, (), 5)
        net = init(spec, 0)
        gradient = backward(net, self.rng.normal(size=(4, 3)), LossSpec.cross_entropy([0, 1, 1, 0], range(0, 2)))
        w, b = unflatten(spec, gradient)[0]
        self.assertTrue(np.all(w[:, 2:] == 0.0))
        self.assertTrue(np.all(b[2:] == 0.0))


class TestSnapshot(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.net = init(MlpSpec(4, (5,), 6), 8)

    def tearDown(self):
        if os.path.exists(self.temp_dir):
            shutil.rmtree(self.temp_dir)

    def test_snapshot_unaffected_by_training(self):
        snap = snapshot(self.net, range(0, 2), 1)
        x = np.ones((2, 4))
        before = snap.forward(x).copy()
        self.net.params += 1.0
        np.testing.assert_array_equal(snap.forward(x), before)
        self.assertEqual(snap.fingerprint, snap.current_fingerprint())

    def test_snapshot_is_read_only(self):
        snap = snapshot(self.net, range(0, 2), 1)
        with self.assertRaises(ValueError):
            snap.params[0] = 1.0
        with self.assertRaises(AttributeError):
            snap.covered_classes = range(0, 4)

    def test_coverage_must_be_a_head_prefix(self):
        with self.assertRaises(ClassRangeError):
            snapshot(self.net, range(2, 4))
        with self.assertRaises(ClassRangeError):
            snapshot(self.net, range(0, 7))

    def test_covered_logits(self):
        snap = snapshot(self.net, range(0, 4), 2)
        x = np.ones((3, 4))
        np.testing.assert_array_equal(snap.covered_logits(x), forward(self.net, x)[:, :4])

    def test_save_and_load_bit_exact(self):
        snap = snapshot(self.net, range(0, 4), 2)
        path = os.path.join(self.temp_dir, 'snaps', 'task_2.npz')
        save_snapshot(snap, path)
        loaded = load_snapshot(path)
        self.assertIsInstance(loaded, FunctionSnapshot)
        self.assertEqual(loaded.params.tobytes(), snap.params.tobytes())
        self.assertEqual(loaded.fingerprint, snap.fingerprint)
        self.assertEqual(loaded.covered_classes, range(0, 4))
        self.assertEqual(loaded.task_index, 2)
        self.assertEqual(loaded.spec, snap.spec)
        self.assertFalse(os.path.exists(path + '.tmp'))


if __name__ == '__main__':
    unittest.main(verbosity=2)
