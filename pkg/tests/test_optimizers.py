"""
Unit tests for the optimizers module
"""

import unittest
import numpy as np

from src.errors import ConfigurationError, NumericalError, ShapeError
from src.network import Gradients, LayerParams, MLPModel, ModelConfig, init_model
from src.optimizers import OptimizerKind, init_optimizer_state, optimizer_step


def _linear_model(weights, bias):
    config = ModelConfig(len(weights[0]), ())
    return MLPModel(config, [LayerParams(np.array(weights, dtype=float), np.array(bias, dtype=float))])


def _grads_like(model, fill):
    return Gradients([LayerParams(np.full_like(l.weights, fill), np.full_like(l.bias, fill)) for l in model.layers])


class TestAdam(unittest.TestCase):
    """Test the adaptive moment update"""

    def setUp(self):
        self.model = _linear_model([[0.5], [-0.25]], [0.0, 0.0])
        self.state = init_optimizer_state(self.model, lr=0.0007)

    def test_first_step_closed_form(self):
        """Test the first Adam step"""
        g = 0.3
        new_model, new_state = optimizer_step(self.model, _grads_like(self.model, g), self.state)

        delta = self.model.layers[0].weights - new_model.layers[0].weights
        # bias-corrected first step: lr * |g| / (|g| + eps)
        expected = 0.0007 * g / (g + 1e-8)
        np.testing.assert_allclose(delta, expected, rtol=1e-12)
        np.testing.assert_allclose(delta, 0.0007, rtol=1e-6)
        self.assertTrue(np.all(delta > 0))
        self.assertEqual(new_state.step, 1)

    def test_direction_opposes_gradient(self):
        """Test step direction"""
        new_model, _ = optimizer_step(self.model, _grads_like(self.model, -2.0), self.state)
        self.assertTrue(np.all(new_model.layers[0].weights > self.model.layers[0].weights))

    def test_zero_gradient_leaves_parameters(self):
        """Test a zero gradient step"""
        new_model, new_state = optimizer_step(self.model, _grads_like(self.model, 0.0), self.state)
        for (_, a), (_, b) in zip(new_model.named_parameters(), self.model.named_parameters()):
            np.testing.assert_array_equal(a, b)
        for name, moment in new_state.first_moments.items():
            np.testing.assert_array_equal(moment, self.state.first_moments[name])
            np.testing.assert_array_equal(new_state.second_moments[name], self.state.second_moments[name])
        self.assertEqual(new_state.step, 1)

    def test_deterministic_and_pure(self):
        """Test that steps do not mutate their inputs"""
        model = init_model(ModelConfig(4, (3,)), seed=0)
        state = init_optimizer_state(model)
        grads = Gradients([LayerParams(np.sin(l.weights), np.cos(l.bias)) for l in model.layers])
        before = model.copy()

        a_model, a_state = optimizer_step(model, grads, state)
        b_model, b_state = optimizer_step(model, grads, state)
        for (_, a), (_, b) in zip(a_model.named_parameters(), b_model.named_parameters()):
            np.testing.assert_array_equal(a, b)
        self.assertEqual(a_state.step, b_state.step)
        for (_, a), (_, b) in zip(model.named_parameters(), before.named_parameters()):
            np.testing.assert_array_equal(a, b)
        self.assertEqual(state.step, 0)

    def test_step_counter_increases(self):
        """Test the step counter"""
        model, state = self.model, self.state
        for expected in range(1, 4):
            model, state = optimizer_step(model, _grads_like(model, 0.1), state)
            self.assertEqual(state.step, expected)

    def test_non_finite_gradient_names_tensor(self):
        """Test that a NaN gradient names its tensor"""
        grads = _grads_like(self.model, 0.1)
        grads.layers[0].bias[1] = np.nan
        with self.assertRaises(NumericalError) as ctx:
            optimizer_step(self.model, grads, self.state)
        self.assertIn("layers.0.bias", str(ctx.exception))

    def test_shape_mismatch(self):
        """Test gradient shape validation"""
        grads = Gradients([LayerParams(np.zeros((2, 2)), np.zeros(2))])
        with self.assertRaises(ShapeError):
            optimizer_step(self.model, grads, self.state)


class TestSGD(unittest.TestCase):
    """Test plain gradient descent"""

    def test_update(self):
        """Test plain SGD update"""
        model = _linear_model([[1.0, 2.0], [3.0, 4.0]], [0.5, -0.5])
        state = init_optimizer_state(model, lr=0.1, kind=OptimizerKind.SGD)
        new_model, _ = optimizer_step(model, _grads_like(model, 1.0), state)
        np.testing.assert_allclose(new_model.layers[0].weights, [[0.9, 1.9], [2.9, 3.9]])
        np.testing.assert_allclose(new_model.layers[0].bias, [0.4, -0.6])


class TestOptimizerState(unittest.TestCase):
    """Test state construction"""

    def test_invalid_settings(self):
        """Test invalid optimizer settings"""
        model = _linear_model([[1.0], [2.0]], [0.0, 0.0])
        with self.assertRaises(ConfigurationError):
            init_optimizer_state(model, lr=0.0)
        with self.assertRaises(ConfigurationError):
            init_optimizer_state(model, beta1=1.0)
        with self.assertRaises(ConfigurationError):
            init_optimizer_state(model, kind="rmsprop")

    def test_with_lr(self):
        """Test changing the learning rate"""
        model = _linear_model([[1.0], [2.0]], [0.0, 0.0])
        state = init_optimizer_state(model, lr=0.0007)
        self.assertEqual(state.with_lr(0.00007).lr, 0.00007)
        with self.assertRaises(ConfigurationError):
            state.with_lr(-1.0)


if __name__ == '__main__':
    unittest.main()
