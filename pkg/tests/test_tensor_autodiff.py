"""
Autodiff tensors and the optimizer.

Every differentiable op is checked against central finite differences; the
optimizer is checked against its closed-form update.
"""
import numpy as np
import pytest
from scipy.optimize import approx_fprime

from app.services.autodiff.optim import AdaDelta, AdaDeltaState, adadelta_step, dropout, xavier_init
from app.services.autodiff.tensor import (
    Node,
    ShapeError,
    backward,
    concat,
    constant,
    exp,
    gather,
    getitem,
    is_finite,
    log,
    matmul,
    max_reduce,
    mean,
    parameter,
    reshape,
    sigmoid,
    softmax,
    stack,
    sum_,
    tanh,
    transpose,
)
from tests.helpers import numeric_gradient


def weighted(out: Node, weights: np.ndarray) -> Node:
    """Scalar probe of a non-scalar output."""
    return sum_(out * constant(weights))


def check_gradients(build, params, rtol=1e-5, atol=1e-7):
    for p in params:
        p.zero_grad()
    loss = build()
    backward(loss)
    for p in params:
        numeric = numeric_gradient(build, p)
        np.testing.assert_allclose(p.grad, numeric, rtol=rtol, atol=atol, err_msg=p.name)


class TestElementaryGradients:
    """Analytic gradients agree with finite differences for every op."""

    def test_matmul_transpose(self, rng):
        a = parameter(rng.normal(size=(3, 4)), "a")
        b = parameter(rng.normal(size=(2, 4)), "b")
        w = rng.normal(size=(3, 2))
        check_gradients(lambda: weighted(matmul(a, transpose(b)), w), [a, b])

    def test_matrix_vector_product(self, rng):
        a = parameter(rng.normal(size=(3, 4)), "a")
        v = parameter(rng.normal(size=4), "v")
        w = rng.normal(size=3)
        check_gradients(lambda: weighted(matmul(a, v), w), [a, v])

    def test_vector_matrix_product(self, rng):
        v = parameter(rng.normal(size=3), "v")
        a = parameter(rng.normal(size=(3, 4)), "a")
        w = rng.normal(size=4)
        check_gradients(lambda: weighted(matmul(v, a), w), [v, a])

    def test_broadcast_add_sub_mul(self, rng):
        a = parameter(rng.normal(size=(3, 4)), "a")
        b = parameter(rng.normal(size=4), "b")
        w = rng.normal(size=(3, 4))
        check_gradients(lambda: weighted((a + b) * (a - b), w), [a, b])

    def test_nonlinearities(self, rng):
        x = parameter(rng.normal(size=5), "x")
        w = rng.normal(size=5)
        check_gradients(lambda: weighted(tanh(x) + sigmoid(x) + exp(x * 0.5), w), [x])

    def test_log_of_positive_values(self, rng):
        x = parameter(rng.uniform(0.5, 2.0, size=4), "x")
        w = rng.normal(size=4)
        check_gradients(lambda: weighted(log(x), w), [x])

    def test_structural_ops(self, rng):
        a = parameter(rng.normal(size=(2, 3)), "a")
        b = parameter(rng.normal(size=(4, 3)), "b")
        w = rng.normal(size=(3, 2))

        def build():
            joined = concat([a, b], axis=0)
            stacked = stack([getitem(joined, 0), getitem(joined, 5)], axis=0)
            return weighted(reshape(stacked, (3, 2)), w)

        check_gradients(build, [a, b])

    def test_gather_accumulates_repeated_rows(self, rng):
        table = parameter(rng.normal(size=(5, 2)), "table")
        w = rng.normal(size=(4, 2))
        check_gradients(lambda: weighted(gather(table, [1, 3, 1, 1]), w), [table])

        table.zero_grad()
        backward(weighted(gather(table, [1, 3, 1, 1]), np.ones((4, 2))))
        np.testing.assert_array_equal(table.grad[:, 0], [0.0, 3.0, 0.0, 1.0, 0.0])

    def test_reductions(self, rng):
        x = parameter(rng.normal(size=(3, 4)), "x")
        w0 = rng.normal(size=4)
        w1 = rng.normal(size=3)
        check_gradients(lambda: weighted(sum_(x, axis=0), w0) + weighted(mean(x, axis=1), w1), [x])

    def test_softmax(self, rng):
        z = parameter(rng.normal(size=6), "z")
        w = rng.normal(size=6)
        check_gradients(lambda: weighted(softmax(z), w), [z])

    def test_max_reduce(self, rng):
        x = parameter(rng.permutation(12).reshape(3, 4).astype(float), "x")
        w = rng.normal(size=4)
        check_gradients(lambda: weighted(max_reduce(x, axis=0), w), [x])

    def test_composite_against_scipy(self, rng):
        a = rng.normal(size=(4, 3))
        w = rng.normal(size=4)

        def value(flat):
            return float(weighted(softmax(tanh(matmul(constant(a), constant(flat)))), w).value)

        x = parameter(rng.normal(size=3), "x")
        backward(weighted(softmax(tanh(matmul(constant(a), x))), w))
        expected = approx_fprime(x.value.copy(), value, 1e-7)
        np.testing.assert_allclose(x.grad, expected, rtol=1e-5, atol=1e-6)


class TestGraphSemantics:

    def test_shared_node_accumulates_both_paths(self):
        x = parameter([2.0], "x")
        y = x * x + x
        backward(sum_(y))
        np.testing.assert_allclose(x.grad, [5.0])

    def test_max_gradient_goes_to_first_argmax_only(self):
        x = parameter([[1.0, 3.0], [3.0, 2.0], [3.0, 0.0]], "x")
        backward(sum_(max_reduce(x, axis=0)))
        np.testing.assert_array_equal(x.grad, [[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]])

    def test_log_floor_blocks_gradient_of_clamped_entries(self):
        x = parameter([0.0, 1e-20, 0.5], "x")
        out = log(x, floor=1e-12)
        np.testing.assert_allclose(out.value[:2], np.log(1e-12))
        backward(sum_(out))
        np.testing.assert_allclose(x.grad, [0.0, 0.0, 2.0])

    def test_softmax_is_normalized_and_stable(self):
        z = constant([1000.0, 1000.0, -1000.0])
        y = softmax(z).value
        assert is_finite(y)
        np.testing.assert_allclose(y, [0.5, 0.5, 0.0], atol=1e-12)
        assert y.sum() == pytest.approx(1.0)

    def test_backward_needs_scalar(self, rng):
        x = parameter(rng.normal(size=3), "x")
        with pytest.raises(ValueError):
            backward(tanh(x))

    def test_constants_receive_no_gradient(self):
        c = constant([1.0, 2.0])
        x = parameter([3.0, 4.0], "x")
        backward(sum_(c * x))
        assert c.grad is None
        np.testing.assert_allclose(x.grad, [1.0, 2.0])


class TestShapeErrors:

    def test_matmul_inner_dimension(self):
        with pytest.raises(ShapeError):
            matmul(constant(np.zeros((2, 3))), constant(np.zeros((2, 3))))

    def test_add_incompatible(self):
        with pytest.raises(ShapeError):
            constant(np.zeros(3)) + constant(np.zeros(4))

    def test_softmax_needs_vector(self):
        with pytest.raises(ShapeError):
            softmax(constant(np.zeros((2, 2))))

    def test_gather_out_of_range(self):
        with pytest.raises(ShapeError):
            gather(constant(np.zeros((3, 2))), [0, 3])

    def test_reshape_size_mismatch(self):
        with pytest.raises(ShapeError):
            reshape(constant(np.zeros(6)), (4, 2))

    def test_stack_mixed_shapes(self):
        with pytest.raises(ShapeError):
            stack([constant(np.zeros(2)), constant(np.zeros(3))])


class TestInitAndDropout:

    def test_xavier_bounds(self):
        values = xavier_init((30, 20), 0)
        limit = np.sqrt(6.0 / 50)
        assert values.shape == (30, 20)
        assert np.abs(values).max() <= limit
        assert np.abs(values).max() > 0.9 * limit

    def test_xavier_is_seeded(self):
        np.testing.assert_array_equal(xavier_init((4, 5), 3), xavier_init((4, 5), 3))
        assert not np.array_equal(xavier_init((4, 5), 3), xavier_init((4, 5), 4))

    def test_dropout_is_identity_at_evaluation(self, rng):
        x = constant(rng.normal(size=10))
        assert dropout(x, 0.5, training=False, rng=None) is x

    def test_dropout_scales_kept_units(self):
        x = constant(np.ones(10000))
        out = dropout(x, 0.8, training=True, rng=np.random.default_rng(0)).value
        assert set(np.unique(out)) <= {0.0, 1.25}
        assert out.mean() == pytest.approx(1.0, abs=0.05)

    def test_dropout_keep_prob_range(self):
        with pytest.raises(ValueError):
            dropout(constant(np.ones(3)), 0.0, training=True, rng=np.random.default_rng(0))


class TestAdaDelta:

    def test_first_step_closed_form(self):
        g = np.array([1.0, -0.5, 0.0, 2.0])
        x = np.zeros(4)
        adadelta_step({"x": x}, {"x": g}, AdaDeltaState(rho=0.95, epsilon=1e-6))
        expected = -np.sqrt(1e-6) / np.sqrt(0.05 * g * g + 1e-6) * g
        np.testing.assert_allclose(x, expected, rtol=1e-12)

    def test_zero_gradient_leaves_parameter(self):
        x = np.array([1.5, -2.0])
        state = AdaDeltaState()
        for _ in range(5):
            adadelta_step({"x": x}, {"x": np.zeros(2)}, state)
        np.testing.assert_array_equal(x, [1.5, -2.0])

    def test_constant_gradient_updates_grow_and_stay_bounded(self):
        x = np.zeros(1)
        state = AdaDeltaState()
        previous = 0.0
        magnitudes = []
        for _ in range(100):
            before = x.copy()
            adadelta_step({"x": x}, {"x": np.ones(1)}, state)
            magnitudes.append(float(abs(x - before)[0]))
        for current in magnitudes:
            assert current >= previous - 1e-15
            assert current <= 1.0
            previous = current
        assert x[0] < 0

    def test_state_matches_across_optimizer_and_function(self, rng):
        value = rng.normal(size=(2, 3))
        node = parameter(value, "w")
        grads = [rng.normal(size=(2, 3)) for _ in range(3)]
        reference = value.copy()
        state = AdaDeltaState()
        optimizer = AdaDelta({"w": node})
        for g in grads:
            node.grad = g.copy()
            optimizer.step()
            adadelta_step({"w": reference}, {"w": g}, state)
        np.testing.assert_allclose(node.value, reference, rtol=1e-12)

    def test_parameter_without_gradient_is_untouched(self):
        node = parameter([1.0, 2.0], "w")
        AdaDelta({"w": node}).step()
        np.testing.assert_array_equal(node.value, [1.0, 2.0])

    def test_gradient_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adadelta_step({"x": np.zeros(3)}, {"x": np.zeros(4)}, AdaDeltaState())

    def test_invalid_hyperparameters(self):
        with pytest.raises(ValueError):
            AdaDeltaState(rho=1.0)
        with pytest.raises(ValueError):
            AdaDeltaState(epsilon=0.0)
