import math

import numpy as np
import pytest

from msan.autodiff import (
    Tape,
    Tensor,
    add,
    add_bias,
    backward,
    grad_check,
    grl,
    grl_lambda_schedule,
    matmul,
    mse,
    relu,
    scale,
    slice_rows,
    softmax_cross_entropy,
    sum_all,
    tanh,
    vstack,
)
from msan.errors import ShapeError


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = matmul(a, np.eye(2))
        np.testing.assert_array_equal(out.array, a)

    def test_scalar_case(self):
        assert matmul([[2.0]], [[3.0]]).array[0, 0] == 6.0

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(np.zeros((2, 3)), np.zeros((2, 2)))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        b = rng.uniform(-2, 2, (4, 2))
        for trial in range(10):
            a0 = rng.uniform(-2, 2, (3, 4))
            err = grad_check(lambda t: sum_all(matmul(t, b)), a0)
            assert err < 1e-4

    def test_gradient_wrt_right_operand(self):
        rng = np.random.default_rng(8)
        a = rng.uniform(-2, 2, (3, 4))
        err = grad_check(lambda t: sum_all(matmul(a, t)), rng.uniform(-2, 2, (4, 2)))
        assert err < 1e-4


class TestAddBias:
    def test_zero_bias(self):
        out = add_bias([[1.0, 1.0]], [0.0, 0.0])
        np.testing.assert_array_equal(out.array, [[1.0, 1.0]])

    def test_broadcast(self):
        out = add_bias([[1.0, 2.0], [3.0, 4.0]], [10.0, 20.0])
        np.testing.assert_array_equal(out.array, [[11.0, 22.0], [13.0, 24.0]])

    def test_bias_gradient_sums_over_rows(self):
        tape = Tape()
        b = Tensor(np.zeros(2))
        tape.watch(b)
        out = add_bias(Tensor(np.ones((3, 2))), b)
        tape.backward(sum_all(out))
        np.testing.assert_array_equal(b.grad, [3.0, 3.0])

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        a = rng.uniform(-2, 2, (3, 2))
        err = grad_check(lambda t: mse(add_bias(a, t), np.zeros((3, 2))),
                         rng.uniform(-2, 2, 2))
        assert err < 1e-4

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            add_bias(np.zeros((2, 3)), np.zeros(2))


class TestActivations:
    def test_relu_values(self):
        np.testing.assert_array_equal(relu([-1.0, 0.0, 2.0]).array, [0.0, 0.0, 2.0])

    def test_tanh_zero(self):
        assert tanh([0.0]).array[0] == 0.0

    def test_tanh_gradient(self):
        rng = np.random.default_rng(10)
        for trial in range(10):
            x = rng.uniform(-2, 2, 6)
            assert grad_check(lambda t: sum_all(tanh(t)), x) < 1e-4

    def test_relu_gradient_away_from_kink(self):
        rng = np.random.default_rng(11)
        for trial in range(10):
            x = rng.uniform(0.1, 2, 6) * rng.choice([-1.0, 1.0], 6)
            assert grad_check(lambda t: sum_all(relu(t)), x) < 1e-4


class TestGrl:
    def test_forward_is_bit_identical(self):
        x = np.array([0.5, -1.5])
        out = grl(Tensor(x.copy()), 1.0)
        assert np.array_equal(out.array, x)

    def test_backward_negates_upstream(self):
        tape = Tape()
        x = Tensor([1.0, 1.0])
        tape.watch(x)
        tape.backward(sum_all(grl(x, 1.0)))  # upstream grad is all ones
        np.testing.assert_array_equal(x.grad, [-1.0, -1.0])

    def test_backward_scales_by_lambda(self):
        # loss = grl(x) @ [2, -4]^T makes the upstream gradient [2, -4]
        tape = Tape()
        x = Tensor([[0.0, 0.0]])
        tape.watch(x)
        loss = sum_all(matmul(grl(x, 0.5), [[2.0], [-4.0]]))
        tape.backward(loss)
        np.testing.assert_array_equal(x.grad, [[-1.0, 2.0]])

    def test_lambda_zero_blocks_gradient(self):
        tape = Tape()
        x = Tensor([3.0, -2.0])
        tape.watch(x)
        tape.backward(sum_all(grl(x, 0.0)))
        np.testing.assert_array_equal(x.grad, [0.0, 0.0])

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            grl([1.0], -0.1)

    def test_backward_is_exact_negation_of_identity_path(self):
        rng = np.random.default_rng(12)
        w = rng.uniform(-2, 2, (4, 3))
        x0 = rng.uniform(-2, 2, (2, 4))
        grads = {}
        for use_grl in (False, True):
            tape = Tape()
            x = Tensor(x0.copy())
            tape.watch(x)
            h = grl(x, 1.0) if use_grl else x
            tape.backward(sum_all(tanh(matmul(h, w))))
            grads[use_grl] = x.grad.copy()
        np.testing.assert_array_equal(grads[True], -grads[False])


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        loss = softmax_cross_entropy([[0.0, 0.0, 0.0]], [0])
        assert loss.item() == pytest.approx(math.log(3.0), abs=1e-12)

    def test_saturated_logits(self):
        loss = softmax_cross_entropy([[100.0, 0.0, 0.0]], [0])
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy([[0.0, 0.0]], [2])

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        labels = rng.integers(0, 3, 4)
        for trial in range(10):
            logits = rng.uniform(-2, 2, (4, 3))
            err = grad_check(lambda t: softmax_cross_entropy(t, labels), logits)
            assert err < 1e-4

    def test_shift_invariance(self):
        rng = np.random.default_rng(14)
        logits = rng.uniform(-2, 2, (5, 4))
        labels = rng.integers(0, 4, 5)
        base = softmax_cross_entropy(logits, labels).item()
        for c in (-3.7, 0.01, 42.0):
            shifted = softmax_cross_entropy(logits + c, labels).item()
            assert shifted == pytest.approx(base, abs=1e-9)


class TestMse:
    def test_identical_inputs(self):
        assert mse([1.0, 2.0], [1.0, 2.0]).item() == 0.0

    def test_unit_difference(self):
        assert mse([1.0, 1.0], [0.0, 0.0]).item() == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse(np.zeros(3), np.zeros(4))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(15)
        b = rng.uniform(-2, 2, (3, 2))
        for trial in range(10):
            a0 = rng.uniform(-2, 2, (3, 2))
            assert grad_check(lambda t: mse(t, b), a0) < 1e-4


class TestBackward:
    def test_sum_gives_ones(self):
        tape = Tape()
        p = Tensor([1.0, 2.0, 3.0])
        tape.watch(p)
        tape.backward(sum_all(p))
        np.testing.assert_array_equal(p.grad, [1.0, 1.0, 1.0])

    def test_unreachable_parameter_gets_zeros(self):
        tape = Tape()
        p = Tensor([1.0, 2.0, 3.0])
        q = Tensor([5.0])
        tape.watch(p)
        tape.watch(q)
        tape.backward(sum_all(p))
        np.testing.assert_array_equal(q.grad, [0.0])

    def test_non_scalar_loss_rejected(self):
        tape = Tape()
        p = Tensor([1.0, 2.0])
        tape.watch(p)
        out = relu(p)
        with pytest.raises(ValueError):
            tape.backward(out)

    def test_two_layer_mlp_matches_finite_differences(self):
        rng = np.random.default_rng(16)
        w1 = rng.uniform(-1, 1, (3, 5))
        b1 = rng.uniform(-1, 1, 5)
        w2 = rng.uniform(-1, 1, (5, 2))
        b2 = rng.uniform(-1, 1, 2)
        x = rng.uniform(-2, 2, (4, 3))
        y = rng.integers(0, 2, 4)

        def loss_wrt(pack):
            def f(t):
                params = dict(pack)
                params[pack_name] = t
                h = tanh(add_bias(matmul(x, params["w1"]), params["b1"]))
                logits = add_bias(matmul(h, params["w2"]), params["b2"])
                return softmax_cross_entropy(logits, y)
            return f

        base = {"w1": Tensor(w1), "b1": Tensor(b1), "w2": Tensor(w2), "b2": Tensor(b2)}
        for pack_name, value in (("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)):
            assert grad_check(loss_wrt(base), value) < 1e-4

    def test_backward_idempotent_with_zeroed_grads(self):
        rng = np.random.default_rng(17)
        tape = Tape()
        p = Tensor(rng.uniform(-1, 1, (3, 3)))
        tape.watch(p)
        loss = mse(tanh(matmul(p, p.array.copy())), np.zeros((3, 3)))
        tape.backward(loss)
        first = p.grad.copy()
        p.zero_grad()
        tape.backward(loss)
        np.testing.assert_array_equal(p.grad, first)

    def test_backward_accumulates_without_zeroing(self):
        tape = Tape()
        p = Tensor([2.0])
        tape.watch(p)
        loss = sum_all(p)
        tape.backward(loss)
        tape.backward(loss)
        np.testing.assert_array_equal(p.grad, [2.0])

    def test_free_function_wrapper(self):
        tape = Tape()
        p = Tensor([1.0])
        tape.watch(p)
        backward(tape, sum_all(p))
        np.testing.assert_array_equal(p.grad, [1.0])

    def test_node_ids_strictly_increase(self):
        tape = Tape()
        a = Tensor([[1.0, 2.0]])
        b = Tensor([[3.0], [4.0]])
        tape.watch(a)
        tape.watch(b)
        sum_all(matmul(a, b))
        for node in tape._nodes:
            assert all(i < node.out_id for i in node.input_ids)


class TestGradCheck:
    def test_identity_sum_is_exact(self):
        assert grad_check(sum_all, np.array([1.0, -2.0, 3.0])) < 1e-10

    def test_grl_path_is_negated_identity(self):
        x = np.array([0.3, -0.7, 1.1])
        tape = Tape()
        xt = Tensor(x.copy())
        tape.watch(xt)
        tape.backward(sum_all(grl(xt, 1.0)))
        np.testing.assert_array_equal(xt.grad, -np.ones(3))
        # analytic grad equals the flipped numeric gradient of the identity path
        h = 1e-5
        numeric_identity = np.array([
            (sum_all(Tensor(x + h * e)).item() - sum_all(Tensor(x - h * e)).item()) / (2 * h)
            for e in np.eye(3)
        ])
        np.testing.assert_allclose(xt.grad, -numeric_identity, atol=1e-9)

    def test_randomized_mlp_stack(self):
        rng = np.random.default_rng(18)
        w1 = rng.uniform(-1, 1, (4, 6))
        w2 = rng.uniform(-1, 1, (6, 3))
        y = rng.integers(0, 3, 5)

        def f(t):
            h = tanh(matmul(t, w1))
            return softmax_cross_entropy(matmul(h, w2), y)

        for trial in range(3):
            assert grad_check(f, rng.uniform(-2, 2, (5, 4))) < 1e-4

    def test_bad_h_rejected(self):
        with pytest.raises(ValueError):
            grad_check(sum_all, np.zeros(2), h=0.0)


class TestCombinators:
    def test_add_and_scale(self):
        tape = Tape()
        p = Tensor([1.0, 2.0])
        tape.watch(p)
        loss = add(scale(sum_all(p), 3.0), sum_all(p))
        tape.backward(loss)
        np.testing.assert_array_equal(p.grad, [4.0, 4.0])

    def test_vstack_and_slice_gradients(self):
        rng = np.random.default_rng(19)
        b = rng.uniform(-1, 1, (2, 3))
        for trial in range(5):
            a0 = rng.uniform(-2, 2, (3, 3))
            err = grad_check(lambda t: sum_all(tanh(slice_rows(vstack(t, b), 1, 4))), a0)
            assert err < 1e-4

    def test_slice_rows_out_of_range(self):
        with pytest.raises(ValueError):
            slice_rows(np.zeros((2, 2)), 0, 3)


class TestLambdaSchedule:
    def test_endpoints(self):
        assert grl_lambda_schedule(0.0) == pytest.approx(0.0, abs=1e-12)
        assert grl_lambda_schedule(1.0) == pytest.approx(2.0 / (1.0 + math.exp(-10.0)) - 1.0)

    def test_monotone(self):
        ps = np.linspace(0, 1, 11)
        vals = [grl_lambda_schedule(p) for p in ps]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
