import numpy as np
import pytest

from revealtoy import tensor as T
from revealtoy.gradcheck import check_gradients, finite_difference, max_rel_error
from revealtoy.tensor import BLOCKED, Tensor


def randt(rng, *shape, grad=True):
    return Tensor(rng.standard_normal(shape), requires_grad=grad)


class TestMatmul:
    def test_identity(self):
        b = np.array([[2.0, 3.0], [4.0, 5.0]])
        eye = Tensor(np.eye(2))
        out = T.matmul(eye, Tensor(b))
        np.testing.assert_array_equal(out.data, b)

    def test_hand_arithmetic(self):
        out = T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        assert out.data.tolist() == [[11.0]]

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_gradients_vs_finite_differences(self):
        rng = np.random.default_rng(0)
        a = randt(rng, 5, 7)
        b = randt(rng, 7, 3)
        w = Tensor(rng.standard_normal((5, 3)))

        def f():
            return T.tsum(T.mul(T.matmul(a, b), w))

        errs = check_gradients(f, {"a": a, "b": b}, tol=1e-4)
        assert max(errs.values()) < 1e-4

    def test_batched_gradients(self):
        rng = np.random.default_rng(1)
        a = randt(rng, 2, 3, 4)
        b = randt(rng, 2, 4, 5)

        def f():
            return T.tsum(T.silu(T.matmul(a, b)))

        check_gradients(f, {"a": a, "b": b}, tol=1e-4)


class TestSoftmaxMasked:
    def test_uniform(self):
        out = T.softmax_masked(Tensor([0.0, 0.0, 0.0]), Tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)

    def test_single_survivor(self):
        out = T.softmax_masked(Tensor([5.0, 1.0]), Tensor([0.0, BLOCKED]))
        np.testing.assert_array_equal(out.data, [1.0, 0.0])

    def test_blocked_exactly_zero(self):
        rng = np.random.default_rng(2)
        logits = Tensor(rng.standard_normal((3, 6)))
        bias = np.zeros((3, 6))
        bias[:, 4:] = BLOCKED
        out = T.softmax_masked(logits, Tensor(bias))
        assert np.all(out.data[:, 4:] == 0.0)
        np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-6)

    def test_fully_blocked_row_raises(self):
        with pytest.raises(ValueError):
            T.softmax_masked(Tensor([1.0, 2.0]), Tensor([BLOCKED, BLOCKED]))

    def test_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(3)
        logits = randt(rng, 4, 8)
        bias = np.zeros((4, 8))
        bias[1, 3] = BLOCKED
        bias[2, :5] = BLOCKED
        bias_t = Tensor(bias)
        w = Tensor(rng.standard_normal((4, 8)))

        def f():
            return T.tsum(T.mul(T.softmax_masked(logits, bias_t), w))

        errs = check_gradients(f, {"logits": logits}, tol=1e-4)
        assert errs["logits"] < 1e-4


class TestCoreOps:
    def test_layer_norm_standardizes(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.standard_normal((5, 32)))
        y = T.layer_norm(x, eps=1e-10).data
        np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-9)
        np.testing.assert_allclose(y.var(axis=-1), 1.0, atol=1e-6)

    def test_sum_of_squares_gradient(self):
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
        T.tsum(T.mul(x, x)).backward()
        np.testing.assert_allclose(x.grad, 2 * x.data)

    def test_concat_slice_roundtrip(self):
        rng = np.random.default_rng(5)
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((2, 4))
        cat = T.concat([Tensor(a), Tensor(b)], axis=0)
        np.testing.assert_array_equal(cat.data[:3], a)
        np.testing.assert_array_equal(T.take(cat, (slice(3, 5),)).data, b)

    def test_elementwise_and_broadcast_gradients(self):
        rng = np.random.default_rng(6)
        x = randt(rng, 4, 6)
        v = randt(rng, 6)  # trailing-vector broadcast

        def f():
            y = T.add(T.mul(x, v), v)
            return T.tmean(T.mul(y, y))

        check_gradients(f, {"x": x, "v": v}, tol=1e-4)

    def test_unary_gradients(self):
        rng = np.random.default_rng(7)
        x = Tensor(rng.uniform(0.1, 2.0, (3, 5)), requires_grad=True)

        def f():
            y = T.add(T.log(x), T.sqrt(x))
            y = T.add(y, T.silu(x))
            y = T.add(y, T.power(x, 1.5))
            return T.tsum(T.mul(y, y))

        check_gradients(f, {"x": x}, tol=1e-4)

    def test_abs_clamp_gradients(self):
        rng = np.random.default_rng(8)
        x = Tensor(rng.uniform(-2, 2, 20), requires_grad=True)

        def f():
            return T.tsum(T.absolute(T.clamp(x, -1.0, 1.0)))

        check_gradients(f, {"x": x}, tol=1e-4)

    def test_reshape_transpose_gather_scatter(self):
        rng = np.random.default_rng(9)
        x = randt(rng, 6, 4)
        idx = np.array([4, 0, 2])

        def f():
            r = T.transpose(T.reshape(x, (2, 3, 4)), (1, 0, 2))
            g = T.gather_rows(x, idx)
            s = T.scatter_rows(g, idx, 6)
            return T.tsum(T.mul(r, r)) + T.tsum(T.mul(s, x))

        check_gradients(f, {"x": x}, tol=1e-4)

    def test_rotate_pairs_is_rotation(self):
        rng = np.random.default_rng(10)
        x = randt(rng, 3, 8)
        r = T.rotate_pairs(x)
        np.testing.assert_allclose(
            np.linalg.norm(r.data, axis=-1), np.linalg.norm(x.data, axis=-1))
        check_gradients(lambda: T.tsum(T.mul(T.rotate_pairs(x), T.rotate_pairs(x))),
                        {"x": x}, tol=1e-4)

    def test_mean_axis_gradients(self):
        rng = np.random.default_rng(11)
        x = randt(rng, 4, 5)

        def f():
            m = T.tmean(x, axis=-1, keepdims=True)
            return T.tsum(T.mul(T.sub(x, m), T.sub(x, m)))

        check_gradients(f, {"x": x}, tol=1e-4)


class TestBackward:
    def test_root_gradient_is_one(self):
        x = Tensor(3.0, requires_grad=True)
        x.backward()
        assert x.grad == 1.0

    def test_two_paths_accumulate(self):
        x = Tensor(2.0, requires_grad=True)
        y = T.add(T.mul(x, x), T.mul(x, 3.0))  # x^2 + 3x -> 2x + 3 = 7
        y.backward()
        assert y.item() == 10.0
        assert x.grad == 7.0

    def test_non_scalar_root_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ValueError):
            x.backward()

    def test_backward_deterministic(self):
        rng = np.random.default_rng(12)
        x = randt(rng, 8, 8)
        w = randt(rng, 8, 8)
        loss = T.tsum(T.silu(T.matmul(T.layer_norm(x), w)))
        loss.backward()
        g1 = (x.grad.copy(), w.grad.copy())
        loss.backward()
        assert np.array_equal(g1[0], x.grad) and np.array_equal(g1[1], w.grad)

    def test_constants_stay_out_of_graph(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        c = Tensor([5.0, 6.0])
        y = T.tsum(T.mul(x, c))
        y.backward()
        assert c.grad is None or not c.requires_grad
        np.testing.assert_allclose(x.grad, c.data)


class TestFiniteDifferenceHarness:
    def test_known_quadratic(self):
        x = Tensor(np.array([1.0, -0.5]), requires_grad=True)
        num = finite_difference(lambda: T.tsum(T.mul(x, x)), x)
        np.testing.assert_allclose(num, 2 * x.data, atol=1e-6)

    def test_rel_error_measure(self):
        a = np.array([1.0, 2.0])
        assert max_rel_error(a, a) == 0.0
        assert max_rel_error(a, a * 1.001) > 1e-4
