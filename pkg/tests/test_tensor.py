import numpy as np
import pytest

from camfield.tensor import Tensor, concat, elementwise, no_grad

from helpers import gradcheck


def t(data, grad=False, dtype=np.float32):
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=grad)


class TestElementwise:
    def test_relu_definition(self):
        out = t([-1.0, 0.0, 2.0]).relu()
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_scalar_broadcast_mul(self):
        out = t([1.0, 2.0, 3.0]) * t([2.0])
        np.testing.assert_array_equal(out.data, [2.0, 4.0, 6.0])

    def test_product_rule(self):
        a = t(3.0, grad=True)
        b = t(5.0, grad=True)
        (a * b).backward()
        assert a.grad == 5.0
        assert b.grad == 3.0

    def test_division_backward_rule(self):
        a = t(6.0, grad=True)
        b = t(2.0, grad=True)
        (a / b).backward()
        assert a.grad == pytest.approx(0.5)
        assert b.grad == pytest.approx(-6.0 / 4.0)  # -a / b^2

    def test_div_by_zero_propagates_nonfinite(self):
        out = t([1.0, -1.0]) / t([0.0, 0.0])
        assert not out.all_finite()

    def test_shape_mismatch_reports_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(3,\).*\(2,\)"):
            t([1.0, 2.0, 3.0]) + t([1.0, 2.0])

    def test_sigmoid_value_and_grad(self):
        x = t(0.0, grad=True)
        y = x.sigmoid()
        assert y.data == pytest.approx(0.5)
        y.backward()
        assert x.grad == pytest.approx(0.25)

    def test_affine(self):
        out = t([1.0, 2.0]).affine(3.0, -1.0)
        np.testing.assert_allclose(out.data, [2.0, 5.0])

    def test_dispatch_table(self):
        out = elementwise("add", t([1.0]), t([2.0]))
        assert out.data[0] == 3.0
        out = elementwise("scalar-affine", t([1.0]), (2.0, 1.0))
        assert out.data[0] == 3.0
        with pytest.raises(ValueError):
            elementwise("gelu", t([1.0]))


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        out = t(np.eye(2)) @ t(a)
        np.testing.assert_array_equal(out.data, a)

    def test_dot_product(self):
        out = t([[1.0, 2.0]]) @ t([[3.0], [4.0]])
        np.testing.assert_array_equal(out.data, [[11.0]])

    def test_inner_dim_mismatch(self):
        with pytest.raises(ValueError, match="inner dimensions"):
            t(np.ones((2, 3))) @ t(np.ones((2, 3)))

    def test_grad_of_sum_equals_column_sums(self):
        # d sum(A@B) / dA = row-broadcast of B's column sums; checked against
        # the finite-difference oracle at 1e-4 step.
        rng = np.random.default_rng(0)
        a = rng.uniform(-1, 1, (3, 4))
        b = rng.uniform(-1, 1, (4, 2))
        at = t(a, grad=True, dtype=np.float64)
        bt = t(b, dtype=np.float64)
        (at @ bt).sum().backward()
        expected = np.broadcast_to(b.sum(axis=1), (3, 4))
        np.testing.assert_allclose(at.grad, expected, rtol=1e-12)
        gradcheck(lambda ts: (ts[0] @ bt).sum(), [a], dtype=np.float64, step=1e-4, tol=1e-6)

    def test_batched_left_operand(self):
        x = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
        w = np.ones((4, 5), dtype=np.float32)
        out = t(x) @ t(w)
        assert out.shape == (2, 3, 5)
        np.testing.assert_allclose(out.data, x @ w)


class TestReduce:
    def test_mean_all(self):
        assert t([1.0, 2.0, 3.0]).mean().item() == pytest.approx(2.0)

    def test_population_variance(self):
        # hand computation: mean 2, squared deviations (1, 0, 1), divide by 3
        assert t([1.0, 2.0, 3.0]).var().item() == pytest.approx(2.0 / 3.0)

    def test_sum_axis0(self):
        out = t([[1.0, 2.0], [3.0, 4.0]]).sum(axis=0)
        np.testing.assert_array_equal(out.data, [4.0, 6.0])

    def test_keepdims(self):
        out = t([[1.0, 2.0], [3.0, 4.0]]).mean(axis=1, keepdims=True)
        assert out.shape == (2, 1)

    def test_empty_axis_rejected(self):
        with pytest.raises(ValueError, match="empty axis"):
            t(np.zeros((3, 0))).mean(axis=1)

    def test_variance_backward_chain(self):
        x = np.array([0.5, -1.0, 2.0, 0.3])
        gradcheck(lambda ts: ts[0].var(), [x], dtype=np.float64, step=1e-5, tol=1e-6)
        xt = t(x, grad=True, dtype=np.float64)
        xt.var().backward()
        np.testing.assert_allclose(xt.grad, 2.0 * (x - x.mean()) / 4.0, rtol=1e-12)


class TestBackward:
    def test_square_at_three(self):
        x = t(3.0, grad=True)
        x.square().backward()
        assert x.grad == pytest.approx(6.0)

    def test_sin_at_zero(self):
        x = t(0.0, grad=True)
        x.sin().backward()
        assert x.grad == pytest.approx(1.0)

    def test_non_scalar_root_rejected(self):
        with pytest.raises(ValueError, match="scalar root"):
            t([1.0, 2.0], grad=True).backward()

    def test_fanout_accumulates(self):
        x = t(2.0, grad=True)
        y = x * x + x  # dy/dx = 2x + 1 = 5
        y.backward()
        assert x.grad == pytest.approx(5.0)

    def test_linearity_of_backward(self):
        x0 = np.array([0.4, -0.8, 1.3])
        alpha, beta = 1.7, -0.6

        def run(fn):
            xt = t(x0, grad=True, dtype=np.float64)
            fn(xt).backward()
            return xt.grad

        gf = run(lambda x: x.sin().sum())
        gg = run(lambda x: x.square().sum())
        gmix = run(lambda x: x.sin().sum() * alpha + x.square().sum() * beta)
        np.testing.assert_allclose(gmix, alpha * gf + beta * gg, rtol=1e-10)

    def test_broadcast_gradient_shape(self):
        a = t(np.ones((3, 4)), grad=True)
        b = t(np.ones((1, 4)), grad=True)
        c = t(np.ones(()), grad=True)
        ((a * b + c).sum()).backward()
        assert a.grad.shape == (3, 4)
        assert b.grad.shape == (1, 4)
        assert c.grad.shape == ()
        np.testing.assert_array_equal(b.grad, np.full((1, 4), 3.0))
        assert c.grad == 12.0

    def test_no_grad_suppresses_graph(self):
        x = t(1.0, grad=True)
        with no_grad():
            y = x * 2.0
        assert not y.requires_grad


class TestCompositeGradcheck:
    def test_random_graph_single_precision(self):
        rng = np.random.default_rng(42)
        x = rng.uniform(-2, 2, (3, 4))
        w = rng.uniform(-1, 1, (4, 3))

        def build(ts):
            h = (ts[0] @ ts[1]).sigmoid()
            return (h * h.cos() + ts[0].mean()).var() + h.sum()

        gradcheck(build, [x, w], dtype=np.float32, step=1e-3, tol=1e-3)

    def test_random_graph_double_precision(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-2, 2, (4, 3))
        w = rng.uniform(-1, 1, (3, 2))

        def build(ts):
            h = (ts[0] @ ts[1]).sin()
            g = (h.square() + 1.0).sqrt()
            return (g / (h.sigmoid() + 0.5)).mean()

        gradcheck(build, [x, w], dtype=np.float64, step=1e-5, tol=1e-6)

    def test_concat_backward(self):
        a = np.array([1.0, 2.0])
        b = np.array([3.0])
        gradcheck(
            lambda ts: (concat(ts, axis=0).square()).sum(),
            [a, b],
            dtype=np.float64,
            step=1e-5,
            tol=1e-6,
        )

    def test_transpose_and_reshape(self):
        x = np.arange(6.0).reshape(2, 3)
        gradcheck(
            lambda ts: (ts[0].transpose().reshape(6).sin()).sum(),
            [x],
            dtype=np.float64,
            step=1e-5,
            tol=1e-6,
        )

    def test_standardize_matches_composed_form(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(-2, 2, (5, 7))
        eps = 1e-5
        xt = t(x, dtype=np.float64)
        fused = xt.standardize(1, eps)
        mu = xt.mean(axis=1, keepdims=True)
        var = xt.var(axis=1, keepdims=True)
        composed = (xt - mu) / (var + eps).sqrt()
        np.testing.assert_allclose(fused.data, composed.data, rtol=1e-12)

    def test_standardize_gradient(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(-2, 2, (4, 5))
        gradcheck(
            lambda ts: (ts[0].standardize(1, 1e-5) * ts[0].cos()).sum(),
            [x],
            dtype=np.float64,
            step=1e-5,
            tol=1e-6,
        )
