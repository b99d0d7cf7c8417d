import numpy as np
import pytest

from livemix import autodiff as ad
from livemix.autodiff import Tensor

from conftest import numerical_grad


def check_grad(build, *shapes, seed=0, h=1e-6, rtol=1e-6, atol=1e-8):
    """Compare analytic gradients of a scalar-valued op against central FD."""
    rng = np.random.default_rng(seed)
    values = [rng.standard_normal(s) if s else np.asarray(rng.standard_normal())
              for s in shapes]
    params = [ad.parameter(v.copy()) for v in values]
    loss = build(*params)
    loss.backward()
    for i, p in enumerate(params):
        def f(x, i=i):
            args = [Tensor(v) for v in values]
            args[i] = Tensor(x)
            with ad.no_grad():
                return build(*args).item()
        numeric = numerical_grad(f, values[i], h=h)
        analytic = p.grad if p.grad is not None else np.zeros_like(values[i])
        assert np.allclose(analytic, numeric, rtol=rtol, atol=atol), (
            f"gradient mismatch for input {i}: {analytic} vs {numeric}"
        )


def scalarize(t):
    return ad.tsum(ad.mul(t, t))


class TestElementwiseGrads:
    def test_add(self):
        check_grad(lambda a, b: scalarize(ad.add(a, b)), (3, 4), (3, 4))

    def test_add_broadcast_bias(self):
        check_grad(lambda a, b: scalarize(ad.add(a, b)), (3, 4), (4,))

    def test_sub(self):
        check_grad(lambda a, b: scalarize(ad.sub(a, b)), (2, 5), (2, 5))

    def test_mul_broadcast(self):
        check_grad(lambda a, b: scalarize(ad.mul(a, b)), (3, 4), (3, 1))

    def test_div(self):
        check_grad(lambda a, b: scalarize(ad.div(a, ad.add(ad.mul(b, b), Tensor(1.0)))), (4,), (4,))

    def test_neg(self):
        check_grad(lambda a: scalarize(ad.neg(a)), (5,))

    def test_power(self):
        check_grad(lambda a: ad.tsum(ad.power(ad.add(ad.mul(a, a), Tensor(0.5)), 1.5)), (4,))

    def test_sqrt(self):
        check_grad(lambda a: ad.tsum(ad.sqrt(ad.add(ad.mul(a, a), Tensor(0.1)))), (6,))

    def test_exp(self):
        check_grad(lambda a: ad.tsum(ad.exp(a)), (4,))

    def test_log(self):
        check_grad(lambda a: ad.tsum(ad.log(ad.add(ad.mul(a, a), Tensor(0.5)))), (4,))

    def test_tanh(self):
        check_grad(lambda a: ad.tsum(ad.tanh(a)), (7,))

    def test_sigmoid(self):
        check_grad(lambda a: ad.tsum(ad.sigmoid(a)), (7,))

    def test_relu(self):
        check_grad(lambda a: scalarize(ad.relu(a)), (9,), seed=3)

    def test_prelu(self):
        check_grad(lambda a, s: scalarize(ad.prelu(a, s)), (9,), (), seed=4)

    def test_abs(self):
        check_grad(lambda a: ad.tsum(ad.absolute(a)), (9,), seed=5)


class TestReductionAndShapeGrads:
    def test_sum_all(self):
        check_grad(lambda a: ad.mul(ad.tsum(a), ad.tsum(a)), (3, 4))

    def test_sum_axis_keepdims(self):
        check_grad(lambda a: scalarize(ad.tsum(a, axis=1, keepdims=True)), (3, 4))

    def test_mean_axis(self):
        check_grad(lambda a: scalarize(ad.tmean(a, axis=0)), (3, 4))

    def test_mean_axis_tuple(self):
        check_grad(lambda a: scalarize(ad.tmean(a, axis=(1, 2))), (2, 3, 4))

    def test_reshape(self):
        check_grad(lambda a: scalarize(ad.reshape(a, (4, 3))), (3, 4))

    def test_transpose(self):
        check_grad(lambda a: scalarize(ad.transpose(a)), (3, 4))

    def test_take_slice(self):
        check_grad(lambda a: scalarize(a[:, 1:3]), (3, 4))

    def test_concat(self):
        check_grad(lambda a, b: scalarize(ad.concat([a, b], axis=1)), (2, 3), (2, 2))

    def test_broadcast_to(self):
        check_grad(lambda a: scalarize(ad.broadcast_to(a, (4, 3))), (1, 3))

    def test_matmul(self):
        check_grad(lambda a, b: scalarize(ad.matmul(a, b)), (3, 4), (4, 2))

    def test_softmax(self):
        check_grad(lambda a: scalarize(ad.softmax(a, axis=-1)), (3, 5))

    def test_layer_norm(self):
        check_grad(lambda x, g, b: scalarize(ad.layer_norm(x, g, b)), (3, 8), (8,), (8,))

    def test_frobenius_norm(self):
        check_grad(lambda a: ad.frobenius_norm(a), (3, 4), seed=7)


class TestStructuredGrads:
    def test_im2col(self):
        check_grad(lambda a: scalarize(ad.im2col(a, 3, 3)), (2, 6, 5))

    def test_avg_pool2d_even(self):
        check_grad(lambda a: scalarize(ad.avg_pool2d(a)), (2, 4, 6))

    def test_avg_pool2d_odd_crops(self):
        check_grad(lambda a: scalarize(ad.avg_pool2d(a)), (1, 5, 7))

    def test_conv_like_pipeline(self):
        def build(x, w, b):
            cols = ad.im2col(x, 3, 3)
            flat = ad.add(ad.matmul(cols, ad.transpose(ad.reshape(w, (4, -1)))), b)
            return scalarize(ad.relu(flat))

        check_grad(build, (2, 6, 6), (4, 2, 3, 3), (4,), seed=9)


class TestSubgradientConvention:
    def test_relu_at_zero(self):
        x = ad.parameter(np.array([0.0, -1.0, 2.0]))
        ad.tsum(ad.relu(x)).backward()
        assert np.array_equal(x.grad, [0.0, 0.0, 1.0])

    def test_prelu_at_zero(self):
        x = ad.parameter(np.array([0.0, -2.0, 3.0]))
        ad.tsum(ad.prelu(x, Tensor(0.25))).backward()
        assert np.array_equal(x.grad, [0.0, 0.25, 1.0])

    def test_abs_at_zero(self):
        x = ad.parameter(np.array([0.0, -1.5, 1.5]))
        ad.tsum(ad.absolute(x)).backward()
        assert np.array_equal(x.grad, [0.0, -1.0, 1.0])

    def test_sqrt_at_zero(self):
        x = ad.parameter(np.zeros(3))
        ad.tsum(ad.sqrt(x)).backward()
        assert np.array_equal(x.grad, np.zeros(3))


class TestEngine:
    def test_no_grad_records_nothing(self):
        x = ad.parameter(np.ones(4))
        with ad.no_grad():
            y = ad.mul(x, x)
        assert y._parents == ()
        assert not y.requires_grad

    def test_constants_record_nothing(self):
        y = ad.mul(Tensor(np.ones(3)), Tensor(np.ones(3)))
        assert y._parents == ()

    def test_shared_node_diamond(self):
        x = ad.parameter(np.array(3.0))
        y = ad.add(ad.mul(x, x), x)  # d/dx (x^2 + x) = 2x + 1
        y.backward()
        assert x.grad == pytest.approx(7.0)

    def test_gradient_accumulation_across_backwards(self):
        x = ad.parameter(np.array(2.0))
        ad.mul(x, x).backward()
        ad.mul(x, x).backward()
        assert x.grad == pytest.approx(8.0)
        x.zero_grad()
        assert x.grad is None

    def test_backward_requires_scalar(self):
        x = ad.parameter(np.ones(3))
        with pytest.raises(ValueError):
            ad.mul(x, x).backward()

    def test_deep_chain_no_recursion_limit(self):
        x = ad.parameter(np.array(1.0))
        y = x
        for _ in range(5000):
            y = ad.add(y, Tensor(0.0))
        y.backward()
        assert x.grad == pytest.approx(1.0)

    def test_detach_cuts_history(self):
        x = ad.parameter(np.array(2.0))
        y = ad.mul(x, x).detach()
        z = ad.mul(y, y)
        assert not z.requires_grad

    def test_operator_sugar(self):
        x = ad.parameter(np.array(2.0))
        y = (x * 3.0 + 1.0 - 0.5) / 2.0
        y.backward()
        assert y.item() == pytest.approx(3.25)
        assert x.grad == pytest.approx(1.5)
