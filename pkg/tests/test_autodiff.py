"""Gradient and semantics checks for the reverse-mode engine."""

import numpy as np
import pytest

from modrec import autodiff as ad
from modrec.autodiff import Tensor, backward, grad_check


@pytest.fixture(autouse=True)
def float64_mode():
    previous = ad.set_default_dtype(np.float64)
    yield
    ad.set_default_dtype(previous)


def _rand(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def test_relu_values():
    out = ad.relu(Tensor([-1.0, 2.0]))
    assert np.array_equal(out.data, [0.0, 2.0])


def test_softmax_symmetry():
    out = ad.softmax(Tensor([0.0, 0.0, 0.0]))
    assert np.allclose(out.data, [1 / 3, 1 / 3, 1 / 3])


def test_softmax_rows_normalized():
    rng = np.random.default_rng(7)
    out = ad.softmax(Tensor(rng.standard_normal((6, 9)) * 5), axis=-1)
    assert np.all(out.data >= 0)
    assert np.allclose(out.data.sum(axis=-1), 1.0, atol=1e-6)


def test_conv1d_length_formula():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((2, 128, 3)))
    w = Tensor(rng.standard_normal((4, 3, 5)))
    out = ad.conv1d(x, w, stride=2, padding=1)
    assert out.shape == (2, 64, 5)


def test_conv1d_identity_kernel():
    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal((3, 10, 4)))
    w = Tensor(np.eye(4)[None, :, :])  # kernel 1, weight identity
    b = Tensor(np.zeros(4))
    out = ad.conv1d(x, w, b, stride=1, padding=0)
    assert np.allclose(out.data, x.data)


def test_backward_sum_gives_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    backward(x.sum())
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_backward_elementwise_product():
    rng = np.random.default_rng(2)
    x = _rand(rng, 4, 5)
    y = _rand(rng, 4, 5)
    backward((x * y).sum())
    assert np.allclose(x.grad, y.data)
    assert np.allclose(y.grad, x.data)


def test_backward_requires_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        backward(x + x)


def test_backward_twice_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    loss = x.sum()
    backward(loss)
    with pytest.raises(RuntimeError):
        backward(loss)


def test_backward_detached_graph_rejected():
    loss = Tensor(np.ones(()))  # no requires_grad anywhere
    with pytest.raises(RuntimeError):
        backward(loss.sum() if loss.requires_grad else loss)


def test_dropout_eval_and_p0_are_identity():
    x = Tensor(np.ones((4, 4)), requires_grad=True)
    assert ad.dropout(x, 0.5, train=False) is x
    assert ad.dropout(x, 0.0, train=True, rng=np.random.default_rng(0)) is x


def test_dropout_mask_determinism():
    x = Tensor(np.ones((64, 64)))
    a = ad.dropout(x, 0.3, train=True, rng=np.random.default_rng(123))
    b = ad.dropout(x, 0.3, train=True, rng=np.random.default_rng(123))
    assert np.array_equal(a.data, b.data)
    kept = a.data != 0
    assert np.allclose(a.data[kept], 1.0 / 0.7)


def test_nonfinite_output_raises():
    x = Tensor(np.array([1e308]))
    with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
        ad.mul(x, x)


def test_grad_check_quadratic_norm():
    rng = np.random.default_rng(3)
    x = _rand(rng, 7)
    report = grad_check(lambda t: (t * t).sum(), x, tol=1e-6)
    assert report.max_rel_err < 1e-6
    assert np.allclose(x.data * 0 + report.checked, 7)


SHAPES_2D = [(1, 1), (2, 3), (3, 2), (5, 5), (4, 7)]
SHAPES_3D = [(1, 2, 3), (2, 3, 4), (3, 1, 5), (2, 5, 2), (4, 4, 4)]


@pytest.mark.parametrize("shape", SHAPES_2D)
def test_grad_matmul(shape):
    rng = np.random.default_rng(hash(shape) % 2**32)
    n, m = shape
    w = Tensor(rng.standard_normal((m, n + 1)), requires_grad=True)
    x = _rand(rng, n, m)
    assert grad_check(lambda t: (ad.matmul(t, w)).sum(), x).passed
    assert grad_check(lambda t: (ad.matmul(x, t) * ad.matmul(x, t)).sum(), w).passed


@pytest.mark.parametrize("shape", SHAPES_3D)
def test_grad_batched_matmul(shape):
    rng = np.random.default_rng(sum(shape))
    b, n, m = shape
    x = _rand(rng, b, n, m)
    y = _rand(rng, b, m, n)
    assert grad_check(lambda t: ad.matmul(t, y).sum(), x).passed
    assert grad_check(lambda t: ad.matmul(x, t).sum(), y).passed


@pytest.mark.parametrize("shape", SHAPES_3D)
def test_grad_add_mul_broadcast(shape):
    rng = np.random.default_rng(sum(shape) + 1)
    x = _rand(rng, *shape)
    y = _rand(rng, shape[-1])  # broadcast over leading axes
    assert grad_check(lambda t: (ad.add(t, y) * ad.add(t, y)).sum(), x).passed
    assert grad_check(lambda t: (ad.mul(x, t)).sum(), y).passed


@pytest.mark.parametrize("shape", SHAPES_2D + SHAPES_3D[:1])
@pytest.mark.parametrize("op", [ad.relu, ad.sigmoid, ad.tanh])
def test_grad_activations(op, shape):
    rng = np.random.default_rng(len(shape))
    x = _rand(rng, *shape)
    x.data += 0.1  # keep relu away from the kink
    assert grad_check(lambda t: (op(t) * op(t)).sum(), x).passed


@pytest.mark.parametrize("shape,axis", [((3,), -1), ((2, 5), -1), ((4, 3), 0),
                                        ((2, 3, 4), -1), ((2, 3, 4), 1)])
def test_grad_softmax_and_log_softmax(shape, axis):
    rng = np.random.default_rng(sum(shape))
    x = _rand(rng, *shape)
    pick = Tensor(rng.standard_normal(shape))
    assert grad_check(lambda t: (ad.softmax(t, axis) * pick).sum(), x).passed
    assert grad_check(lambda t: (ad.log_softmax(t, axis) * pick).sum(), x).passed


def test_grad_softmax_pick_first_entry():
    rng = np.random.default_rng(11)
    x = _rand(rng, 5)
    assert grad_check(lambda t: ad.softmax(t)[0], x, tol=1e-4).passed


@pytest.mark.parametrize("shape", [(3,), (2, 4), (3, 5), (2, 3, 4), (1, 6)])
def test_grad_layer_norm(shape):
    rng = np.random.default_rng(sum(shape) + 5)
    x = _rand(rng, *shape)
    gain = Tensor(rng.standard_normal(shape[-1]) + 1.0, requires_grad=True)
    bias = Tensor(rng.standard_normal(shape[-1]), requires_grad=True)
    pick = Tensor(rng.standard_normal(shape))

    def f(t):
        return (ad.layer_norm(t, gain, bias) * pick).sum()

    assert grad_check(f, x).passed
    assert grad_check(lambda t: (ad.layer_norm(x, t, bias) * pick).sum(), gain).passed
    assert grad_check(lambda t: (ad.layer_norm(x, gain, t) * pick).sum(), bias).passed


@pytest.mark.parametrize("stride,padding,kernel,length", [
    (1, 0, 1, 6), (1, 1, 3, 8), (2, 1, 4, 16), (2, 0, 2, 10), (3, 2, 5, 12)])
def test_grad_conv1d(stride, padding, kernel, length):
    rng = np.random.default_rng(stride * 100 + kernel)
    x = _rand(rng, 2, length, 3)
    w = Tensor(rng.standard_normal((kernel, 3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal(4), requires_grad=True)

    def f(t):
        out = ad.conv1d(t, w, b, stride=stride, padding=padding)
        return (out * out).sum()

    assert grad_check(f, x).passed
    assert grad_check(lambda t: (ad.conv1d(x, t, b, stride=stride, padding=padding)).sum(), w).passed
    assert grad_check(lambda t: (ad.conv1d(x, w, t, stride=stride, padding=padding)).sum(), b).passed


@pytest.mark.parametrize("shape,axis", [((4,), None), ((2, 3), 0), ((2, 3), 1),
                                        ((2, 3, 4), 2), ((5,), 0)])
def test_grad_reductions(shape, axis):
    rng = np.random.default_rng(9)
    x = _rand(rng, *shape)
    assert grad_check(lambda t: (t.sum(axis) * t.sum(axis)).sum(), x).passed
    assert grad_check(lambda t: (t.mean(axis) * t.mean(axis)).sum(), x).passed


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_grad_concat(axis):
    rng = np.random.default_rng(axis)
    x = _rand(rng, 2, 3, 4)
    y = _rand(rng, 2, 3, 4)
    pick = Tensor(rng.standard_normal(np.concatenate([x.data, y.data], axis=axis).shape))
    assert grad_check(lambda t: (ad.concat([t, y], axis) * pick).sum(), x).passed
    assert grad_check(lambda t: (ad.concat([x, t], axis) * pick).sum(), y).passed


@pytest.mark.parametrize("axes", [None, (1, 0, 2), (2, 0, 1), (0, 2, 1), (2, 1, 0)])
def test_grad_transpose_reshape_slice(axes):
    rng = np.random.default_rng(17)
    x = _rand(rng, 2, 3, 4)
    pick = Tensor(rng.standard_normal(np.transpose(x.data, axes).shape))
    assert grad_check(lambda t: (ad.transpose(t, axes) * pick).sum(), x).passed
    assert grad_check(lambda t: (t.reshape(6, 4) * t.reshape(6, 4)).sum(), x).passed
    assert grad_check(lambda t: (t[:, 1:3, ::2] * t[:, 1:3, ::2]).sum(), x).passed
    assert grad_check(lambda t: (t[:, -1, :] * t[:, -1, :]).sum(), x).passed


def test_grad_embedding_add():
    rng = np.random.default_rng(21)
    x = _rand(rng, 2, 5, 3)
    table = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
    assert grad_check(lambda t: (ad.embedding_add(x, t) * ad.embedding_add(x, t)).sum(), table).passed
    backward(ad.embedding_add(x, table).sum())
    assert np.allclose(table.grad, 2.0 * np.ones((5, 3)))


def test_grad_scale_and_dropout_mask():
    rng = np.random.default_rng(23)
    x = _rand(rng, 3, 4)
    assert grad_check(lambda t: ad.scale(t, -2.5).sum(), x).passed

    mask_rng_state = np.random.default_rng(5)

    def f(t):
        return ad.dropout(t, 0.4, train=True, rng=np.random.default_rng(5)).sum()

    # fixed rng seed keeps the mask constant across finite-difference evals
    assert grad_check(f, x).passed
    del mask_rng_state


def test_gradient_accumulates_over_reuse():
    x = Tensor(np.array([2.0, 3.0]), requires_grad=True)
    y = x * x  # used twice below
    backward((y + y).sum())
    assert np.allclose(x.grad, 4.0 * x.data)
