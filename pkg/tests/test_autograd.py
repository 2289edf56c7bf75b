"""Central-difference checks for every autodiff primitive."""

import numpy as np
import pytest

from inpaint_forge import autograd as ag
from inpaint_forge.imaging import RegionSpec


def numeric_grad(fn, args, wrt, h=1e-6):
    a = args[wrt].astype(np.float64)
    g = np.zeros_like(a)
    it = np.nditer(a, flags=["multi_index"])
    for _ in it:
        ix = it.multi_index
        up = [x.astype(np.float64) for x in args]
        dn = [x.astype(np.float64) for x in args]
        up[wrt] = up[wrt].copy()
        dn[wrt] = dn[wrt].copy()
        up[wrt][ix] += h
        dn[wrt][ix] -= h
        fp = float(fn(*[ag.Tensor(x) for x in up]).data)
        fm = float(fn(*[ag.Tensor(x) for x in dn]).data)
        g[ix] = (fp - fm) / (2 * h)
    return g


def check(fn, args, wrt, tol=1e-6):
    ts = [ag.Tensor(a.astype(np.float64), requires_grad=True) for a in args]
    out = fn(*ts)
    out.backward()
    got = ts[wrt].grad
    want = numeric_grad(fn, args, wrt)
    scale = max(1.0, np.abs(want).max())
    assert got is not None
    assert np.abs(got - want).max() / scale < tol, f"grad mismatch wrt arg {wrt}"


RNG = np.random.default_rng(42)


def test_elementwise_chain():
    x = RNG.normal(size=(3, 4))
    check(lambda x: ag.tsum(ag.mul(ag.tanh(x), ag.sigmoid(x))), [x], 0)
    check(lambda x: ag.tmean(ag.power(ag.add(x, 2.0), 3.0)), [x], 0)
    check(lambda x: ag.tsum(ag.absolute(x)), [x + 0.1], 0)


def test_broadcast_arithmetic():
    a = RNG.normal(size=(2, 3, 4))
    c = RNG.normal(size=(1, 3, 1))
    fn = lambda a, c: ag.tsum(ag.mul(ag.sub(a, c), c))
    check(fn, [a, c], 0)
    check(fn, [a, c], 1)


def test_log_clip():
    s = RNG.uniform(0.3, 0.7, size=(2, 5))
    check(lambda s: ag.tmean(ag.mul(ag.log(ag.clip(s, 1e-7, 1 - 1e-7)), -1.0)), [s], 0)


def test_clip_blocks_gradient_outside_bounds():
    x = ag.Tensor(np.array([0.0, 0.5, 1.0]), requires_grad=True)
    ag.tsum(ag.clip(x, 0.2, 0.8)).backward()
    assert np.array_equal(x.grad, [0.0, 1.0, 0.0])


def test_relu_family():
    x = RNG.normal(size=(4, 4))
    check(lambda x: ag.tsum(ag.relu(x)), [x], 0)
    check(lambda x: ag.tsum(ag.leaky_relu(x, 0.2)), [x], 0)


def test_concat_reshape():
    a = RNG.normal(size=(2, 2, 3))
    check(lambda a: ag.tsum(ag.power(ag.concat([a, a], axis=1), 2.0)), [a], 0)
    check(lambda a: ag.tmean(ag.reshape(ag.mul(a, a), (12,))), [a], 0)


@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (1, 1)])
def test_conv2d_grads(stride, padding):
    x = RNG.normal(size=(2, 3, 6, 6))
    w = RNG.normal(size=(4, 3, 3, 3))
    b = RNG.normal(size=(4,))
    fn = lambda x, w, b: ag.tsum(ag.tanh(ag.conv2d(x, w, b, stride, padding)))
    for wrt in range(3):
        check(fn, [x, w, b], wrt, tol=1e-5)


def test_conv_transpose2d_grads():
    x = RNG.normal(size=(2, 4, 3, 3))
    w = RNG.normal(size=(4, 3, 4, 4))
    b = RNG.normal(size=(3,))
    fn = lambda x, w, b: ag.tsum(ag.sigmoid(ag.conv_transpose2d(x, w, b, 2, 1)))
    for wrt in range(3):
        check(fn, [x, w, b], wrt, tol=1e-5)


def test_conv_shape_validation():
    x = ag.Tensor(np.zeros((1, 3, 4, 4)))
    w = ag.Tensor(np.zeros((2, 5, 3, 3)))
    with pytest.raises(ValueError):
        ag.conv2d(x, w)


def test_batchnorm_train_grads():
    x = RNG.normal(size=(3, 2, 4, 4))
    g = RNG.normal(1, 0.1, size=(2,))
    b = RNG.normal(size=(2,))
    fn = lambda x, g, b: ag.tsum(ag.relu(ag.batchnorm_train(x, g, b)[0]))
    for wrt in range(3):
        check(fn, [x, g, b], wrt, tol=1e-5)


def test_batchnorm_eval_grads():
    x = RNG.normal(size=(2, 2, 3, 3))
    g = RNG.normal(1, 0.1, size=(2,))
    b = RNG.normal(size=(2,))
    rm = RNG.normal(size=(2,))
    rv = RNG.uniform(0.5, 1.5, size=(2,))
    fn = lambda x, g, b: ag.tsum(ag.tanh(ag.batchnorm_eval(x, g, b, rm, rv)))
    for wrt in range(3):
        check(fn, [x, g, b], wrt, tol=1e-5)


def test_maxpool_grads_route_to_argmax():
    x = RNG.normal(size=(2, 2, 4, 4))
    check(lambda x: ag.tmean(ag.maxpool2x2(x)), [x], 0)
    t = ag.Tensor(
        np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), requires_grad=True
    )
    ag.tsum(ag.maxpool2x2(t)).backward()
    assert np.array_equal(t.grad, [[[[0, 0], [0, 1]]]])


def test_gram_grads():
    x = RNG.normal(size=(2, 3, 2, 4))
    check(lambda x: ag.tsum(ag.gram(x)), [x], 0)


def test_region_op_grads():
    regions = [RegionSpec(1, 2, 3), RegionSpec(0, 0, 3)]
    x = RNG.normal(size=(2, 1, 6, 6))
    gen = RNG.normal(size=(2, 1, 6, 6))
    check(lambda x: ag.tsum(ag.power(ag.extract_regions(x, regions), 2.0)), [x], 0)
    fn = lambda c, g: ag.tsum(ag.power(ag.compose_regions(c, g, regions), 2.0))
    check(fn, [x, gen], 0)
    check(fn, [x, gen], 1)


def test_compose_preserves_context_values():
    regions = [RegionSpec(1, 1, 2)]
    ctx = ag.Tensor(np.arange(16.0).reshape(1, 1, 4, 4))
    gen = ag.Tensor(np.full((1, 1, 4, 4), -5.0))
    out = ag.compose_regions(ctx, gen, regions).data
    assert np.array_equal(out[0, 0, 1:3, 1:3], np.full((2, 2), -5.0))
    mask = np.ones((4, 4), bool)
    mask[1:3, 1:3] = False
    assert np.array_equal(out[0, 0][mask], ctx.data[0, 0][mask])


def test_grad_accumulates_on_reuse():
    x = ag.Tensor(np.array([3.0]), requires_grad=True)
    ag.tsum(ag.add(x, x)).backward()
    assert np.array_equal(x.grad, [2.0])


def test_no_grad_and_detach():
    x = ag.Tensor(np.ones((2, 2)), requires_grad=True)
    with ag.no_grad():
        y = ag.mul(x, 3.0)
    assert not y.requires_grad and y._backward is None
    d = ag.mul(x, 2.0).detach()
    z = ag.tsum(ag.mul(d, 5.0))
    assert not z.requires_grad


def test_frozen_weight_skips_grad():
    x = ag.Tensor(RNG.normal(size=(1, 2, 4, 4)), requires_grad=True)
    w = ag.Tensor(RNG.normal(size=(3, 2, 3, 3)), requires_grad=False)
    ag.tsum(ag.conv2d(x, w, stride=1, padding=1)).backward()
    assert w.grad is None and x.grad is not None


def test_backward_requires_scalar():
    x = ag.Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        ag.mul(x, 2.0).backward()


def test_operator_sugar():
    x = ag.Tensor(np.array([2.0]), requires_grad=True)
    y = ((x + 1.0) * 3.0 - 2.0) / 2.0  # (3*3-2)/2 = 3.5
    assert np.allclose(y.data, [3.5])
    z = -x + x**2.0
    assert np.allclose(z.data, [2.0])
