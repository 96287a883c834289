"""Finite-difference gradient checks and optimizer oracles for the nn core."""

import numpy as np
import pytest

from beliefrl.nn import autodiff as ad
from beliefrl.nn.autodiff import Tensor, backward, finite_difference_check, no_grad
from beliefrl.nn.optim import ParameterSet, adam_update, clip_grad_norm


def leaf(rng, shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def scalarize(t, w):
    """Deterministic scalar readout with a fixed random weighting."""
    return ad.sum(t * Tensor(w))


@pytest.mark.parametrize(
    "name",
    ["add", "sub", "mul", "div", "exp", "log", "sqrt", "square", "tanh",
     "sigmoid", "elu", "softplus", "maximum", "minimum", "clip", "lgamma"],
)
def test_elementwise_gradients(name):
    rng = np.random.default_rng(hash(name) % 2**32)
    x = leaf(rng, (3, 4))
    y = leaf(rng, (3, 4))
    # Keep inputs away from kinks and singular points.
    if name in ("log", "sqrt", "lgamma"):
        x.data = np.abs(x.data) + 0.5
    if name == "div":
        y.data = np.abs(y.data) + 0.5
    if name in ("maximum", "minimum"):
        y.data = x.data + np.where(rng.random((3, 4)) < 0.5, 0.3, -0.3)
    if name == "elu":
        x.data = np.where(np.abs(x.data) < 0.05, 0.1, x.data)
    w = rng.standard_normal((3, 4))
    binary = {"add": ad.add, "sub": ad.sub, "mul": ad.mul, "div": ad.div,
              "maximum": ad.maximum, "minimum": ad.minimum}
    unary = {"exp": ad.exp, "log": ad.log, "sqrt": ad.sqrt, "square": ad.square,
             "tanh": ad.tanh, "sigmoid": ad.sigmoid, "elu": ad.elu,
             "softplus": ad.softplus, "lgamma": ad.lgamma}
    if name in binary:
        fn = lambda: scalarize(binary[name](x, y), w)
        params = [x, y]
    elif name == "clip":
        x.data = np.where(np.abs(np.abs(x.data) - 1.0) < 0.05, 0.5, x.data)
        fn = lambda: scalarize(ad.clip(x, -1.0, 1.0), w)
        params = [x]
    else:
        fn = lambda: scalarize(unary[name](x), w)
        params = [x]
    finite_difference_check(fn, params, eps=1e-5, rel_tol=1e-4)


def test_broadcast_gradients():
    rng = np.random.default_rng(0)
    a = leaf(rng, (3, 4))
    b = leaf(rng, (4,))
    c = leaf(rng, (3, 1))
    w = rng.standard_normal((3, 4))
    finite_difference_check(lambda: scalarize((a + b) * c, w), [a, b, c])


def test_matmul_linear_gradients():
    rng = np.random.default_rng(1)
    x = leaf(rng, (5, 3))
    w_mat = leaf(rng, (3, 4))
    b = leaf(rng, (4,))
    readout = rng.standard_normal((5, 4))
    finite_difference_check(lambda: scalarize(ad.matmul(x, w_mat) + b, readout),
                            [x, w_mat, b])
    finite_difference_check(lambda: scalarize(ad.linear(x, w_mat, b), readout),
                            [x, w_mat, b])
    # 3-D input through the fused linear
    x3 = leaf(rng, (2, 5, 3))
    readout3 = rng.standard_normal((2, 5, 4))
    finite_difference_check(lambda: scalarize(ad.linear(x3, w_mat, b), readout3),
                            [x3, w_mat, b])


def test_reduction_and_shape_gradients():
    rng = np.random.default_rng(2)
    x = leaf(rng, (3, 4))
    y = leaf(rng, (3, 2))
    w_cat = rng.standard_normal((3, 6))
    finite_difference_check(lambda: scalarize(ad.concat([x, y], axis=-1), w_cat), [x, y])
    w_nar = rng.standard_normal((3, 2))
    finite_difference_check(lambda: scalarize(ad.narrow(x, -1, 1, 2), w_nar), [x])
    finite_difference_check(lambda: ad.sum(ad.square(x)), [x])
    w_ax = rng.standard_normal((3,))
    finite_difference_check(lambda: scalarize(ad.mean(x, axis=1), w_ax), [x])
    w_rs = rng.standard_normal((12,))
    finite_difference_check(lambda: scalarize(ad.reshape(x, (12,)), w_rs), [x])
    idx = np.array([0, 3, 1])
    w_tk = rng.standard_normal((3,))
    finite_difference_check(lambda: scalarize(ad.take_rows(x, idx), w_tk), [x])


def test_layer_norm_gradient_and_constant_input():
    rng = np.random.default_rng(3)
    x = leaf(rng, (4, 6))
    gain = leaf(rng, (6,))
    bias = leaf(rng, (6,))
    w = rng.standard_normal((4, 6))
    finite_difference_check(lambda: scalarize(ad.layer_norm(x, gain, bias), w),
                            [x, gain, bias], rel_tol=1e-4)
    # Constant vector through layer-norm with unit gain, zero bias -> zeros.
    const = Tensor(np.full((2, 5), 3.7))
    out = ad.layer_norm(const, Tensor(np.ones(5)), Tensor(np.zeros(5)))
    assert np.allclose(out.data, 0.0)


def test_lstm_step_gradient():
    rng = np.random.default_rng(4)
    hsize = 3
    x = leaf(rng, (2, 4))
    h = leaf(rng, (2, hsize))
    c = leaf(rng, (2, hsize))
    wx = leaf(rng, (4, 4 * hsize))
    wh = leaf(rng, (hsize, 4 * hsize))
    b = leaf(rng, (4 * hsize,))
    w_h = rng.standard_normal((2, hsize))
    w_c = rng.standard_normal((2, hsize))

    def fn():
        h2, c2 = ad.lstm_step(x, h, c, wx, wh, b)
        return scalarize(h2, w_h) + scalarize(c2, w_c)

    finite_difference_check(fn, [x, h, c, wx, wh, b])


def test_lstm_two_step_bptt_gradient():
    rng = np.random.default_rng(5)
    hsize = 3
    xs = [leaf(rng, (2, 4)) for _ in range(2)]
    wx = leaf(rng, (4, 4 * hsize))
    wh = leaf(rng, (hsize, 4 * hsize))
    b = leaf(rng, (4 * hsize,))
    w = rng.standard_normal((2, hsize))

    def fn():
        h = Tensor(np.zeros((2, hsize)))
        c = Tensor(np.zeros((2, hsize)))
        for x in xs:
            h, c = ad.lstm_step(x, h, c, wx, wh, b)
        return scalarize(h, w)

    finite_difference_check(fn, [wx, wh, b] + xs)


def test_log_softmax_gradient_and_normalization():
    rng = np.random.default_rng(6)
    x = leaf(rng, (3, 5))
    w = rng.standard_normal((3, 5))
    finite_difference_check(lambda: scalarize(ad.log_softmax(x), w), [x])
    assert np.allclose(np.exp(ad.log_softmax(x).data).sum(axis=-1), 1.0)


def test_shared_node_accumulation():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = ad.square(x)
    z = y + y  # d z / d x = 2 * 2x = 8
    backward(ad.sum(z))
    assert np.allclose(x.grad, [8.0])


def test_stop_gradient_and_no_grad():
    x = Tensor(np.array([1.5]), requires_grad=True)
    out = ad.sum(ad.square(ad.stop_gradient(x)) + x)
    backward(out)
    assert np.allclose(x.grad, [1.0])
    with no_grad():
        y = ad.square(x)
    assert not y.requires_grad and y._bwd is None


def test_gradcheck_catches_wrong_gradient():
    x = Tensor(np.array([0.7]), requires_grad=True)

    def broken():
        out = ad.square(x)
        out._parents = (x,)
        out._bwd = lambda g: x.accumulate(g * 3.0 * x.data)  # wrong rule
        return out

    with pytest.raises(AssertionError):
        finite_difference_check(broken, [x])


# ---------------------------------------------------------------------------
# optimizer


def test_adam_first_step_magnitude():
    pset = ParameterSet()
    p = pset.add("w", np.array([1.0, -2.0, 3.0]))
    p.grad = np.array([0.3, -5.0, 1e-4])
    before = p.data.copy()
    adam_update(pset, learning_rate=1e-2)
    # Bias-corrected first step is lr * sign(g) up to eps rounding.
    step = before - p.data
    assert np.allclose(np.abs(step), 1e-2, atol=1e-6)
    assert np.allclose(np.sign(step), np.sign([0.3, -5.0, 1e-4]))


def test_adam_zero_gradient_keeps_parameter():
    pset = ParameterSet()
    p = pset.add("w", np.array([4.0]))
    p.grad = np.zeros(1)
    adam_update(pset, learning_rate=0.1)
    assert np.allclose(p.data, [4.0])


def test_adam_missing_gradient_raises():
    pset = ParameterSet()
    pset.add("w", np.array([1.0]))
    with pytest.raises(ValueError):
        adam_update(pset, learning_rate=0.1)


def test_adam_three_step_hand_recurrence():
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    grads = [0.4, -0.2, 0.9]
    # Hand-computed reference.
    theta, m, v = 1.0, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    pset = ParameterSet()
    p = pset.add("w", np.array([1.0]))
    for g in grads:
        p.grad = np.array([g])
        adam_update(pset, learning_rate=lr)
    assert abs(p.data[0] - theta) < 1e-10


def test_parameter_set_roundtrip_and_clone():
    rng = np.random.default_rng(7)
    pset = ParameterSet()
    a = pset.add("a", rng.standard_normal((2, 3)))
    pset.add("b", rng.standard_normal(4))
    a.grad = rng.standard_normal((2, 3))
    pset["b"].grad = rng.standard_normal(4)
    adam_update(pset, 1e-3)
    state = {k: v.copy() for k, v in pset.state_dict().items()}

    clone = pset.clone()
    assert clone.names() == pset.names()
    clone["a"].data[0, 0] += 1.0
    assert pset["a"].data[0, 0] != clone["a"].data[0, 0]

    a.grad = rng.standard_normal((2, 3))
    pset["b"].grad = rng.standard_normal(4)
    adam_update(pset, 1e-3)
    pset.load_state_dict(state)
    for k, v in pset.state_dict().items():
        assert np.array_equal(v, state[k]), k

    with pytest.raises(KeyError):
        pset.add("a", np.zeros(1))


def test_copy_values_preserves_optimizer_state():
    pset = ParameterSet()
    p = pset.add("w", np.array([1.0]))
    p.grad = np.array([1.0])
    adam_update(pset, 0.1)
    other = ParameterSet()
    other.add("w", np.array([9.0]))
    m_before = pset._m["w"].copy()
    pset.copy_values_from(other)
    assert pset["w"].data[0] == 9.0
    assert np.array_equal(pset._m["w"], m_before)


def test_clip_grad_norm():
    pset = ParameterSet()
    p = pset.add("w", np.zeros(4))
    p.grad = np.full(4, 3.0)  # norm 6
    norm = clip_grad_norm(pset, 1.5)
    assert abs(norm - 6.0) < 1e-12
    assert abs(np.sqrt(np.square(p.grad).sum()) - 1.5) < 1e-12
