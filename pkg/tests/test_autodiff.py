"""Tape engine: forward values against brute-force oracles, gradients against
central finite differences, and the structural guarantees (determinism,
linearity, finiteness, single scalar root)."""

from __future__ import annotations

import math

import numpy as np
import pytest

from helpers import fd_gradient, max_rel_err

from mgaug.autodiff import NonFiniteError, ShapeError, Tape


def test_linear_identity_weight_passes_input_through():
    x = np.array([[1.0, -2.0], [3.5, 0.25]])
    t = Tape()
    out = t.linear(t.leaf(x), t.param(np.eye(2)), t.param(np.zeros(2)))
    assert np.array_equal(out.data, x)


def test_linear_zero_input_yields_bias():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(4, 3))
    b = rng.normal(size=3)
    t = Tape()
    out = t.linear(t.leaf(np.zeros((5, 4))), t.param(w), t.param(b))
    assert np.array_equal(out.data, np.tile(b, (5, 1)))


def test_linear_matches_triple_loop_oracle():
    rng = np.random.default_rng(1)
    x, w, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=2)
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            acc = b[j]
            for k in range(4):
                acc += x[i, k] * w[k, j]
            expected[i, j] = acc
    t = Tape()
    out = t.linear(t.leaf(x), t.param(w), t.param(b))
    assert max_rel_err(out.data, expected) < 1e-13


def test_linear_shape_mismatch_raises():
    t = Tape()
    with pytest.raises(ShapeError):
        t.linear(t.leaf(np.zeros((2, 3))), t.param(np.zeros((4, 2))), t.param(np.zeros(2)))


def test_relu_values_and_kink():
    t = Tape()
    out = t.relu(t.leaf(np.array([-2.0, -0.5, 0.0, 0.5, 2.0])))
    assert np.array_equal(out.data, np.array([0.0, 0.0, 0.0, 0.5, 2.0]))


def test_relu_subgradient_at_zero_is_zero():
    x = np.array([[-1.0, 0.0, 2.0]])
    t = Tape()
    xt = t.param(x)
    loss = t.tsum(t.relu(xt))
    (g,) = t.backward(loss)
    assert np.array_equal(g, np.array([[0.0, 0.0, 1.0]]))


def test_relu_fd_gradient_away_from_kinks():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 4)) + np.sign(rng.normal(size=(3, 4))) * 0.5  # keep off 0
    weights = rng.normal(size=(3, 4))

    def f(arrs):
        t = Tape()
        return float(t.tsum(t.mul(t.relu(t.param(arrs[0])), t.leaf(weights))).data)

    t = Tape()
    (ana,) = t.backward(t.tsum(t.mul(t.relu(t.param(x)), t.leaf(weights))))
    (num,) = fd_gradient(f, [x])
    assert max_rel_err(ana, num) < 1e-5


def test_cross_entropy_uniform_logits_is_log_n():
    t = Tape()
    loss = t.cross_entropy(t.leaf(np.zeros((1, 5))), np.array([2]))
    assert abs(float(loss.data) - math.log(5)) < 1e-12


def test_cross_entropy_large_margin_loss_vanishes():
    logits = np.full((1, 5), 0.0)
    logits[0, 3] = 20.0
    t = Tape()
    loss = t.cross_entropy(t.leaf(logits), np.array([3]))
    assert float(loss.data) < 1e-3


def test_cross_entropy_is_stable_under_huge_logits():
    # max subtraction keeps exp() in range
    logits = np.array([[1000.0, 999.0, 998.0]])
    t = Tape()
    loss = t.cross_entropy(t.leaf(logits), np.array([0]))
    expected = math.log(1.0 + math.exp(-1.0) + math.exp(-2.0))
    assert abs(float(loss.data) - expected) < 1e-12


def test_cross_entropy_label_out_of_range_raises():
    t = Tape()
    logits = t.leaf(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        t.cross_entropy(logits, np.array([0, 3]))
    with pytest.raises(ValueError):
        Tape().cross_entropy(Tape().leaf(np.zeros((1, 3))), np.array([0]))  # cross-tape


def test_cross_entropy_fd_gradient():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(6, 4))
    y = rng.integers(0, 4, size=6)

    def f(arrs):
        t = Tape()
        return float(t.cross_entropy(t.param(arrs[0]), y).data)

    t = Tape()
    (ana,) = t.backward(t.cross_entropy(t.param(z), y))
    (num,) = fd_gradient(f, [z])
    assert max_rel_err(ana, num) < 1e-5


def test_squared_error_value_and_gradient():
    rng = np.random.default_rng(4)
    p = rng.normal(size=(3, 2))
    target = rng.normal(size=(3, 2))
    t = Tape()
    loss = t.squared_error(t.param(p), target)
    assert abs(float(loss.data) - ((p - target) ** 2).mean()) < 1e-14
    (ana,) = t.backward(loss)

    def f(arrs):
        t2 = Tape()
        return float(t2.squared_error(t2.param(arrs[0]), target).data)

    (num,) = fd_gradient(f, [p])
    assert max_rel_err(ana, num) < 1e-6


def test_proto_logits_equidistant_queries_score_uniformly():
    # two classes at +-1 on the x axis, query at the origin
    s = np.array([[1.0, 0.0], [-1.0, 0.0]])
    q = np.array([[0.0, 0.0]])
    t = Tape()
    logits = t.proto_logits(t.leaf(s), t.leaf(q), np.array([0, 1]), 2)
    assert np.allclose(logits.data, [[-1.0, -1.0]])


def test_proto_logits_fd_gradient_both_paths():
    rng = np.random.default_rng(5)
    s = rng.normal(size=(8, 5))
    q = rng.normal(size=(6, 5))
    sy = np.repeat(np.arange(4), 2)
    qy = rng.integers(0, 4, size=6)

    def f(arrs):
        t = Tape()
        logits = t.proto_logits(t.param(arrs[0]), t.param(arrs[1]), sy, 4)
        return float(t.cross_entropy(logits, qy).data)

    t = Tape()
    st, qt = t.param(s), t.param(q)
    loss = t.cross_entropy(t.proto_logits(st, qt, sy, 4), qy)
    gs, gq = t.backward(loss)
    ns, nq = fd_gradient(f, [s, q])
    assert max_rel_err(gs, ns) < 1e-5
    assert max_rel_err(gq, nq) < 1e-5


def test_proto_logits_missing_class_raises():
    t = Tape()
    s = t.leaf(np.zeros((2, 3)))
    q = t.leaf(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        t.proto_logits(s, q, np.array([0, 0]), 2)


def test_backward_of_quadratic_is_two_theta_exactly():
    theta = np.array([[0.5, -1.25], [2.0, 0.0]])
    t = Tape()
    th = t.param(theta)
    loss = t.tsum(t.mul(th, th))
    (g,) = t.backward(loss)
    assert np.array_equal(g, 2.0 * theta)


def test_backward_requires_scalar_root():
    t = Tape()
    x = t.param(np.ones(3))
    with pytest.raises(ShapeError):
        t.backward(x)


def test_untouched_parameter_gets_zero_gradient():
    t = Tape()
    used = t.param(np.ones((1, 2)))
    unused = t.param(np.ones((3,)))
    loss = t.tsum(used)
    g_used, g_unused = t.backward(loss)
    assert np.array_equal(g_used, np.ones((1, 2)))
    assert np.array_equal(g_unused, np.zeros(3))


def _mlp_loss(arrs, x, y):
    w1, b1, w2, b2 = arrs
    t = Tape()
    h = t.relu(t.linear(t.leaf(x), t.param(w1), t.param(b1)))
    out = t.linear(h, t.param(w2), t.param(b2))
    return t, t.cross_entropy(out, y)


def test_two_layer_mlp_gradients_match_finite_differences():
    # the headline gradient-correctness check: every coordinate of a small
    # MLP against central differences at step 1e-4
    rng = np.random.default_rng(7)
    x = rng.normal(size=(6, 5))
    y = rng.integers(0, 3, size=6)
    w1, b1 = rng.normal(size=(5, 8)) * 0.7, rng.normal(size=8) * 0.3
    w2, b2 = rng.normal(size=(8, 3)) * 0.7, rng.normal(size=3) * 0.3
    arrs = [w1, b1, w2, b2]

    # seed chosen so no pre-activation sits near the ReLU kink
    pre = x @ w1 + b1
    assert np.abs(pre).min() > 1e-3

    t, loss = _mlp_loss(arrs, x, y)
    ana = t.backward(loss)
    num = fd_gradient(lambda a: float(_mlp_loss(a, x, y)[1].data), arrs, step=1e-4)
    for a, n in zip(ana, num):
        assert max_rel_err(a, n, floor=1e-7) < 1e-5


def test_forward_and_backward_are_bit_deterministic():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(4, 6))
    y = rng.integers(0, 2, size=4)
    arrs = [rng.normal(size=(6, 7)), rng.normal(size=7),
            rng.normal(size=(7, 2)), rng.normal(size=2)]
    t1, l1 = _mlp_loss(arrs, x, y)
    t2, l2 = _mlp_loss(arrs, x, y)
    assert float(l1.data) == float(l2.data)
    for g1, g2 in zip(t1.backward(l1), t2.backward(l2)):
        assert np.array_equal(g1, g2)


def test_backward_is_linear_in_the_loss():
    # gradient of a*L1 + b*L2 equals a*grad(L1) + b*grad(L2)
    rng = np.random.default_rng(9)
    x = rng.normal(size=(3, 4))
    y = rng.integers(0, 3, size=3)
    target = rng.normal(size=(3, 3))
    w, bias = rng.normal(size=(4, 3)), rng.normal(size=3)
    a, b = 0.7, -1.3

    def build(tape):
        wt, bt = tape.param(w), tape.param(bias)
        out = tape.linear(tape.leaf(x), wt, bt)
        return out, tape.cross_entropy(out, y), tape.squared_error(out, target)

    t1 = Tape()
    _, l1, _ = build(t1)
    g1 = t1.backward(l1)
    t2 = Tape()
    _, _, l2 = build(t2)
    g2 = t2.backward(l2)
    t3 = Tape()
    _, l1c, l2c = build(t3)
    combined = t3.add(t3.scale(l1c, a), t3.scale(l2c, b))
    g3 = t3.backward(combined)
    for gw_c, gw_1, gw_2 in zip(g3, g1, g2):
        assert np.max(np.abs(gw_c - (a * gw_1 + b * gw_2))) < 1e-12


def test_non_finite_values_are_rejected():
    t = Tape()
    with pytest.raises(NonFiniteError):
        t.leaf(np.array([1.0, np.inf]))
    with pytest.raises(NonFiniteError):
        t.param(np.array([np.nan]))
    big = t.leaf(np.array([[1e308]]))
    with np.errstate(over="ignore"), pytest.raises(NonFiniteError):
        t.scale(big, 10.0)  # overflows to inf


def test_cross_tape_operands_are_refused():
    t1, t2 = Tape(), Tape()
    x = t1.leaf(np.zeros((1, 2)))
    w = t2.param(np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        t1.linear(x, w, t1.param(np.zeros(2)))
