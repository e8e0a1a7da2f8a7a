import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepneurons import autodiff as ad
from deepneurons import graph
from oracles import matmul_loops


def test_matmul_hand_checked():
    t = ad.Tape()
    out = ad.matmul(t.leaf([[1.0, 2.0]]), t.leaf([[3.0], [4.0]]))
    assert out.data.tolist() == [[11.0]]


def test_matmul_identity(rng):
    t = ad.Tape()
    A = rng.normal(size=(4, 3))
    out = ad.matmul(t.leaf(A), t.leaf(np.eye(3)))
    np.testing.assert_array_equal(out.data, A)


def test_matmul_matches_triple_loop(rng):
    A, B = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    t = ad.Tape()
    out = ad.matmul(t.leaf(A), t.leaf(B))
    np.testing.assert_allclose(out.data, matmul_loops(A.tolist(), B.tolist()), rtol=0, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    t = ad.Tape()
    with pytest.raises(ad.DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
        ad.matmul(t.leaf(np.ones((2, 3))), t.leaf(np.ones((2, 2))))


def test_tanh_values():
    t = ad.Tape()
    assert ad.tanh(t.leaf([0.0])).data[0] == 0.0
    assert abs(ad.tanh(t.leaf([1.0])).data[0] - math.tanh(1.0)) <= 1e-12
    assert abs(ad.tanh(t.leaf([1.0])).data[0] - 0.7615941559557649) <= 1e-12


@given(st.floats(-20, 20))
def test_tanh_odd(x):
    t = ad.Tape()
    assert ad.tanh(t.leaf([x])).data[0] == -ad.tanh(t.leaf([-x])).data[0]


def test_slice_values_and_gradient():
    t = ad.Tape()
    v = t.leaf([1.0, 2.0, 3.0, 4.0])
    assert ad.slice(v, 0, 4).data.tolist() == [1, 2, 3, 4]
    s = ad.slice(v, 2, 2)
    assert s.data.tolist() == [3, 4]
    (g,) = t.backward(ad.total(s), [v])
    assert g.tolist() == [0, 0, 1, 1]


def test_slice_out_of_range():
    t = ad.Tape()
    with pytest.raises(IndexError):
        ad.slice(t.leaf([1.0, 2.0]), 1, 2)


def test_concat():
    t = ad.Tape()
    parts = [t.leaf([1.0]), t.leaf([2.0]), t.leaf([3.0])]
    assert ad.concat(parts).data.tolist() == [1, 2, 3]
    v = t.leaf([5.0, 6.0])
    np.testing.assert_array_equal(ad.concat([v]).data, v.data)
    with pytest.raises(ValueError):
        ad.concat([])


@given(st.lists(st.integers(1, 5), min_size=1, max_size=6))
def test_concat_length_additive(lengths):
    t = ad.Tape()
    parts = [t.leaf(np.arange(n, dtype=float)) for n in lengths]
    assert ad.concat(parts).size == sum(lengths)


@given(st.integers(1, 6), st.integers(1, 5))
def test_slice_concat_round_trip(n, width):
    t = ad.Tape()
    v = t.leaf(np.random.default_rng(n).normal(size=n * width))
    back = ad.concat([ad.slice(v, i * width, width) for i in range(n)])
    np.testing.assert_array_equal(back.data, v.data)


def test_mse_loss():
    t = ad.Tape()
    assert ad.mse_loss(t.leaf([1.0, 2.0]), t.leaf([1.0, 2.0])).data == 0.0
    assert ad.mse_loss(t.leaf([0.0]), t.leaf([2.0])).data == 4.0
    assert ad.mse_loss(t.leaf([1.0, 2.0]), t.leaf([0.0, 0.0])).data == 2.5
    with pytest.raises(ad.DimensionError):
        ad.mse_loss(t.leaf([1.0]), t.leaf([1.0, 2.0]))


def test_backward_sum_gives_ones(rng):
    t = ad.Tape()
    p = t.leaf(rng.normal(size=5))
    (g,) = t.backward(ad.total(p), [p])
    np.testing.assert_array_equal(g, np.ones(5))


def test_backward_constant_loss_gives_zero():
    t = ad.Tape()
    p = t.leaf([1.0, 2.0])
    q = t.leaf([3.0])
    (g,) = t.backward(ad.total(q), [p])
    np.testing.assert_array_equal(g, np.zeros(2))


def test_backward_rejects_non_scalar():
    t = ad.Tape()
    p = t.leaf([1.0, 2.0])
    with pytest.raises(ad.ContractError):
        t.backward(ad.tanh(p), [p])


def test_backward_linearity(small_net, rng):
    X = rng.uniform(-5, 5, (3, 1))
    Y1, Y2 = rng.uniform(-0.8, 0.8, (2, 3, 1))
    a, b = 0.7, -1.3
    _, g1 = graph.loss_and_grad(small_net, X, Y1)
    _, g2 = graph.loss_and_grad(small_net, X, Y2)
    tape = ad.Tape()
    leaves = graph.parameter_leaves(small_net, tape)
    preds = ad.concat([graph.sample_forward(small_net, leaves, x) for x in X])
    combined = ad.scale(ad.mse_loss(preds, tape.constant(Y1.ravel())), a) + ad.scale(
        ad.mse_loss(preds, tape.constant(Y2.ravel())), b
    )
    gc = tape.backward(combined, leaves)
    for k in gc:
        np.testing.assert_allclose(gc[k], a * g1[k] + b * g2[k], rtol=0, atol=1e-12)


def test_backward_visits_only_requested_subset(small_net, rng):
    X, Y = rng.uniform(-5, 5, (2, 1)), rng.uniform(-0.8, 0.8, (2, 1))
    _, g_theta = graph.loss_and_grad(small_net, X, Y, "theta")
    _, g_phi = graph.loss_and_grad(small_net, X, Y, "phi")
    _, g_all = graph.loss_and_grad(small_net, X, Y, "both")
    assert set(g_theta) | set(g_phi) == set(g_all)
    assert not set(g_theta) & set(g_phi)
    for k, v in {**g_theta, **g_phi}.items():
        np.testing.assert_array_equal(v, g_all[k])


def test_tape_replay_bit_identical(small_net, rng):
    X, Y = rng.uniform(-5, 5, (2, 1)), rng.uniform(-0.8, 0.8, (2, 1))
    tape, _, _, _ = graph.batch_loss(small_net, X, Y)
    replayed = tape.replay()
    for node, value in zip(tape.nodes, replayed):
        np.testing.assert_array_equal(node.data, value)


def test_backward_visits_each_node_once(monkeypatch):
    t = ad.Tape()
    p = t.leaf([0.5, -0.2])
    h = ad.tanh(p)
    loss = ad.total(h + h)
    calls = []
    for node in t.nodes:
        node.grad_fns = tuple(
            (lambda f, n: (lambda g: (calls.append(n.index), f(g))[1]))(f, node) for f in node.grad_fns
        )
    (g,) = t.backward(loss, [p])
    # each node's grad fns run once per parent edge, in reverse tape order
    assert calls == sorted(calls, reverse=True)
    assert calls.count(h.index) == 1
    np.testing.assert_allclose(g, 2 * (1 - np.tanh(p.data) ** 2))


def test_determinism(small_net, rng):
    X, Y = rng.uniform(-5, 5, (3, 1)), rng.uniform(-0.8, 0.8, (3, 1))
    l1, g1 = graph.loss_and_grad(small_net, X, Y)
    l2, g2 = graph.loss_and_grad(small_net, X, Y)
    assert l1 == l2
    for k in g1:
        np.testing.assert_array_equal(g1[k], g2[k])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_all_values_finite(seed):
    from deepneurons.gradcheck import random_case

    net, X, Y = random_case(np.random.default_rng(seed))
    tape, _, _, loss = graph.batch_loss(net, X * 100, Y)
    assert all(np.all(np.isfinite(n.data)) for n in tape.nodes)
