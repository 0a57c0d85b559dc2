import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hierlstm.checkpoint import CheckpointError
from hierlstm.gradcheck import EPS, numeric_grad, rel_error
from hierlstm.lstm import (
    LstmParams, SoftmaxHead, bptt, cross_entropy, load_params, loss_labels, lstm_backward, lstm_forward,
    lstm_step, save_params, softmax, softmax_apply, softmax_loss,
)
from hierlstm.numcore import DomainError, ShapeError, make_rng

GATES = ("i", "f", "o", "c")


def scripted_step(W, U, b, x, h, c):
    """Plain-Python evaluation of the cell, one unit and one gate at a time."""
    n = len(h)

    def pre(gate, j):
        return (sum(W[gate][j][q] * x[q] for q in range(len(x)))
                + sum(U[gate][j][q] * h[q] for q in range(n)) + b[gate][j])

    sig = lambda z: 1.0 / (1.0 + math.exp(-z))  # noqa: E731
    i = [sig(pre("i", j)) for j in range(n)]
    f = [sig(pre("f", j)) for j in range(n)]
    o = [sig(pre("o", j)) for j in range(n)]
    g = [math.tanh(pre("c", j)) for j in range(n)]
    c_new = [f[j] * c[j] + i[j] * g[j] for j in range(n)]
    h_new = [o[j] * math.tanh(c_new[j]) for j in range(n)]
    return i, f, o, g, c_new, h_new


def fixed_cell():
    full = lambda r, c: np.full((r, c), 0.1)  # noqa: E731
    return LstmParams(*(full(2, 2) for _ in range(8)), *(np.zeros(2) for _ in range(4)))


def test_fixed_two_unit_cell_matches_scripted_evaluation():
    p = fixed_cell()
    s = lstm_step(p, [1.0, 0.0], np.zeros(2), np.zeros(2))
    W = {k: [[0.1, 0.1], [0.1, 0.1]] for k in GATES}
    b = {k: [0.0, 0.0] for k in GATES}
    ref = scripted_step(W, W, b, [1.0, 0.0], [0.0, 0.0], [0.0, 0.0])
    for got, want in zip((s.i, s.f, s.o, s.g, s.c, s.h), ref):
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_random_cells_match_scripted_evaluation(rng):
    for _ in range(20):
        p = LstmParams.init(3, 4, rng)
        for v in p.arrays().values():
            v += rng.uniform(-1, 1, size=v.shape)
        x, h, c = rng.standard_normal(3), rng.uniform(-0.9, 0.9, 4), rng.standard_normal(4)
        W = {k: getattr(p, "Wx" + k).tolist() for k in GATES}
        U = {k: getattr(p, "Wh" + k).tolist() for k in GATES}
        b = {k: getattr(p, "b" + k).tolist() for k in GATES}
        ref = scripted_step(W, U, b, x.tolist(), h.tolist(), c.tolist())
        s = lstm_step(p, x, h, c)
        for got, want in zip((s.i, s.f, s.o, s.g, s.c, s.h), ref):
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_zero_params_step():
    p = LstmParams.zeros(3, 2)
    s = lstm_step(p, [5.0, -1.0, 2.0], np.zeros(2), np.zeros(2))
    for gate in (s.i, s.f, s.o):
        np.testing.assert_array_equal(gate, [0.5, 0.5])
    np.testing.assert_array_equal(s.g, 0.0)
    np.testing.assert_array_equal(s.c, 0.0)
    np.testing.assert_array_equal(s.h, 0.0)
    s = lstm_step(p, [5.0, -1.0, 2.0], np.zeros(2), np.full(2, 2.0))
    np.testing.assert_array_equal(s.c, [1.0, 1.0])
    np.testing.assert_allclose(s.h, 0.5 * math.tanh(1.0), atol=1e-15)
    assert abs(s.h[0] - 0.380797) < 1e-6


def test_step_dimension_errors():
    p = LstmParams.zeros(3, 2)
    with pytest.raises(ShapeError):
        lstm_step(p, np.zeros(2), np.zeros(2), np.zeros(2))
    with pytest.raises(ShapeError):
        lstm_step(p, np.zeros(3), np.zeros(3), np.zeros(2))
    with pytest.raises(ShapeError):
        LstmParams(*(np.zeros((2, 3)) for _ in range(4)), *(np.zeros((2, 2)) for _ in range(3)),
                   np.zeros((3, 2)), *(np.zeros(2) for _ in range(4)))


def test_forward_equals_manual_composition_bitwise(rng):
    p = LstmParams.init(4, 5, rng)
    xs = rng.standard_normal((3, 4))
    tape = lstm_forward(p, xs)
    h, c = np.zeros(5), np.zeros(5)
    for t in range(3):
        s = lstm_step(p, xs[t], h, c)
        for k in ("i", "f", "o", "g", "c", "h"):
            assert np.array_equal(getattr(tape, k)[t], getattr(s, k))
        h, c = s.h, s.c
    assert len(tape) == 3


def test_forward_length_one_and_zero_params(rng):
    p = LstmParams.init(2, 3, rng)
    x = rng.standard_normal((1, 2))
    s = lstm_step(p, x[0], np.zeros(3), np.zeros(3))
    tape = lstm_forward(p, x)
    assert np.array_equal(tape.h[0], s.h) and np.array_equal(tape.c[0], s.c)
    z = lstm_forward(LstmParams.zeros(2, 3), rng.standard_normal((6, 2)))
    np.testing.assert_array_equal(z.h, 0.0)


def test_forward_batched_matches_per_sequence(rng):
    p = LstmParams.init(3, 4, rng)
    xs = rng.standard_normal((5, 2, 3))
    tape = lstm_forward(p, xs)
    for n in range(2):
        np.testing.assert_allclose(lstm_forward(p, xs[:, n]).h, tape.h[:, n], rtol=0, atol=1e-14)


def test_forward_empty_sequence():
    with pytest.raises(DomainError):
        lstm_forward(LstmParams.zeros(2, 2), np.zeros((0, 2)))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 30.0))
def test_gate_ranges_hold(seed, scale):
    r = np.random.default_rng(seed)
    p = LstmParams.init(3, 4, r)
    for v in p.arrays().values():
        v *= scale
    tape = lstm_forward(p, scale * r.standard_normal((50, 3)))
    for gate in (tape.i, tape.f, tape.o):
        assert np.all((gate > 0) & (gate < 1))
    assert np.all(np.abs(tape.g) < 1) and np.all(np.abs(tape.h) < 1)


def test_softmax_examples():
    head = SoftmaxHead(np.zeros((4, 3)), np.zeros(4))
    np.testing.assert_allclose(softmax_apply(head, np.array([1.0, -2.0, 3.0])), 0.25, atol=1e-15)
    np.testing.assert_allclose(softmax(np.array([math.log(2.0), 0.0])), [2 / 3, 1 / 3], atol=1e-15)
    z = np.random.default_rng(0).standard_normal(6)
    np.testing.assert_allclose(softmax(z + 1000.0), softmax(z), atol=1e-12)
    assert abs(softmax(z).sum() - 1.0) < 1e-12
    with pytest.raises(ShapeError):
        head.logits(np.zeros(2))


def test_cross_entropy_examples():
    assert cross_entropy([0.0, 1.0, 0.0], 1) == 0.0
    assert cross_entropy([0.25] * 4, 2) == pytest.approx(math.log(4), abs=1e-15)
    v = cross_entropy([1.0, 0.0], 1)
    assert math.isfinite(v) and v == pytest.approx(-math.log(1e-12))
    with pytest.raises(DomainError):
        cross_entropy([0.5, 0.5], 2)


def test_head_gradient_zero_for_one_hot_prediction():
    # logits of +-60 make the softmax one-hot to machine precision
    W = np.array([[60.0, 0.0], [-60.0, 0.0], [-60.0, 0.0]])
    head = SoftmaxHead(W, np.zeros(3))
    _, grads, dv, _ = softmax_loss(head, np.array([[1.0, 0.3]]), np.array([0]))
    for g in (grads["W"], grads["b"], dv):
        np.testing.assert_allclose(g, 0.0, atol=1e-12)


def test_loss_weight_scales_gradients(rng):
    p = LstmParams.init(3, 4, rng)
    head = SoftmaxHead.init(4, 3, rng)
    tape = lstm_forward(p, rng.standard_normal((4, 3)))
    labels = rng.integers(0, 3, 4)
    a = bptt(p, head, tape, labels)
    b = bptt(p, head, tape, labels, weight=2.0)
    for k in a.lstm_grads:
        np.testing.assert_allclose(b.lstm_grads[k], 2 * a.lstm_grads[k], atol=1e-12)
    np.testing.assert_allclose(b.head_grads["W"], 2 * a.head_grads["W"], atol=1e-12)


def test_bptt_matches_finite_differences():
    r = make_rng(2)
    p = LstmParams.init(3, 4, r)
    head = SoftmaxHead.init(4, 3, r)
    xs = r.standard_normal((3, 3))
    labels = r.integers(0, 3, 3)
    res = bptt(p, head, lstm_forward(p, xs), labels)
    loss = lambda: bptt(p, head, lstm_forward(p, xs), labels).loss  # noqa: E731
    for k, arr in p.arrays().items():
        assert rel_error(res.lstm_grads[k], numeric_grad(loss, arr, EPS)) < 1e-4, k
    for k, arr in head.arrays().items():
        assert rel_error(res.head_grads[k], numeric_grad(loss, arr, EPS)) < 1e-4, k
    assert rel_error(res.dxs, numeric_grad(loss, xs)) < 1e-4


def test_backward_through_initial_state(rng):
    p = LstmParams.init(2, 3, rng)
    xs = rng.standard_normal((3, 2))
    h0, c0 = rng.uniform(-0.5, 0.5, 3), rng.standard_normal(3)
    w = rng.standard_normal((3, 3))
    loss = lambda: float((lstm_forward(p, xs, h0, c0).h * w).sum())  # noqa: E731
    _, _, dh0, dc0 = lstm_backward(p, lstm_forward(p, xs, h0, c0), w)
    assert rel_error(dh0, numeric_grad(loss, h0)) < 1e-4
    assert rel_error(dc0, numeric_grad(loss, c0)) < 1e-4


def test_last_timestep_loss():
    labels = np.array([2, 1, 0])
    np.testing.assert_array_equal(loss_labels(labels, 3, "last"), [-1, -1, 0])
    np.testing.assert_array_equal(loss_labels(labels, 3, "all"), labels)
    with pytest.raises(DomainError):
        loss_labels(labels, 4, "all")
    with pytest.raises(DomainError):
        loss_labels(labels, 3, "middle")


def test_softmax_loss_ignores_negative_labels(rng):
    head = SoftmaxHead.init(3, 4, rng)
    v = rng.standard_normal((5, 3))
    labels = np.array([1, -1, 3, -1, 0])
    loss, grads, dv, _ = softmax_loss(head, v, labels)
    keep = labels >= 0
    loss2, grads2, dv2, _ = softmax_loss(head, v[keep], labels[keep])
    assert loss == pytest.approx(loss2, abs=1e-14)
    np.testing.assert_allclose(grads["W"], grads2["W"], atol=1e-14)
    np.testing.assert_array_equal(dv[~keep], 0.0)
    with pytest.raises(DomainError):
        softmax_loss(head, v, np.full(5, -1))


def test_params_checkpoint_round_trip(tmp_path, rng):
    p = LstmParams.init(3, 5, rng)
    path = tmp_path / "lstm.ckpt"
    save_params(path, p)
    q = load_params(path)
    for k, v in p.arrays().items():
        assert np.array_equal(v, getattr(q, k))
    blob = path.read_bytes()
    path.write_bytes(blob[:-3])
    with pytest.raises(CheckpointError):
        load_params(path)
    path.write_bytes(b"garbage\n")
    with pytest.raises(CheckpointError):
        load_params(path)
