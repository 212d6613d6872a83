from __future__ import annotations

import numpy as np
import pytest

from hsqcnet import autodiff as ad
from hsqcnet.autodiff import (
    Adam,
    ComputeRecord,
    DimensionError,
    Parameter,
    Tensor,
    backward,
    zero_gradients,
)


def p(values, name="p"):
    return Parameter(np.asarray(values, dtype=float), name)


def test_affine_identity():
    x = Tensor([1.0, 2.0, 3.0])
    out = ad.affine(x, p(np.eye(3), "w"), p(np.zeros(3), "b"))
    assert np.array_equal(out.values, [1.0, 2.0, 3.0])


def test_affine_zero_weight_gives_bias():
    x = Tensor([5.0, -2.0])
    bias = p([0.5, 1.5, -3.0], "b")
    out = ad.affine(x, p(np.zeros((3, 2)), "w"), bias)
    assert np.array_equal(out.values, bias.values)


def test_affine_matches_hand_matmul():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(4, 3))
    b = rng.normal(size=4)
    x = rng.normal(size=3)
    out = ad.affine(Tensor(x), p(w, "w"), p(b, "b"))
    direct = np.array([sum(w[i, j] * x[j] for j in range(3)) + b[i] for i in range(4)])
    assert np.allclose(out.values, direct, rtol=0, atol=1e-15)


def test_affine_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(4, 3\).*\(2,\)"):
        ad.affine(Tensor(np.zeros(2)), p(np.zeros((4, 3)), "w"), p(np.zeros(4), "b"))


def test_backward_dot_product_gradient_is_input():
    # loss = w . x with x fixed -> grad(w) = x
    x = np.array([2.0, -3.0, 5.0])
    w = Parameter(np.array([[0.5, -1.0, 2.0]]), "w")
    b = p([0.0], "b")
    with ComputeRecord() as rec:
        loss = ad.component(ad.affine(Tensor(x), w, b), 0)
    backward(loss, rec)
    assert np.allclose(w.grad, x.reshape(1, 3))
    assert np.allclose(b.grad, [1.0])


def test_relu_blocks_gradient():
    x = p([-5.0], "x")
    with ComputeRecord() as rec:
        loss = ad.component(ad.relu(x), 0)
    backward(loss, rec)
    assert x.grad[0] == 0.0
    assert float(ad.relu(Tensor([-5.0])).values[0]) == 0.0


def test_embedding_lookup_row_and_scatter():
    table = p(np.arange(12.0).reshape(4, 3), "table")
    row = ad.embedding_lookup(table, 2)
    assert np.array_equal(row.values, [6.0, 7.0, 8.0])
    with ComputeRecord() as rec:
        a = ad.embedding_lookup(table, 1)
        b = ad.embedding_lookup(table, 1)
        loss = ad.mean(ad.neighbor_sum([a, b]))
    backward(loss, rec)
    assert np.allclose(table.grad[1], 2.0 / 3.0)  # two lookups double the row grad
    assert np.all(table.grad[0] == 0.0)
    assert np.all(table.grad[2:] == 0.0)


def test_embedding_lookup_out_of_range():
    with pytest.raises(IndexError):
        ad.embedding_lookup(p(np.zeros((2, 3)), "t"), 2)


def test_neighbor_sum_conventions():
    width = 4
    zero = ad.neighbor_sum([], width=width)
    assert np.array_equal(zero.values, np.zeros(width))
    v = Tensor([1.0, -2.0])
    assert np.array_equal(ad.neighbor_sum([v]).values, v.values)
    cancel = ad.neighbor_sum([v, Tensor([-1.0, 2.0])])
    assert np.array_equal(cancel.values, np.zeros(2))
    with pytest.raises(DimensionError):
        ad.neighbor_sum([v, Tensor([1.0, 2.0, 3.0])])
    with pytest.raises(DimensionError):
        ad.neighbor_sum([])


def test_non_scalar_loss_rejected():
    x = p([1.0, 2.0], "x")
    with ComputeRecord() as rec:
        out = ad.scale(x, 2.0)
    with pytest.raises(DimensionError, match="scalar"):
        backward(out, rec)


def test_finite_difference_on_composed_function():
    rng = np.random.default_rng(42)
    w1 = p(rng.normal(size=(5, 3)) * 0.5, "w1")
    b1 = p(rng.normal(size=5) * 0.1, "b1")
    w2 = p(rng.normal(size=(2, 5)) * 0.5, "w2")
    b2 = p(rng.normal(size=2) * 0.1, "b2")
    x = rng.normal(size=3)
    targets = [0.3, -0.7]

    def forward():
        hidden = ad.relu(ad.affine(Tensor(x), w1, b1))
        out = ad.affine(hidden, w2, b2)
        return ad.mean_abs_error([ad.component(out, 0), ad.component(out, 1)], targets)

    with ComputeRecord() as rec:
        loss = forward()
    backward(loss, rec)
    step = 1e-5
    for param in (w1, b1, w2, b2):
        flat = param.values.reshape(-1)
        grad = param.grad.reshape(-1)
        for k in range(0, flat.size, max(1, flat.size // 4)):
            orig = flat[k]
            flat[k] = orig + step
            up = forward().item()
            flat[k] = orig - step
            down = forward().item()
            flat[k] = orig
            fd = (up - down) / (2 * step)
            denom = max(abs(fd), abs(grad[k]), 1e-8)
            assert abs(fd - grad[k]) / denom < 1e-4


def test_determinism_same_seed_bit_identical():
    def run():
        rng = np.random.default_rng(11)
        w = ad.uniform_init(rng, (4, 4), 4, "w")
        b = ad.uniform_init(rng, (4,), 4, "b")
        with ComputeRecord() as rec:
            out = ad.relu(ad.affine(Tensor([1.0, 2.0, 3.0, 4.0]), w, b))
            loss = ad.mean(out)
        backward(loss, rec)
        return loss.item(), w.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert l1 == l2
    assert np.array_equal(g1, g2)


def test_zeroing_contract():
    w = p(np.ones((2, 2)), "w")
    w.grad += 5.0
    zero_gradients([w])
    assert np.all(w.grad == 0.0)


def test_gradients_accumulate_across_backwards():
    w = p(np.ones((1, 1)), "w")
    b = p(np.zeros(1), "b")
    for _ in range(2):
        with ComputeRecord() as rec:
            loss = ad.component(ad.affine(Tensor([3.0]), w, b), 0)
        backward(loss, rec)
    assert w.grad[0, 0] == pytest.approx(6.0)


def test_adam_reduces_simple_objective():
    w = p([4.0], "w")
    opt = Adam([w], lr=0.1)
    for _ in range(200):
        opt.zero_grad()
        with ComputeRecord() as rec:
            loss = ad.mean(ad.absolute(ad.shift(w, -1.0)))
        backward(loss, rec)
        opt.step()
    assert abs(w.values[0] - 1.0) < 0.2


def test_concat_and_component_round_trip():
    a = Tensor([1.0, 2.0])
    b = Tensor([3.0])
    cat = ad.concat([a, b])
    assert np.array_equal(cat.values, [1.0, 2.0, 3.0])
    assert ad.component(cat, 2).item() == 3.0
