import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emgformer.tensor import (
    ShapeError,
    Tensor,
    concat,
    cross_entropy,
    gelu,
    layer_norm,
    matmul,
    softmax_lastdim,
    use_dtype,
)

from fdcheck import numeric_grad, rel_error


def test_matmul_identity():
    m = Tensor(np.arange(9.0).reshape(3, 3))
    out = matmul(Tensor(np.eye(3)), m)
    np.testing.assert_array_equal(out.data, m.data)


def test_matmul_hand_arithmetic():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[1.0], [1.0]])
    out = matmul(a, b)
    np.testing.assert_allclose(out.data, [[3.0], [7.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_matmul_grad_matches_closed_form_and_fd():
    rng = np.random.default_rng(0)
    with use_dtype(np.float64):
        a_np = rng.standard_normal((5, 4))
        b_np = rng.standard_normal((4, 2))
        a = Tensor(a_np, requires_grad=True)
        b = Tensor(b_np, requires_grad=True)
        out = matmul(a, b)
        out.sum().backward()
        # d sum(a @ b) / d a = ones(5, 2) @ b^T
        np.testing.assert_allclose(a.grad, np.ones((5, 2)) @ b_np.T, rtol=1e-12)
        num = numeric_grad(lambda: (a_np @ b_np).sum(), a_np)
        assert rel_error(a.grad, num) < 1e-6


def test_softmax_uniform_and_shift():
    out = softmax_lastdim(Tensor([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-7)
    for c in (-3.0, 0.0, 11.5):
        out = softmax_lastdim(Tensor([c, c + math.log(2.0)]))
        np.testing.assert_allclose(out.data, [1 / 3, 2 / 3], atol=1e-6)


def test_softmax_reference_row():
    # Scalar-calculator evaluation of exp([1,2,3]) normalized.
    out = softmax_lastdim(Tensor([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(out.data, [0.09003057, 0.24472847, 0.66524096], atol=1e-5)


def test_softmax_rejects_nan():
    with pytest.raises(ValueError, match="NaN"):
        softmax_lastdim(Tensor([1.0, float("nan")]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=8), st.floats(-50, 50))
def test_softmax_properties(row, shift):
    base = softmax_lastdim(Tensor(np.array(row, dtype=np.float64))).data
    assert abs(base.sum() - 1.0) < 1e-6
    assert (base >= 0).all()
    shifted = softmax_lastdim(Tensor(np.array(row, dtype=np.float64) + shift)).data
    assert np.abs(base - shifted).max() < 1e-6


def test_layer_norm_constant_slice_is_zero():
    d = 6
    out = layer_norm(Tensor(np.full((3, d), 4.2)), Tensor(np.ones(d)), Tensor(np.zeros(d)))
    np.testing.assert_allclose(out.data, 0.0, atol=1e-6)


def test_layer_norm_two_point():
    with use_dtype(np.float64):
        out = layer_norm(Tensor([1.0, 3.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)
        np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-6)


def test_layer_norm_normalizes():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 16)) * 3.0 + 1.0
    out = layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16))).data
    assert np.abs(out.mean(axis=-1)).max() < 1e-6
    assert np.abs(out.var(axis=-1) - 1.0).max() < 1e-4


def test_layer_norm_grad_fd():
    rng = np.random.default_rng(7)
    with use_dtype(np.float64):
        x_np = rng.standard_normal((4, 8))
        g_np = rng.standard_normal(8)
        b_np = rng.standard_normal(8)
        w_np = rng.standard_normal((4, 8))  # weights so the loss mixes all outputs

        def loss():
            mu = x_np.mean(-1, keepdims=True)
            xc = x_np - mu
            var = (xc * xc).mean(-1, keepdims=True)
            xhat = xc / np.sqrt(var + 1e-5)
            return float(((xhat * g_np + b_np) * w_np).sum())

        x = Tensor(x_np, requires_grad=True)
        g = Tensor(g_np, requires_grad=True)
        b = Tensor(b_np, requires_grad=True)
        out = (layer_norm(x, g, b) * Tensor(w_np)).sum()
        out.backward()
        for t, arr in ((x, x_np), (g, g_np), (b, b_np)):
            assert rel_error(t.grad, numeric_grad(loss, arr)) < 1e-5


def test_gelu_reference_points():
    out = gelu(Tensor([0.0, 1.0, 10.0, -10.0], requires_grad=False))
    assert out.data[0] == 0.0
    np.testing.assert_allclose(out.data[1], 0.841345, atol=1e-6)
    assert abs(out.data[2] - 10.0) < 1e-6
    assert abs(out.data[3]) < 1e-6


def test_cross_entropy_uniform_and_confident():
    logits = Tensor(np.zeros((2, 49)))
    assert abs(cross_entropy(logits, [0, 48]).item() - math.log(49)) < 1e-5
    confident = np.zeros((1, 5))
    confident[0, 2] = 100.0
    assert cross_entropy(Tensor(confident), [2]).item() < 1e-6


def test_cross_entropy_reference_row():
    # -ln(softmax([1,2,3])[2]) = -ln(0.66524096)
    out = cross_entropy(Tensor([[1.0, 2.0, 3.0]]), [2])
    np.testing.assert_allclose(out.item(), 0.40760596, atol=1e-5)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(IndexError, match="row 1"):
        cross_entropy(Tensor(np.zeros((3, 4))), [0, 7, 1])


@pytest.mark.parametrize("seed", range(5))
def test_fused_op_gradients_fd(seed):
    rng = np.random.default_rng(seed)
    with use_dtype(np.float64):
        x_np = rng.standard_normal((3, 5))
        w_np = rng.standard_normal((3, 5))
        labels = rng.integers(0, 5, size=3)

        cases = {
            "softmax": (
                lambda: float((np.exp(x_np - x_np.max(-1, keepdims=True))
                               / np.exp(x_np - x_np.max(-1, keepdims=True)).sum(-1, keepdims=True)
                               * w_np).sum()),
                lambda t: (softmax_lastdim(t) * Tensor(w_np)).sum(),
            ),
            "gelu": (
                lambda: float((0.5 * x_np * (1 + np.vectorize(math.erf)(x_np / math.sqrt(2))) * w_np).sum()),
                lambda t: (gelu(t) * Tensor(w_np)).sum(),
            ),
            "cross_entropy": (
                lambda: float(np.mean(
                    np.log(np.exp(x_np - x_np.max(-1, keepdims=True)).sum(-1))
                    - (x_np - x_np.max(-1, keepdims=True))[np.arange(3), labels])),
                lambda t: cross_entropy(t, labels),
            ),
        }
        for name, (ref, op) in cases.items():
            t = Tensor(x_np, requires_grad=True)
            op(t).backward()
            err = rel_error(t.grad, numeric_grad(ref, x_np))
            assert err < 1e-6, f"{name}: rel error {err}"


def test_broadcast_add_and_mul_grads():
    with use_dtype(np.float64):
        a = Tensor(np.random.default_rng(1).standard_normal((4, 3)), requires_grad=True)
        b = Tensor(np.random.default_rng(2).standard_normal(3), requires_grad=True)
        ((a + b) * b).sum().backward()
        # d/db sum((a + b) * b) = sum_rows(a) + 2 * 4 * b
        expected = a.data.sum(axis=0) + 2 * 4 * b.data
        np.testing.assert_allclose(b.grad, expected, rtol=1e-12)


def test_concat_slice_reshape_transpose_roundtrip_grads():
    with use_dtype(np.float64):
        a = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        b = Tensor(np.arange(6.0, 12.0).reshape(2, 3), requires_grad=True)
        c = concat([a, b], axis=0)            # 4x3
        d = c.transpose(1, 0).reshape(2, 6)   # 2x6
        d[0:1, :].sum().backward()
        # Row 0 of d is the first half of the transposed matrix: columns 0..2 of c rows 0/1 interleaved.
        assert a.grad.sum() + b.grad.sum() == 6.0
        assert a.grad.shape == (2, 3) and b.grad.shape == (2, 3)


def test_grad_accumulation_is_sum_based():
    a = Tensor(np.ones(3), requires_grad=True)
    (a * 2.0).sum().backward()
    (a * 3.0).sum().backward()
    np.testing.assert_allclose(a.grad, 5.0)
    a.zero_grad()
    np.testing.assert_allclose(a.grad, 0.0)
