"""Tensor engine: forward op contracts, gradients, and tape semantics."""

import math

import numpy as np
import pytest

from clipdet.autodiff import (
    GraphError,
    NumericsError,
    ShapeError,
    Tensor,
    backward,
    concat,
    conv2d,
    linear,
    matmul,
    maximum,
    minimum,
    narrow,
    no_grad,
    parameter,
    reshape,
    set_debug_checks,
    softmax,
    standardize,
    transpose,
)
from conftest import check_gradients, max_rel_error, numeric_grad


# -- reference oracles -------------------------------------------------------

def matmul_loops(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for l in range(k):
                out[i, j] += a[i, l] * b[l, j]
    return out


def conv2d_loops(x, w, b, stride, padding):
    cin, h, wdt = x.shape
    cout, _, kh, kw = w.shape
    xp = np.zeros((cin, h + 2 * padding, wdt + 2 * padding))
    xp[:, padding:padding + h, padding:padding + wdt] = x
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wdt + 2 * padding - kw) // stride + 1
    out = np.zeros((cout, oh, ow))
    for co in range(cout):
        for oy in range(oh):
            for ox in range(ow):
                acc = b[co]
                for ci in range(cin):
                    for ky in range(kh):
                        for kx in range(kw):
                            acc += w[co, ci, ky, kx] * xp[ci, oy * stride + ky, ox * stride + kx]
                out[co, oy, ox] = acc
    return out


# -- matmul ------------------------------------------------------------------

class TestMatmul:
    def test_identity(self):
        out = matmul(Tensor(np.eye(2)), Tensor([[3.0, 4.0], [5.0, 6.0]]))
        assert np.array_equal(out.data, [[3.0, 4.0], [5.0, 6.0]])

    def test_dot_product(self):
        out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        assert out.data.shape == (1, 1)
        assert out.data[0, 0] == 11.0

    def test_against_triple_loop_oracle(self, rng):
        a = rng.normal(size=(4, 5))
        b = rng.normal(size=(5, 3))
        out = matmul(Tensor(a), Tensor(b))
        assert np.max(np.abs(out.data - matmul_loops(a, b))) < 1e-12

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))

    def test_gradients(self, rng):
        a = parameter(rng.normal(size=(3, 4)))
        b = parameter(rng.normal(size=(4, 2)))
        mask = Tensor(rng.normal(size=(3, 2)))
        check_gradients(lambda: (matmul(a, b) * mask).sum(), {"a": a, "b": b})


# -- softmax -----------------------------------------------------------------

class TestSoftmax:
    def test_symmetry(self):
        out = softmax(Tensor([0.0, 0.0, 0.0]), axis=0)
        assert np.allclose(out.data, [1 / 3] * 3, atol=1e-15)

    def test_stability_no_overflow(self):
        out = softmax(Tensor([1000.0, 0.0]), axis=0)
        assert np.all(np.isfinite(out.data))
        assert out.data[0] == pytest.approx(1.0)
        assert out.data[1] == pytest.approx(0.0, abs=1e-300)

    def test_direct_formula_oracle(self):
        x = np.array([1.0, 2.0, 3.0])
        expected = np.exp(x) / np.exp(x).sum()
        out = softmax(Tensor(x), axis=0)
        assert np.max(np.abs(out.data - expected)) < 1e-12

    def test_rows_sum_to_one_and_positive(self, rng):
        x = rng.normal(size=(7, 5)) * 10
        out = softmax(Tensor(x), axis=-1)
        assert np.allclose(out.data.sum(axis=-1), 1.0, atol=1e-9)
        assert np.all(out.data > 0)

    def test_axis_out_of_range(self):
        with pytest.raises(ShapeError):
            softmax(Tensor(np.zeros((2, 2))), axis=2)

    def test_gradients(self, rng):
        x = parameter(rng.normal(size=(3, 4)))
        w = Tensor(rng.normal(size=(3, 4)))
        check_gradients(lambda: (softmax(x, axis=1) * w).sum(), {"x": x})


# -- reshape -----------------------------------------------------------------

class TestReshape:
    def test_row_major_order(self):
        out = reshape(Tensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]), (3, 2))
        assert np.array_equal(out.data, [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])

    def test_round_trip(self, rng):
        x = rng.normal(size=(1, 2, 2))
        out = reshape(reshape(Tensor(x), (2, 2)), (1, 2, 2))
        assert np.array_equal(out.data, x)

    def test_element_count_mismatch(self):
        with pytest.raises(ShapeError):
            reshape(Tensor(np.zeros((2, 3))), (4, 2))

    def test_reshape_then_matmul_gradient(self, rng):
        x = parameter(rng.normal(size=(2, 6)))
        w = Tensor(rng.normal(size=(4, 3)))
        check_gradients(lambda: matmul(reshape(x, (3, 4)), w).sum(), {"x": x}, rtol=1e-5)


# -- conv2d ------------------------------------------------------------------

class TestConv2d:
    def test_identity_kernel(self, rng):
        x = rng.normal(size=(1, 3, 3))
        w = np.ones((1, 1, 1, 1))
        out = conv2d(Tensor(x), Tensor(w))
        assert np.array_equal(out.data, x)

    def test_counting_kernel(self):
        x = np.ones((1, 4, 4))
        w = np.ones((1, 1, 2, 2))
        out = conv2d(Tensor(x), Tensor(w), stride=2)
        assert out.data.shape == (1, 2, 2)
        assert np.all(out.data == 4.0)

    def test_output_size_formula(self, rng):
        x = Tensor(rng.normal(size=(2, 9, 7)))
        w = Tensor(rng.normal(size=(3, 2, 3, 3)))
        out = conv2d(x, w, stride=2, padding=1)
        assert out.data.shape == (3, (9 + 2 - 3) // 2 + 1, (7 + 2 - 3) // 2 + 1)

    def test_against_loop_oracle(self, rng):
        for _ in range(3):
            x = rng.normal(size=(2, 6, 5))
            w = rng.normal(size=(3, 2, 3, 3))
            b = rng.normal(size=3)
            out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=1)
            ref = conv2d_loops(x, w, b, stride=2, padding=1)
            assert np.max(np.abs(out.data - ref)) < 1e-12

    def test_kernel_too_large(self):
        with pytest.raises(ShapeError):
            conv2d(Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((1, 1, 5, 5))))

    def test_gradients(self, rng):
        x = parameter(rng.normal(size=(2, 5, 5)))
        w = parameter(rng.normal(size=(3, 2, 3, 3)))
        b = parameter(rng.normal(size=3))
        check_gradients(lambda: conv2d(x, w, b, stride=2, padding=1).sum(),
                        {"x": x, "w": w, "b": b})


# -- linear ------------------------------------------------------------------

class TestLinear:
    def test_identity(self, rng):
        x = rng.normal(size=(5, 3))
        out = linear(Tensor(x), Tensor(np.eye(3)), Tensor(np.zeros(3)))
        assert np.allclose(out.data, x, atol=1e-15)

    def test_zero_weight_gives_bias(self, rng):
        b = rng.normal(size=4)
        out = linear(Tensor(rng.normal(size=(6, 3))), Tensor(np.zeros((3, 4))), Tensor(b))
        assert np.allclose(out.data, np.tile(b, (6, 1)), atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            linear(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_gradients(self, rng):
        x = parameter(rng.normal(size=(4, 3)))
        w = parameter(rng.normal(size=(3, 5)))
        b = parameter(rng.normal(size=5))
        mask = Tensor(rng.normal(size=(4, 5)))
        check_gradients(lambda: (linear(x, w, b) * mask).sum(), {"x": x, "w": w, "b": b})


# -- backward / tape ---------------------------------------------------------

class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = parameter(np.array([1.0, -2.0, 3.0]))
        backward(x.sum())
        assert np.array_equal(x.grad, np.ones(3))

    def test_elementwise_square(self):
        x = parameter(np.array([1.0, 2.0]))
        backward((x * x).sum())
        assert np.allclose(x.grad, [2.0, 4.0], atol=1e-15)

    def test_non_scalar_loss_rejected(self):
        x = parameter(np.ones(3))
        with pytest.raises(ShapeError):
            backward(x * 2.0)

    def test_backward_twice_rejected(self):
        x = parameter(np.ones(3))
        loss = x.sum()
        backward(loss)
        with pytest.raises(GraphError):
            backward(loss)

    def test_accumulation_sums_contributions(self, rng):
        x = parameter(rng.normal(size=4))
        a = Tensor(rng.normal(size=4))
        b = Tensor(rng.normal(size=4))
        backward(((x * a) + (x * b)).sum())
        grad_combined = x.grad.copy()

        x.grad = None
        backward((x * a).sum())
        grad_f = x.grad.copy()
        x.grad = None
        backward((x * b).sum())
        grad_g = x.grad.copy()
        assert np.allclose(grad_combined, grad_f + grad_g, atol=1e-12)

    def test_leaf_grads_survive_nonleaf_released(self):
        x = parameter(np.ones((2, 2)))
        y = x * 3.0
        backward(y.sum())
        assert x.grad is not None
        assert y.grad is None  # intermediate gradients are released

    def test_no_grad_suppresses_recording(self):
        x = parameter(np.ones(2))
        with no_grad():
            y = x * 2.0
        assert y.node is None and not y.requires_grad

    def test_determinism_bit_identical(self):
        def run():
            rng = np.random.default_rng(99)
            x = parameter(rng.normal(size=(6, 6)))
            w = Tensor(rng.normal(size=(6, 6)))
            loss = (softmax(matmul(x, w), axis=-1) * w).sum()
            backward(loss)
            return float(loss.data), x.grad.copy()

        l1, g1 = run()
        l2, g2 = run()
        assert l1 == l2
        assert np.array_equal(g1, g2)


# -- elementwise ops gradient sweep -------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_all_ops_gradients_across_seeds(seed):
    """Every differentiable op against central differences, 10 seeds."""
    rng = np.random.default_rng(seed)
    x = parameter(rng.normal(size=(3, 4)) + 0.1)  # keep away from |x|=0 kinks
    y = parameter(rng.normal(size=(3, 4)) + 3.0)  # positive for log/sqrt/div
    v = parameter(rng.normal(size=(4, 3)))
    mask = Tensor(rng.normal(size=(3, 4)))
    mm_mask = Tensor(rng.normal(size=(3, 3)))

    cases = {
        "add": lambda: ((x + y) * mask).sum(),
        "sub": lambda: ((x - y) * mask).sum(),
        "mul": lambda: ((x * y) * mask).sum(),
        "div": lambda: ((x / y) * mask).sum(),
        "pow": lambda: ((y ** 1.7) * mask).sum(),
        "exp": lambda: (x.exp() * mask).sum(),
        "log": lambda: (y.log() * mask).sum(),
        "sqrt": lambda: (y.sqrt() * mask).sum(),
        "abs": lambda: (x.abs() * mask).sum(),
        "relu": lambda: (x.relu() * mask).sum(),
        "sigmoid": lambda: (x.sigmoid() * mask).sum(),
        "maximum": lambda: (maximum(x, 0.35) * mask).sum(),
        "minimum": lambda: (minimum(x, 0.35) * mask).sum(),
        "mean_axis": lambda: (x.mean(axis=0) * Tensor(np.arange(4.0))).sum(),
        "sum_keepdims": lambda: (x.sum(axis=1, keepdims=True) * Tensor(np.ones((3, 1)))).sum(),
        "transpose": lambda: (transpose(x) * Tensor(mask.data.T)).sum(),
        "narrow": lambda: (narrow(x, 1, 1, 2) * Tensor(mask.data[:, 1:3])).sum(),
        "concat": lambda: (concat([x, y], axis=0) * Tensor(np.vstack([mask.data] * 2))).sum(),
        "standardize": lambda: (standardize(x, axis=-1) * mask).sum(),
        "softmax": lambda: (softmax(x, axis=-1) * mask).sum(),
        "matmul": lambda: (matmul(x, v) * mm_mask).sum(),
    }
    for name, build in cases.items():
        for p in (x, y, v):
            p.grad = None
        loss = build()
        backward(loss)
        for p, pname in ((x, "x"), (y, "y")):
            if p.grad is None:
                continue
            numeric = numeric_grad(lambda: float(build().data), p.data)
            err = max_rel_error(p.grad, numeric)
            assert err < 1e-4, f"op {name}, param {pname}, seed {seed}: rel err {err:.2e}"


# -- debug-mode guards --------------------------------------------------------

class TestDebugChecks:
    def test_nonfinite_output_raises(self):
        set_debug_checks(True)
        try:
            with np.errstate(divide="ignore"), pytest.raises(NumericsError):
                Tensor([1.0]) / Tensor([0.0])
        finally:
            set_debug_checks(False)

    def test_disabled_by_default_allows_inf(self):
        with np.errstate(divide="ignore"):
            out = Tensor([1.0]) / Tensor([0.0])
        assert np.isinf(out.data[0])
