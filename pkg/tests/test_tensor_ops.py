"""Tensor primitives against hand computations and explicit-loop oracles."""

import numpy as np
import numpy.testing as npt
import pytest

from flowcorr.errors import DimensionError, ParameterError
from flowcorr.tensor_ops import (
    as_tensor,
    finite_difference_gradient,
    layer_normalize,
    matmul,
    softmax,
)


def test_as_tensor_coerces_to_float64_c_order():
    out = as_tensor([[1, 2], [3, 4]])
    assert out.dtype == np.float64
    assert out.flags["C_CONTIGUOUS"]
    npt.assert_array_equal(out, [[1.0, 2.0], [3.0, 4.0]])

    # Fortran-ordered input comes back contiguous with the same values.
    f_ordered = np.asfortranarray(np.arange(6.0).reshape(2, 3))
    out = as_tensor(f_ordered)
    assert out.flags["C_CONTIGUOUS"]
    npt.assert_array_equal(out, f_ordered)


def test_as_tensor_shape_gate():
    as_tensor(np.zeros((2, 3)), shape=(2, 3))
    with pytest.raises(DimensionError):
        as_tensor(np.zeros((2, 3)), shape=(3, 2))


def test_as_tensor_rejects_non_finite_and_garbage():
    with pytest.raises(ParameterError):
        as_tensor([1.0, np.nan])
    with pytest.raises(ParameterError):
        as_tensor([np.inf, 0.0])
    with pytest.raises(ParameterError):
        as_tensor("not numbers at all")


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n, k, m = rng.integers(1, 6, size=3)
        a = rng.normal(size=(n, k))
        b = rng.normal(size=(k, m))
        want = np.zeros((n, m))
        for i in range(n):
            for j in range(m):
                s = 0.0
                for t in range(k):
                    s += a[i, t] * b[t, j]
                want[i, j] = s
        npt.assert_allclose(matmul(a, b), want, rtol=1e-12, atol=1e-12)


def test_matmul_shape_errors():
    with pytest.raises(DimensionError):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        matmul(np.zeros(3), np.zeros((3, 2)))


def test_softmax_hand_cases():
    npt.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5], atol=1e-15)
    # Large logits must not overflow thanks to the max subtraction.
    out = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(out))
    npt.assert_allclose(out, [1.0, 0.0], atol=1e-12)


def test_softmax_rows_sum_to_one_and_shift_invariance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 7)) * 10.0
    p = softmax(x, axis=1)
    npt.assert_allclose(p.sum(axis=1), np.ones(4), atol=1e-12)
    assert np.all(p >= 0.0)
    npt.assert_allclose(softmax(x + 123.456, axis=1), p, atol=1e-12)
    # Explicit definition on one row.
    e = np.exp(x[0] - x[0].max())
    npt.assert_allclose(p[0], e / e.sum(), rtol=1e-12)


def test_softmax_axis_selection():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    npt.assert_allclose(softmax(x, axis=0).sum(axis=0), [1.0, 1.0], atol=1e-12)
    with pytest.raises(DimensionError):
        softmax(np.zeros((0, 3)))


def test_layer_normalize_matches_explicit_formula():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(3, 4, 5)) * 4.0 + 2.0
    eps, gain, bias = 1e-6, 1.7, -0.3
    mean = x.mean()
    var = ((x - mean) ** 2).mean()
    want = gain * (x - mean) / np.sqrt(var + eps) + bias
    npt.assert_allclose(layer_normalize(x, eps=eps, gain=gain, bias=bias), want, rtol=1e-12)


def test_layer_normalize_output_moments():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(6, 6)) * 9.0
    out = layer_normalize(x, eps=1e-12, gain=2.0, bias=5.0)
    # Statistics are over ALL entries, so the output moments are pinned.
    npt.assert_allclose(out.mean(), 5.0, atol=1e-9)
    npt.assert_allclose(out.std(), 2.0, atol=1e-6)


def test_layer_normalize_constant_input_yields_bias():
    out = layer_normalize(np.full((4, 4), 3.25), eps=1e-6, gain=2.0, bias=0.75)
    npt.assert_allclose(out, np.full((4, 4), 0.75), atol=1e-12)


def test_layer_normalize_parameter_gates():
    with pytest.raises(ParameterError):
        layer_normalize(np.ones(3), eps=0.0)
    with pytest.raises(ParameterError):
        layer_normalize(np.ones(3), eps=-1e-6)
    with pytest.raises(ParameterError):
        layer_normalize(np.ones(3), gain=0.0)
    with pytest.raises(DimensionError):
        layer_normalize(np.zeros((0,)))


def test_finite_difference_gradient_against_chain_rule():
    # f(x) = sum(sin(x) * x^2) has gradient cos(x)*x^2 + 2*x*sin(x).
    rng = np.random.default_rng(4)
    x = rng.uniform(-1.5, 1.5, size=(3, 4))

    def f(v):
        return float(np.sum(np.sin(v) * v**2))

    want = np.cos(x) * x**2 + 2.0 * x * np.sin(x)
    got = finite_difference_gradient(f, x, h=1e-6)
    npt.assert_allclose(got, want, rtol=1e-7, atol=1e-9)


def test_finite_difference_gradient_step_gate():
    with pytest.raises(ParameterError):
        finite_difference_gradient(lambda v: 0.0, np.ones(2), h=0.0)
