import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sieveate.hermite import (
    H0,
    SieveBasis,
    basis_matrix,
    derivative_matrix,
    eval_basis,
    eval_basis_derivative,
    gauss_hermite_rule,
    orthonormality_defect,
)


def hermite_he_coeffs(m):
    """Integer coefficients (ascending powers) of He_m via He_{j+1} = w He_j - j He_{j-1}."""
    prev, cur = [1], [0, 1]
    if m == 0:
        return prev
    for j in range(1, m):
        nxt = [0] + cur
        for i, c in enumerate(prev):
            nxt[i] -= j * c
        prev, cur = cur, nxt
    return cur


def closed_form(m, w):
    value = sum(c * w**i for i, c in enumerate(hermite_he_coeffs(m)))
    return value / math.sqrt(math.sqrt(2 * math.pi) * math.factorial(m))


def test_constant_function():
    np.testing.assert_allclose(eval_basis(SieveBasis(1), 3.7), [0.6316187], atol=5e-8)
    assert H0 == pytest.approx((2 * math.pi) ** -0.25, rel=1e-15)


def test_linear_term_vanishes_at_origin():
    np.testing.assert_allclose(eval_basis(SieveBasis(2), 0.0), [0.6316187, 0.0], atol=5e-8)


def test_quadratic_term_at_two():
    # (sqrt(2 pi) 2!)^(-1/2) * (2**2 - 1)
    expected = 3.0 / math.sqrt(2.0 * math.sqrt(2 * math.pi))
    assert expected == pytest.approx(1.33987, abs=1e-5)
    assert eval_basis(SieveBasis(3), 2.0)[2] == pytest.approx(expected, rel=1e-14)


def test_derivative_examples():
    np.testing.assert_array_equal(eval_basis_derivative(SieveBasis(1), -1.3), [0.0])
    np.testing.assert_allclose(eval_basis_derivative(SieveBasis(2), 5.0), [0.0, H0], rtol=1e-15)
    assert eval_basis_derivative(SieveBasis(4), 1.0)[3] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_point_rejected(bad):
    with pytest.raises(ValueError):
        eval_basis(SieveBasis(3), bad)
    with pytest.raises(ValueError):
        eval_basis_derivative(SieveBasis(3), bad)


@pytest.mark.parametrize("order", [0, -2, 1.5])
def test_invalid_order(order):
    with pytest.raises(ValueError):
        SieveBasis(order)


@pytest.mark.parametrize("m", range(7))
def test_recurrence_matches_closed_form(m):
    grid = np.linspace(-5, 5, 201)
    got = basis_matrix(grid, m + 1)[:, m]
    want = np.array([closed_form(m, w) for w in grid])
    scale = np.maximum(np.abs(want), 1e-300)
    mask = np.abs(want) > 1e-8
    assert np.max(np.abs(got - want)[mask] / scale[mask]) <= 1e-12
    assert np.max(np.abs(got - want)[~mask], initial=0.0) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(
    w=st.floats(-50, 50, allow_nan=False),
    k=st.integers(2, 30),
    data=st.data(),
)
def test_prefix_consistency(w, k, data):
    j = data.draw(st.integers(1, k - 1))
    np.testing.assert_array_equal(eval_basis(SieveBasis(k), w)[:j], eval_basis(SieveBasis(j), w))


@settings(max_examples=200, deadline=None)
@given(w=st.floats(-5, 5, allow_nan=False), k=st.integers(1, 10))
def test_derivative_matches_central_difference(w, k):
    step = 1e-6
    b = SieveBasis(k)
    fd = (eval_basis(b, w + step) - eval_basis(b, w - step)) / (2 * step)
    np.testing.assert_allclose(eval_basis_derivative(b, w), fd, atol=1e-6, rtol=0)


def test_design_matrix_rows_are_observations():
    pts = np.array([-1.0, 0.0, 2.5])
    B = basis_matrix(pts, 4)
    assert B.shape == (3, 4)
    for row, w in zip(B, pts):
        np.testing.assert_array_equal(row, eval_basis(SieveBasis(4), w))
    dB = derivative_matrix(pts, 4)
    np.testing.assert_array_equal(dB[:, 1:], B[:, :-1] * np.sqrt([1, 2, 3]))


def test_quadrature_rule_weight():
    # integral of exp(-w^2/2) is sqrt(2 pi); second moment likewise
    x, w = gauss_hermite_rule(20)
    assert w.sum() == pytest.approx(math.sqrt(2 * math.pi), rel=1e-13)
    assert (w * x**2).sum() == pytest.approx(math.sqrt(2 * math.pi), rel=1e-12)


@pytest.mark.parametrize(
    "k, nodes, bound",
    [(1, 8, 1e-12), (6, 32, 1e-10), (10, 64, 1e-8)],
)
def test_orthonormality_examples(k, nodes, bound):
    assert orthonormality_defect(SieveBasis(k), nodes) <= bound


@pytest.mark.parametrize("k", range(1, 11))
def test_orthonormality_property(k):
    # 200-node quadrature is exact for these polynomial degrees: an independent reference
    x, w = gauss_hermite_rule(200)
    B = basis_matrix(x, k)
    ref_defect = np.max(np.abs((B * w[:, None]).T @ B - np.eye(k)))
    assert ref_defect <= 1e-10
    assert orthonormality_defect(SieveBasis(k), 64) <= 1e-8


def test_orthonormality_needs_enough_nodes():
    with pytest.raises(ValueError):
        orthonormality_defect(SieveBasis(5), 9)
