"""Orthonormal Hermite functions under the Gaussian weight ``exp(-w**2 / 2)``.

``h_m(w) = (sqrt(2 pi) m!)^(-1/2) He_m(w)`` where ``He_m`` is the probabilists'
Hermite polynomial. Values are produced with the normalized three-term
recurrence so that no factorials are ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "H0",
    "SieveBasis",
    "basis_matrix",
    "derivative_matrix",
    "eval_basis",
    "eval_basis_derivative",
    "gauss_hermite_rule",
    "orthonormality_defect",
]

H0 = (2.0 * np.pi) ** -0.25


def _check_finite(omega):
    omega = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(omega)):
        raise ValueError("Hermite basis evaluated at a non-finite point")
    return omega


def basis_matrix(omega, k):
    """Evaluate ``h_0 .. h_{k-1}`` at every point of ``omega``.

    Parameters
    ----------
    omega : array_like, shape (n,)
        Evaluation points.
    k : int
        Number of basis functions.

    Returns
    -------
    numpy.ndarray, shape (n, k)
        One row per point.
    """
    omega = _check_finite(omega)
    if k < 1:
        raise ValueError(f"basis order must be >= 1, got {k}")
    flat = omega.reshape(-1)
    out = np.empty((flat.size, k))
    out[:, 0] = H0
    if k > 1:
        out[:, 1] = flat * H0
    for m in range(1, k - 1):
        out[:, m + 1] = (flat * out[:, m] - np.sqrt(m) * out[:, m - 1]) / np.sqrt(m + 1)
    return out


def derivative_matrix(omega, k, values=None):
    """First derivatives of the basis, using ``h_m' = sqrt(m) h_{m-1}``.

    ``values`` may carry a precomputed ``basis_matrix(omega, k)``.
    """
    if values is None:
        values = basis_matrix(omega, k)
    out = np.zeros_like(values)
    if k > 1:
        out[:, 1:] = values[:, :-1] * np.sqrt(np.arange(1, k))
    return out


@dataclass(frozen=True)
class SieveBasis:
    """The first ``order`` orthonormal Hermite functions."""

    order: int

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"basis order must be a positive integer, got {self.order!r}")

    def values(self, omega):
        return basis_matrix(omega, self.order)

    def derivatives(self, omega):
        return derivative_matrix(omega, self.order)


def eval_basis(basis, omega):
    """Return ``(h_0(omega), ..., h_{k-1}(omega))`` for a scalar ``omega``."""
    if not np.isscalar(omega) and np.ndim(omega) != 0:
        raise ValueError("eval_basis takes a scalar; use basis_matrix for samples")
    return basis_matrix(np.array([omega]), basis.order)[0]


def eval_basis_derivative(basis, omega):
    """Return ``(h_0'(omega), ..., h_{k-1}'(omega))`` for a scalar ``omega``."""
    if not np.isscalar(omega) and np.ndim(omega) != 0:
        raise ValueError("eval_basis_derivative takes a scalar")
    return derivative_matrix(np.array([omega]), basis.order)[0]


def gauss_hermite_rule(nodes):
    """Nodes and weights integrating against ``exp(-w**2 / 2)`` on the real line.

    Built from the physicists' rule (weight ``exp(-t**2)``) by ``w = sqrt(2) t``.
    """
    t, wt = np.polynomial.hermite.hermgauss(nodes)
    return np.sqrt(2.0) * t, np.sqrt(2.0) * wt


def orthonormality_defect(basis, quadrature_nodes):
    """Largest deviation of the quadrature Gram matrix from the identity."""
    if quadrature_nodes < 2 * basis.order:
        raise ValueError(
            f"need at least {2 * basis.order} quadrature nodes for order "
            f"{basis.order}, got {quadrature_nodes}"
        )
    x, w = gauss_hermite_rule(quadrature_nodes)
    B = basis_matrix(x, basis.order)
    gram = (B * w[:, None]).T @ B
    return float(np.max(np.abs(gram - np.eye(basis.order))))
