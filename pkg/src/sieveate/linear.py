"""Parametric building blocks: logistic GLM by Newton-Raphson and OLS."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

__all__ = ["EstimationError", "OLSResult", "logit_glm", "ols"]


class EstimationError(RuntimeError):
    """An estimator could not produce a result for the given data."""


def logit_glm(X, d, intercept=True, max_iter=100, tol=1e-10):
    """Maximum-likelihood logistic regression of ``d`` on ``X``.

    Returns the coefficient vector (intercept first when ``intercept``).
    Quasi-separated data converge to large but finite coefficients because
    the linear predictor is clipped at +-30.
    """
    X = np.asarray(X, dtype=float)
    d = np.asarray(d, dtype=float)
    Z = np.column_stack([np.ones(len(d)), X]) if intercept else X
    b = np.zeros(Z.shape[1])
    n = len(d)

    def nll(beta):
        eta = np.clip(Z @ beta, -30.0, 30.0)
        return np.mean(np.logaddexp(0.0, eta) - d * eta)

    cur = nll(b)
    for _ in range(max_iter):
        mu = expit(np.clip(Z @ b, -30.0, 30.0))
        grad = Z.T @ (mu - d) / n
        hess = (Z * (mu * (1 - mu))[:, None]).T @ Z / n
        try:
            step = np.linalg.solve(hess + 1e-12 * np.eye(len(b)), grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            cand = b - t * step
            new = nll(cand)
            if new <= cur:
                break
            t *= 0.5
        else:
            break
        b, prev, cur = cand, cur, new
        if prev - cur <= tol * max(abs(prev), 1e-300):
            break
    return b


class OLSResult:
    """Least-squares fit with conventional (homoskedastic) standard errors."""

    def __init__(self, coef, std_error, resid, df_resid):
        self.coef = coef
        self.std_error = std_error
        self.resid = resid
        self.df_resid = df_resid


def ols(design, y, names=None):
    """OLS of ``y`` on the columns of ``design``.

    Raises :class:`EstimationError` naming the first column that is linearly
    dependent on the ones before it.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, q = design.shape
    names = names or [f"column {j}" for j in range(q)]
    rank = np.linalg.matrix_rank(design)
    if rank < q:
        for j in range(1, q + 1):
            if np.linalg.matrix_rank(design[:, :j]) < j:
                raise EstimationError(f"design matrix is rank deficient at column '{names[j - 1]}'")
    if n <= q:
        raise EstimationError(f"need more than {q} observations for OLS, got {n}")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    s2 = resid @ resid / (n - q)
    cov = s2 * np.linalg.inv(design.T @ design)
    return OLSResult(coef, np.sqrt(np.diag(cov)), resid, n - q)
