"""Average treatment effect estimators.

``proposed``
    Residual-on-residual regression with single-index sieve fits for both
    ``E[D | X]`` (logistic) and ``E[Y | X]`` (gaussian, fitted to the
    standardized outcome).
``ps_regression``
    OLS of ``Y`` on ``(1, D, p_hat)`` with ``p_hat`` from a linear logit.
``ps_residual``
    OLS of ``Y`` on ``(1, D - p_hat, s, s**2, s**3)`` where ``s`` is the
    estimated linear logit index.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .data import Dataset
from .linear import EstimationError, logit_glm, ols
from .sieve import FitOptions, fit_nuisance, predict

__all__ = [
    "METHODS",
    "Z95",
    "AteEstimate",
    "estimate",
    "estimate_proposed",
    "estimate_ps_regression",
    "estimate_ps_residual",
    "residual_on_residual",
    "theorem3_variance",
]

METHODS = ("proposed", "ps_regression", "ps_residual")
Z95 = 1.96
POSITIVITY_EPS = 1e-6
MAX_CONDITION = 1e10


@dataclass(frozen=True)
class AteEstimate:
    """Point estimate with a 95% normal interval and two-sided p-value."""

    alpha: float
    std_error: float
    method: str
    diagnostics: dict = field(default_factory=dict)
    warnings: tuple = ()

    @property
    def ci_low(self):
        return self.alpha - Z95 * self.std_error

    @property
    def ci_high(self):
        return self.alpha + Z95 * self.std_error

    @property
    def z(self):
        return self.alpha / self.std_error if self.std_error > 0 else math.copysign(math.inf, self.alpha)

    @property
    def p_value(self):
        if self.std_error == 0:
            return 0.0 if self.alpha != 0 else 1.0
        return float(2.0 * norm.sf(abs(self.z)))

    def covers(self, value):
        return self.ci_low <= value <= self.ci_high

    def to_record(self):
        """Flat, JSON-friendly record."""
        return {
            "method": self.method,
            "alpha": self.alpha,
            "std_error": self.std_error,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "p_value": self.p_value,
            "k_outcome": self.diagnostics.get("k_outcome"),
            "k_treatment": self.diagnostics.get("k_treatment"),
            "warnings": list(self.warnings),
        }


def theorem3_variance(e_d, e_y, alpha):
    """Plug-in ``(sigma^2, Psi)`` for the limiting variance ``sigma^2 / Psi``."""
    e_d = np.asarray(e_d, dtype=float)
    e_y = np.asarray(e_y, dtype=float)
    if e_d.size == 0 or e_y.size == 0:
        raise ValueError("residual vectors are empty")
    if e_d.shape != e_y.shape:
        raise ValueError(f"residual lengths differ: {e_d.shape} vs {e_y.shape}")
    r = e_y - alpha * e_d
    return float(np.mean(r * r)), float(np.mean(e_d * e_d))


def residual_on_residual(e_y, e_d, method="proposed", diagnostics=None, notes=()):
    """No-intercept slope of outcome residuals on treatment residuals."""
    e_y = np.asarray(e_y, dtype=float)
    e_d = np.asarray(e_d, dtype=float)
    denom = float(e_d @ e_d)
    if denom < 1e-10:
        raise EstimationError("treatment residuals have (numerically) no variation")
    alpha = float(e_y @ e_d) / denom
    sigma_sq, psi = theorem3_variance(e_d, e_y, alpha)
    se = math.sqrt(sigma_sq / (e_d.size * psi))
    diag = dict(diagnostics or {})
    diag.update(sigma_sq=sigma_sq, psi=psi)
    return AteEstimate(alpha, se, method, diag, tuple(notes))


def _positivity_notes(p_hat):
    lo = int(np.sum(p_hat < POSITIVITY_EPS))
    hi = int(np.sum(p_hat > 1 - POSITIVITY_EPS))
    if lo or hi:
        return [f"positivity: {lo} propensities below {POSITIVITY_EPS:g}, {hi} above {1 - POSITIVITY_EPS:g}"]
    return []


def estimate_proposed(data, options=None):
    """Residual-on-residual estimate with sieve single-index nuisance fits."""
    options = options or FitOptions()
    # the outcome fit runs on the standardized outcome so the coefficient bound is unit-free
    center = float(np.mean(data.outcome))
    scale = float(np.std(data.outcome)) or 1.0
    scaled = Dataset((data.outcome - center) / scale, data.treatment, data.covariates, data.column_names)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ps = fit_nuisance(data, "logistic", options)
        om = fit_nuisance(scaled, "gaussian", options)
    notes = list(dict.fromkeys(str(w.message) for w in caught))
    p_hat = predict(ps, data.covariates)
    notes += _positivity_notes(p_hat)
    diagnostics = {
        "k_treatment": ps.order,
        "k_outcome": om.order,
        "converged_treatment": ps.converged,
        "converged_outcome": om.converged,
        "theta_treatment": ps.theta.tolist(),
        "theta_outcome": om.theta.tolist(),
    }
    e_d = data.treatment - p_hat
    e_y = scale * (scaled.outcome - predict(om, data.covariates))
    return residual_on_residual(e_y, e_d, "proposed", diagnostics, notes)


def _linear_propensity(data):
    b = logit_glm(data.covariates, data.treatment)
    index = data.covariates @ b[1:]
    return expit(np.clip(b[0] + index, -30.0, 30.0)), index


def estimate_ps_regression(data, options=None):
    """Covariate adjustment by the estimated propensity score."""
    p_hat, _ = _linear_propensity(data)
    design = np.column_stack([np.ones(data.n), data.treatment, p_hat])
    cond = np.linalg.cond(design)
    if not cond < MAX_CONDITION:
        raise EstimationError(f"treatment and propensity score are collinear (condition number {cond:.3g})")
    res = ols(design, data.outcome, ["intercept", "treatment", "propensity"])
    return AteEstimate(
        float(res.coef[1]),
        float(res.std_error[1]),
        "ps_regression",
        {"condition_number": float(cond)},
        tuple(_positivity_notes(p_hat)),
    )


def estimate_ps_residual(data, options=None):
    """Propensity-score residual regression with a cubic in the estimated index."""
    p_hat, s = _linear_propensity(data)
    design = np.column_stack([np.ones(data.n), data.treatment - p_hat, s, s**2, s**3])
    names = ["intercept", "treatment residual", "index", "index^2", "index^3"]
    res = ols(design, data.outcome, names)
    return AteEstimate(
        float(res.coef[1]),
        float(res.std_error[1]),
        "ps_residual",
        {},
        tuple(_positivity_notes(p_hat)),
    )


_ESTIMATORS = {
    "proposed": estimate_proposed,
    "ps_regression": estimate_ps_regression,
    "ps_residual": estimate_ps_residual,
}


def estimate(data, method, options=None):
    try:
        fn = _ESTIMATORS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}") from None
    return fn(data, options)
