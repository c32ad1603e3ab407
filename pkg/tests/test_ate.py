import math
import warnings

import numpy as np
import pytest
from scipy.special import expit
from scipy.stats import norm

from sieveate.ate import (
    METHODS,
    AteEstimate,
    estimate,
    estimate_proposed,
    estimate_ps_regression,
    estimate_ps_residual,
    residual_on_residual,
    theorem3_variance,
)
from sieveate.data import Dataset
from sieveate.linear import EstimationError, logit_glm
from sieveate.sieve import FitOptions, fit_nuisance, predict
from sieveate.simlab import ScenarioSpec, generate

FIXED = FitOptions(k=4)


def normal_equations_slope(design, y, column):
    """Hand-rolled OLS: solve (X'X) b = X'y and return b[column] with its classical SE."""
    xtx = design.T @ design
    b = np.linalg.solve(xtx, design.T @ y)
    resid = y - design @ b
    s2 = resid @ resid / (design.shape[0] - design.shape[1])
    return b[column], math.sqrt(s2 * np.linalg.inv(xtx)[column, column])


def quiet(fn, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kwargs)


# --- closed-form pieces ---------------------------------------------------


def test_seam_hand_example():
    est = residual_on_residual([1.0, -1.0, 2.0, 0.0], [0.5, -0.5, 0.5, -0.5])
    assert est.alpha == pytest.approx(2.0, abs=1e-15)
    assert est.diagnostics["psi"] == pytest.approx(0.25, abs=1e-15)
    assert est.diagnostics["sigma_sq"] == pytest.approx(0.5, abs=1e-15)
    assert est.std_error == pytest.approx(math.sqrt(0.5 / (4 * 0.25)), rel=1e-15)


def test_seam_exact_proportionality():
    e_d = np.array([0.3, -0.7, 0.1, 0.4, -0.2])
    est = residual_on_residual(0.5 * e_d, e_d)
    assert est.alpha == pytest.approx(0.5, abs=1e-15)
    assert est.diagnostics["sigma_sq"] == pytest.approx(0.0, abs=1e-30)


def test_theorem3_variance_examples():
    assert theorem3_variance([0.5] * 4, [1.0, 2.0, 0.0, 3.0], 0.0)[1] == 0.25
    e_d = np.array([0.2, -0.1, 0.6])
    assert theorem3_variance(e_d, 1.5 * e_d, 1.5)[0] == pytest.approx(0.0, abs=1e-30)
    assert theorem3_variance([0.5, -0.5, 0.5, -0.5], [1, -1, 2, 0], 2.0) == pytest.approx((0.5, 0.25))


@pytest.mark.parametrize("e_d, e_y", [([], []), ([1.0, 2.0], [1.0])])
def test_theorem3_variance_bad_input(e_d, e_y):
    with pytest.raises(ValueError):
        theorem3_variance(e_d, e_y, 0.0)


def test_degenerate_treatment_residuals():
    with pytest.raises(EstimationError, match="no variation"):
        residual_on_residual([1.0, 2.0, 3.0], [1e-7, -1e-7, 0.0])


def test_interval_and_p_value_invariants():
    rng = np.random.default_rng(4)
    for _ in range(50):
        a, se = rng.normal(0, 2), rng.uniform(0.01, 3)
        est = AteEstimate(a, se, "proposed")
        assert abs(est.ci_low - (a - 1.96 * se)) <= 1e-12
        assert abs(est.ci_high - (a + 1.96 * se)) <= 1e-12
        assert abs(est.p_value - 2 * norm.sf(abs(a / se))) <= 1e-12
        assert 0.0 <= est.p_value <= 1.0


def test_record_is_flat():
    est = residual_on_residual([1.0, -1.0, 2.0, 0.0], [0.5, -0.5, 0.5, -0.5], diagnostics={"k_outcome": 3})
    rec = est.to_record()
    assert set(rec) == {
        "method", "alpha", "std_error", "ci_low", "ci_high", "p_value", "k_outcome", "k_treatment", "warnings",
    }
    assert rec["k_outcome"] == 3 and rec["k_treatment"] is None


# --- oracle equivalence ---------------------------------------------------


def fixture(seed, n=250, scenario="I", alpha=0.5):
    return generate(ScenarioSpec(scenario, n, alpha), [2024, seed])


@pytest.mark.parametrize("seed", range(20))
def test_proposed_is_no_intercept_slope(seed):
    data = fixture(seed, scenario="I II III".split()[seed % 3])
    est = quiet(estimate_proposed, data, FIXED)
    ps = quiet(fit_nuisance, data, "logistic", FIXED)
    c, s = data.outcome.mean(), data.outcome.std()
    om = quiet(fit_nuisance, Dataset((data.outcome - c) / s, data.treatment, data.covariates), "gaussian", FIXED)
    e_d = data.treatment - predict(ps, data.covariates)
    e_y = s * ((data.outcome - c) / s - predict(om, data.covariates))
    slope, _ = normal_equations_slope(e_d[:, None], e_y, 0)
    assert abs(est.alpha - slope) <= 1e-10
    assert est.std_error > 0


@pytest.mark.parametrize("seed", range(20))
def test_competitors_match_normal_equations(seed):
    data = fixture(seed, scenario="I II III".split()[seed % 3])
    b = logit_glm(data.covariates, data.treatment)
    s = data.covariates @ b[1:]
    p = expit(b[0] + s)
    one = np.ones(data.n)
    a_r, se_r = normal_equations_slope(np.column_stack([one, data.treatment, p]), data.outcome, 1)
    a_l, se_l = normal_equations_slope(np.column_stack([one, data.treatment - p, s, s**2, s**3]), data.outcome, 1)
    r = estimate_ps_regression(data)
    lres = estimate_ps_residual(data)
    assert abs(r.alpha - a_r) <= 1e-8 and abs(r.std_error - se_r) <= 1e-8
    assert abs(lres.alpha - a_l) <= 1e-8 and abs(lres.std_error - se_l) <= 1e-8


# --- invariances ----------------------------------------------------------


def noiseless(seed, n=300):
    rng = np.random.default_rng([5, seed])
    X = rng.standard_normal((n, 3))
    d = (rng.random(n) < expit(X @ [0.8, 0.0, -0.6])).astype(float)
    y = 0.5 * d + X @ [0.4, 0.0, 0.917]
    return Dataset(y, d, X)


@pytest.mark.parametrize("seed", range(3))
def test_location_invariance(seed):
    data = noiseless(seed)
    shifted = Dataset(data.outcome + 3.0, data.treatment, data.covariates)
    a = quiet(estimate_proposed, data, FIXED).alpha
    b = quiet(estimate_proposed, shifted, FIXED).alpha
    assert abs(a - b) <= 1e-8


@pytest.mark.parametrize("seed", range(3))
def test_label_symmetry(seed):
    data = fixture(seed, n=400)
    flipped = Dataset(data.outcome, 1.0 - data.treatment, data.covariates)
    a = quiet(estimate_proposed, data, FIXED)
    b = quiet(estimate_proposed, flipped, FIXED)
    assert a.diagnostics["converged_treatment"] and b.diagnostics["converged_treatment"]
    assert abs(a.alpha + b.alpha) <= 1e-6


def test_standard_error_halves_with_stacking():
    data = fixture(0, n=400)
    a = quiet(estimate_proposed, data, FIXED)
    b = quiet(estimate_proposed, data.stacked(2), FIXED)
    assert b.std_error == pytest.approx(a.std_error / math.sqrt(2), rel=0.05)


# --- competitor examples --------------------------------------------------


def test_proposed_is_affine_equivariant_in_outcome():
    data = fixture(4)
    grams = Dataset(3400.0 + 500.0 * data.outcome, data.treatment, data.covariates)
    a = quiet(estimate_proposed, data, FIXED)
    b = quiet(estimate_proposed, grams, FIXED)
    assert b.alpha == pytest.approx(500.0 * a.alpha, rel=1e-8)
    assert b.std_error == pytest.approx(500.0 * a.std_error, rel=1e-8)
    assert not any("norm bound" in w for w in b.warnings)


def test_ps_regression_randomized_design():
    rng = np.random.default_rng(11)
    n = 2000
    X = rng.standard_normal((n, 3))
    d = (rng.random(n) < 0.5).astype(float)
    y = 0.5 * d + rng.standard_normal(n)
    est = estimate_ps_regression(Dataset(y, d, X))
    assert abs(est.alpha - 0.5) <= 3 * est.std_error


def test_ps_residual_constant_outcome():
    data = fixture(1)
    const = Dataset(np.full(data.n, 7.25), data.treatment, data.covariates)
    assert abs(estimate_ps_residual(const).alpha) <= 1e-12


def test_ps_regression_collinear_propensity():
    # a single binary covariate that equals D makes p_hat an affine function of D
    n = 60
    d = np.tile([0.0, 1.0], n // 2)
    with pytest.raises(EstimationError):
        estimate_ps_regression(Dataset(np.arange(n, dtype=float), d, d[:, None]))


def test_proposed_reports_nuisance_diagnostics():
    est = quiet(estimate_proposed, fixture(2), FIXED)
    d = est.diagnostics
    assert d["k_outcome"] == 4 and d["k_treatment"] == 4
    assert {"psi", "sigma_sq", "converged_outcome", "converged_treatment"} <= set(d)
    assert est.std_error == pytest.approx(math.sqrt(d["sigma_sq"] / (250 * d["psi"])), rel=1e-14)


def test_positivity_warning_recorded():
    rng = np.random.default_rng(3)
    n = 300
    X = rng.standard_normal((n, 2))
    d = (rng.random(n) < expit(12 * X[:, 0])).astype(float)
    y = d + X[:, 1] + rng.standard_normal(n)
    est = estimate_ps_regression(Dataset(y, d, X))
    assert any("positivity" in w for w in est.warnings)


def test_dispatcher():
    data = fixture(3)
    for method in METHODS:
        assert quiet(estimate, data, method, FIXED).method == method
    with pytest.raises(ValueError, match="unknown method"):
        estimate(data, "ipw")
