"""Single-index models with a Hermite sieve link.

Two families share one fitting routine:

``logistic``
    ``P(D = 1 | X) = expit(g(X @ theta))``, fitted by minimizing the mean
    negative log-likelihood.
``gaussian``
    ``E[Y | X] = g(X @ theta)``, fitted by minimizing the mean squared error.

In both, ``g(w) = basis_matrix(w, k) @ coef`` and ``theta`` lives on the unit
sphere with a non-negative first coordinate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset
from .hermite import basis_matrix, derivative_matrix
from .linear import logit_glm

__all__ = [
    "FAMILIES",
    "ConvergenceWarning",
    "FitOptions",
    "SieveFit",
    "SieveFitError",
    "cross_validate",
    "fit",
    "fit_nuisance",
    "fit_path",
    "gaussian_loss",
    "logistic_loss",
    "loss_gradient",
    "normalize_index",
    "predict",
    "select_k",
]

FAMILIES = ("logistic", "gaussian")
MAX_HALVINGS = 30
BALL_RTOL = 1e-3


class SieveFitError(RuntimeError):
    """The sieve problem is ill-posed for the data at hand."""


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FitOptions:
    """Tuning knobs shared by the sieve fits and the estimators built on them.

    ``k=None`` selects the order by ``folds``-fold cross-validation over
    ``k_grid``; an integer fixes it.
    """

    tolerance: float = 1e-8
    max_iterations: int = 500
    k: int | None = None
    k_grid: tuple = tuple(range(2, 11))
    folds: int = 5
    clamp: float = 30.0
    coef_bound: float = 1e3

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not self.k_grid or min(self.k_grid) < 1:
            raise ValueError(f"k_grid must be nonempty with entries >= 1, got {self.k_grid!r}")
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if self.tolerance <= 0 or self.max_iterations < 1:
            raise ValueError("tolerance must be positive and max_iterations >= 1")
        object.__setattr__(self, "k_grid", tuple(int(k) for k in self.k_grid))


@dataclass(frozen=True, eq=False)
class SieveFit:
    theta: np.ndarray
    coef: np.ndarray
    family: str
    order: int
    final_loss: float
    iterations: int
    converged: bool
    loss_trace: tuple = ()
    warnings: tuple = ()
    clamp: float = 30.0
    coef_bound: float = 1e3
    cv_scores: dict = field(default_factory=dict)

    def index(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.theta.shape[0]:
            raise ValueError(f"expected {self.theta.shape[0]} covariate columns, got shape {X.shape}")
        return X @ self.theta

    def link(self, X):
        """Fitted link ``g(X @ theta)`` (the linear predictor for ``logistic``)."""
        return basis_matrix(self.index(X), self.order) @ self.coef


def _target(data, family):
    if family == "logistic":
        return data.treatment
    if family == "gaussian":
        return data.outcome
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def normalize_index(theta, coef=None):
    """Scale ``theta`` to unit norm and flip it so the first entry is >= 0.

    When ``coef`` is given, the flip is absorbed into the link through
    ``h_m(-w) = (-1)**m h_m(w)`` and the adjusted coefficients are returned too.
    """
    theta = np.asarray(theta, dtype=float)
    theta = theta / np.linalg.norm(theta)
    flip = theta[0] < 0
    if flip:
        theta = -theta
    if coef is None:
        return theta
    coef = np.asarray(coef, dtype=float)
    if flip:
        coef = coef * (-1.0) ** np.arange(len(coef))
    return theta, coef


def _pointwise_loss(eta, target, family, clamp):
    if family == "gaussian":
        r = target - eta
        return r * r
    e = np.clip(eta, -clamp, clamp)
    return np.logaddexp(0.0, e) - target * e


def _check_dims(data, theta, coef):
    theta = np.asarray(theta, dtype=float)
    coef = np.asarray(coef, dtype=float)
    if theta.ndim != 1 or theta.shape[0] != data.p:
        raise ValueError(f"index has {theta.size} entries for {data.p} covariates")
    if coef.ndim != 1 or coef.size < 1:
        raise ValueError("sieve coefficients must be a nonempty vector")
    return theta, coef


def _loss(data, theta, coef, family, clamp):
    theta, coef = _check_dims(data, theta, coef)
    eta = basis_matrix(data.covariates @ theta, coef.size) @ coef
    return float(np.mean(_pointwise_loss(eta, _target(data, family), family, clamp)))


def logistic_loss(data, theta, coef, clamp=30.0):
    """Mean negative Bernoulli log-likelihood of the treatment indicator."""
    return _loss(data, theta, coef, "logistic", clamp)


def gaussian_loss(data, theta, coef):
    """Mean squared error of the outcome."""
    return _loss(data, theta, coef, "gaussian", np.inf)


def _eta_scores(eta, target, family, clamp):
    """Derivative of the mean loss with respect to each linear predictor."""
    n = target.shape[0]
    if family == "gaussian":
        return -2.0 * (target - eta) / n
    return -(target - expit(np.clip(eta, -clamp, clamp))) / n


def loss_gradient(data, theta, coef, family, clamp=30.0):
    """Analytic gradient ``(dL/dtheta, dL/dcoef)`` of the family's loss.

    ``theta`` is treated as unconstrained here; callers project as needed.
    """
    theta, coef = _check_dims(data, theta, coef)
    target = _target(data, family)
    X = data.covariates
    B = basis_matrix(X @ theta, coef.size)
    dB = derivative_matrix(None, coef.size, B)
    s = _eta_scores(B @ coef, target, family, clamp)
    return X.T @ (s * (dB @ coef)), B.T @ s


class _Problem:
    """Array-level view of one sieve fit; keeps the hot loop free of validation."""

    def __init__(self, X, target, family, k, options):
        self.X = X
        self.t = target
        self.family = family
        self.k = k
        self.clamp = options.clamp
        self.bound = options.coef_bound
        self.n = target.shape[0]
        self.bound_hit = False

    def basis(self, theta):
        return basis_matrix(self.X @ theta, self.k)

    def loss(self, eta):
        if self.family == "gaussian":
            r = self.t - eta
            return float(r @ r) / self.n
        e = np.minimum(np.maximum(eta, -self.clamp), self.clamp)
        return float(np.logaddexp(0.0, e).sum() - self.t @ e) / self.n

    def _newton(self, B, coef, ridge=0.0):
        """Damped Newton for the ridge-penalized logistic loss in ``coef``."""
        eta = B @ coef
        k = coef.size

        def objective(c, e):
            return self.loss(e) + ridge * (c @ c)

        cur = objective(coef, eta)
        for _ in range(50):
            mu = expit(np.minimum(np.maximum(eta, -self.clamp), self.clamp))
            grad = B.T @ (mu - self.t) / self.n + 2.0 * ridge * coef
            hess = (B.T * (mu * (1.0 - mu))) @ B / self.n
            hess.flat[:: k + 1] += 2.0 * ridge + 1e-12
            try:
                step = np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(hess, grad, rcond=None)[0]
            decrement = grad @ step
            if not decrement > 1e-13:
                break
            s = 1.0
            for _ in range(MAX_HALVINGS):
                cand = coef - s * step
                cand_eta = B @ cand
                new = objective(cand, cand_eta)
                if new <= cur - 1e-4 * s * decrement:
                    break
                s *= 0.5
            else:
                break
            coef, eta, prev, cur = cand, cand_eta, cur, new
            if prev - cur <= 1e-14 * max(abs(prev), 1e-300):
                break
        return coef

    def _ridge_solution(self, B, ridge, start):
        if self.family == "gaussian":
            k = B.shape[1]
            return np.linalg.solve(B.T @ B / self.n + ridge * np.eye(k), B.T @ self.t / self.n)
        return self._newton(B, start, ridge)

    def _onto_ball(self, B, coef):
        """Minimizer over ``||coef|| <= bound`` given the unconstrained ``coef``.

        The loss is convex in ``coef``, so the constrained minimizer solves a
        ridge problem whose multiplier puts the norm on the bound. The root of
        ``log||c(lam)|| - log(bound)`` in ``log(lam)`` is bracketed starting
        from the KKT multiplier at the radially shrunk point, then refined by
        Illinois regula falsi to a relative norm error of ``BALL_RTOL``.
        """
        norm = np.linalg.norm(coef)
        if norm <= self.bound:
            return coef
        self.bound_hit = True
        log_m = np.log(self.bound)
        shrunk = coef * (self.bound / norm)
        eta = B @ shrunk
        if self.family == "gaussian":
            grad = -2.0 * B.T @ (self.t - eta) / self.n
        else:
            grad = B.T @ (expit(np.clip(eta, -self.clamp, self.clamp)) - self.t) / self.n
        x = np.log(max(np.linalg.norm(grad) / (2.0 * self.bound), 1e-14))

        def excess(log_lam, start):
            c = self._ridge_solution(B, np.exp(log_lam), start)
            return np.log(np.linalg.norm(c)) - log_m, c

        f, c = excess(x, shrunk)
        step = np.log(10.0)
        if f > 0:
            a, fa = x, f
            b, (fb, cb) = x + step, excess(x + step, c)
            while fb > 0:
                a, fa = b, fb
                b += step
                fb, cb = excess(b, cb)
        else:
            b, fb, cb = x, f, c
            a, (fa, ca) = x - step, excess(x - step, c)
            while fa <= 0 and a > -60.0:
                b, fb, cb = a, fa, ca
                a -= step
                fa, ca = excess(a, ca)
            if fa <= 0:
                return cb
        side = 0
        for _ in range(100):
            if fb > -BALL_RTOL:
                break
            x = (a * fb - b * fa) / (fb - fa)
            fx, cx = excess(x, cb)
            if fx > 0:
                a, fa = x, fx
                if side == -1:
                    fb *= 0.5
                side = -1
            else:
                b, fb, cb = x, fx, cx
                if side == 1:
                    fa *= 0.5
                side = 1
        return cb

    def solve_coef(self, theta, start=None):
        """Minimize over the sieve coefficients with ``theta`` held fixed."""
        B = self.basis(theta)
        if self.family == "gaussian":
            coef, _, rank, _ = np.linalg.lstsq(B, self.t, rcond=None)
            if rank < self.k:
                raise SieveFitError(
                    f"basis design matrix is rank deficient (rank {rank} < order {self.k})"
                )
        else:
            coef = self._newton(B, np.zeros(self.k) if start is None else start.copy())
        coef = self._onto_ball(B, coef)
        return coef, self.loss(B @ coef), B

    def index_direction(self, theta, coef, B):
        """Tangent-space Gauss-Newton (Fisher-scoring) direction for ``theta``."""
        eta = B @ coef
        slope = derivative_matrix(None, self.k, B) @ coef
        s = _eta_scores(eta, self.t, self.family, self.clamp)
        grad = self.X.T @ (s * slope)
        P = np.eye(theta.size) - np.outer(theta, theta)
        pg = P @ grad
        if self.family == "gaussian":
            w = np.full(self.n, 2.0 / self.n)
        else:
            mu = expit(np.clip(eta, -self.clamp, self.clamp))
            w = mu * (1.0 - mu) / self.n
        A = (self.X * (w * slope * slope)[:, None]).T @ self.X
        PAP = P @ A @ P
        ridge = 1e-10 * max(np.trace(PAP), 1e-300)
        try:
            d = np.linalg.solve(PAP + ridge * P + np.outer(theta, theta), -pg)
        except np.linalg.LinAlgError:
            d = -pg
        if not d @ pg < 0:
            d = -pg
        return d, pg


def _initial_index(X, target, family):
    if family == "logistic":
        slopes = logit_glm(X, target)[1:]
    else:
        Z = np.column_stack([np.ones(len(target)), X])
        slopes = np.linalg.lstsq(Z, target, rcond=None)[0][1:]
    if not np.all(np.isfinite(slopes)) or np.linalg.norm(slopes) < 1e-12:
        slopes = np.zeros(X.shape[1])
        slopes[0] = 1.0
    return normalize_index(slopes)


def _check_fit_inputs(data, k, family):
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if k < 1:
        raise ValueError(f"sieve order must be >= 1, got {k}")
    if data.n < data.p + k:
        raise SieveFitError(f"n={data.n} is too small for p={data.p} covariates and order k={k}")
    spread = np.ptp(data.covariates, axis=0)
    for name, s in zip(data.column_names, spread):
        if s == 0:
            raise SieveFitError(f"covariate '{name}' is constant; the index direction is unidentifiable")


def _optimize(prob, theta, options):
    coef, loss, B = prob.solve_coef(theta)
    trace = [loss]
    converged = False
    iterations = 0
    for iterations in range(1, options.max_iterations + 1):
        d, pg = prob.index_direction(theta, coef, B)
        if np.linalg.norm(pg) <= 1e-14:
            converged = True
            break
        step = 1.0
        accepted = None
        for _ in range(MAX_HALVINGS + 1):
            cand_theta, start = normalize_index(theta + step * d, coef)
            cand_coef, cand_loss, cand_B = prob.solve_coef(cand_theta, start)
            if cand_loss < loss:
                accepted = (cand_theta, cand_coef, cand_loss, cand_B)
                break
            step *= 0.5
        if accepted is None:
            converged = True
            break
        prev = loss
        theta, coef, loss, B = accepted
        trace.append(loss)
        if prev - loss < options.tolerance * max(abs(prev), 1e-300):
            converged = True
            break
    return theta, coef, loss, iterations, converged, trace


def fit(data, family, k, options=None, starts=()):
    """Fit a single-index sieve model of order ``k``.

    Alternates an exact (gaussian) or Newton (logistic) solve for the sieve
    coefficients with a backtracked step of the index on the unit sphere.
    Each trial index is scored after re-solving the coefficients, so the
    recorded loss never increases.

    The index starts from the normalized slopes of a linear (or linear
    logistic) fit; any extra ``starts`` are tried as well and the run with the
    smallest final loss is kept.

    Returns
    -------
    SieveFit
        ``converged=False`` (with a :class:`ConvergenceWarning`) when
        ``options.max_iterations`` is exhausted first.
    """
    options = options or FitOptions()
    _check_fit_inputs(data, k, family)
    X = data.covariates
    prob = _Problem(X, _target(data, family), family, k, options)

    first = _initial_index(X, prob.t, family)
    if np.linalg.matrix_rank(prob.basis(first)) < k:
        raise SieveFitError(f"basis design matrix is rank deficient at order {k}")
    candidates = [first]
    for t in starts:
        t = normalize_index(t)
        if not any(np.allclose(t, c, rtol=0, atol=1e-10) for c in candidates):
            candidates.append(t)
    best = None
    for theta0 in candidates:
        run = _optimize(prob, theta0, options)
        if best is None or run[2] < best[2]:
            best = run
    theta, coef, loss, iterations, converged, trace = best

    notes = []
    if not converged:
        msg = (
            f"{family} sieve fit (k={k}) did not converge in "
            f"{options.max_iterations} iterations"
        )
        notes.append(msg)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    if prob.bound_hit:
        msg = f"{family} sieve coefficients reached the norm bound {options.coef_bound:g}"
        notes.append(msg)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    theta.setflags(write=False)
    coef.setflags(write=False)
    return SieveFit(
        theta=theta,
        coef=coef,
        family=family,
        order=k,
        final_loss=loss,
        iterations=iterations,
        converged=converged,
        loss_trace=tuple(trace),
        warnings=tuple(notes),
        clamp=options.clamp,
        coef_bound=options.coef_bound,
    )


def fit_path(data, family, orders, options=None):
    """Fit each order in ascending ``orders``, warm-starting from the previous index.

    Returns a dict order -> :class:`SieveFit`; orders whose fit fails map to
    the exception raised.
    """
    fits = {}
    prev = ()
    for k in sorted(orders):
        try:
            m = fit(data, family, k, options, starts=prev)
        except (SieveFitError, np.linalg.LinAlgError) as exc:
            fits[k] = exc
            continue
        fits[k] = m
        prev = (m.theta,)
    return fits


def predict(fit, X):
    """Conditional mean: ``g(X @ theta)`` or ``expit(g(X @ theta))``."""
    eta = fit.link(X)
    if fit.family == "gaussian":
        return eta
    return expit(np.clip(eta, -fit.clamp, fit.clamp))


def _fold_ids(n, folds):
    return np.arange(n) % folds


def cross_validate(data, family, k_grid, folds=5, options=None):
    """Fold-averaged held-out loss for each order in ``k_grid``.

    Orders whose fit fails on any fold are left out with a warning.
    """
    options = options or FitOptions()
    if not k_grid or min(k_grid) < 1:
        raise ValueError("k_grid must be nonempty with entries >= 1")
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    ids = _fold_ids(data.n, folds)
    losses = {k: [] for k in k_grid}
    failed = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for f in range(folds):
            try:
                train, test = data.subset(ids != f), data.subset(ids == f)
            except ValueError as exc:
                raise SieveFitError(f"fold {f} cannot be formed: {exc}") from exc
            target = _target(test, family)
            for k, m in fit_path(train, family, k_grid, options).items():
                if isinstance(m, Exception):
                    failed.setdefault(k, m)
                    continue
                eta = m.link(test.covariates)
                losses[k].append(np.mean(_pointwise_loss(eta, target, family, options.clamp)))
    for k, exc in sorted(failed.items()):
        warnings.warn(f"skipping k={k} in cross-validation: {exc}", stacklevel=2)
    return {k: float(np.mean(v)) for k, v in sorted(losses.items()) if k not in failed}


def _argmin_k(scores):
    return min(sorted(scores), key=lambda k: scores[k])


def select_k(data, family, k_grid, folds=5, options=None):
    """Order in ``k_grid`` with the smallest cross-validated loss (ties -> smaller k)."""
    scores = cross_validate(data, family, k_grid, folds, options)
    if not scores:
        raise SieveFitError(f"every order in {list(k_grid)} failed during cross-validation")
    return _argmin_k(scores)


def fit_nuisance(data, family, options=None):
    """Fit with ``options.k`` if fixed, otherwise with the cross-validated order.

    The final fit is warm-started along the orders below the chosen one.
    """
    options = options or FitOptions()
    if options.k is not None:
        return fit(data, family, options.k, options)
    scores = cross_validate(data, family, options.k_grid, options.folds, options)
    if not scores:
        raise SieveFitError(f"every order in {list(options.k_grid)} failed during cross-validation")
    k = _argmin_k(scores)
    lower = [j for j in options.k_grid if j < k]
    starts = ()
    if lower:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            path = fit_path(data, family, lower, options)
        starts = tuple(m.theta for m in path.values() if not isinstance(m, Exception))[-1:]
    result = fit(data, family, k, options, starts=starts)
    result.cv_scores.update(scores)
    return result
