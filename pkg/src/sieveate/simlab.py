"""Monte Carlo harness for the three simulation designs.

Scenario I
    ``P(D=1|X) = expit(b'X)``, ``Y = a D + g'X + e``.
Scenario II
    ``P(D=1|X) = expit((b'X)**3 - 2 b'X)``, ``Y = a D + exp(g'X) + e``.
Scenario III
    ``P(D=1|X) = expit(b'X + X1**2)``, ``Y = a D + (g'X)**2 + X2 X3 + e``.

``X`` has three independent standard normal columns and ``e`` is standard
normal. Replicate ``r`` of a run seeded with ``seed`` draws from
``numpy.random.default_rng([seed, r])`` so any replicate can be regenerated
on its own.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .ate import METHODS, estimate
from .data import Dataset
from .io import write_dataset_csv
from .linear import EstimationError
from .sieve import FitOptions, SieveFitError

__all__ = [
    "BETA",
    "GAMMA",
    "ReplicateRecord",
    "ScenarioSpec",
    "SimulationSummary",
    "dump_datasets",
    "format_table",
    "records_csv",
    "generate",
    "run_monte_carlo",
    "summarize_table",
    "summary_csv",
    "synthetic_birthweight",
]

log = logging.getLogger(__name__)

GAMMA = (0.4, 0.0, 0.917)
BETA = (0.8, 0.0, -0.6)
SCENARIOS = ("I", "II", "III")
FAILURE_WARN_FRACTION = 0.05


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    n: int
    alpha_true: float
    gamma: tuple = GAMMA
    beta: tuple = BETA

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if tuple(self.gamma) != GAMMA or tuple(self.beta) != BETA:
            raise ValueError("gamma and beta are fixed by the simulation design")


def propensity(scenario, X, beta=BETA):
    u = X @ np.asarray(beta)
    if scenario == "I":
        return expit(u)
    if scenario == "II":
        return expit(u**3 - 2.0 * u)
    return expit(u + X[:, 0] ** 2)


def outcome_mean(scenario, X, gamma=GAMMA):
    v = X @ np.asarray(gamma)
    if scenario == "I":
        return v
    if scenario == "II":
        return np.exp(v)
    return v**2 + X[:, 1] * X[:, 2]


def generate(spec, seed):
    """Draw one dataset; ``seed`` is anything ``numpy.random.default_rng`` accepts."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((spec.n, 3))
    eps = rng.standard_normal(spec.n)
    D = (rng.random(spec.n) < propensity(spec.scenario, X, spec.beta)).astype(float)
    Y = spec.alpha_true * D + outcome_mean(spec.scenario, X, spec.gamma) + eps
    return Dataset(Y, D, X, ("x1", "x2", "x3"))


@dataclass(frozen=True)
class ReplicateRecord:
    scenario: str
    n: int
    alpha_true: float
    method: str
    replicate: int
    alpha: float = math.nan
    std_error: float = math.nan
    ci_low: float = math.nan
    ci_high: float = math.nan
    covered: bool = False
    k_outcome: int | None = None
    k_treatment: int | None = None
    converged_outcome: bool | None = None
    converged_treatment: bool | None = None
    error: str | None = None

    @property
    def failed(self):
        return self.error is not None


@dataclass(frozen=True)
class SimulationSummary:
    scenario: str
    n: int
    alpha_true: float
    method: str
    mean: float
    sd: float
    mean_se: float
    ci_coverage: float
    replicates: int
    failures: int = 0
    records: tuple = field(default=(), repr=False, compare=False)


def _one_replicate(spec, seed, r, methods, options):
    data = generate(spec, [seed, r])
    out = []
    for method in methods:
        base = dict(scenario=spec.scenario, n=spec.n, alpha_true=spec.alpha_true, method=method, replicate=r)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                est = estimate(data, method, options)
        except (EstimationError, SieveFitError, ValueError, np.linalg.LinAlgError) as exc:
            out.append(ReplicateRecord(**base, error=f"{type(exc).__name__}: {exc}"))
            continue
        d = est.diagnostics
        out.append(
            ReplicateRecord(
                **base,
                alpha=est.alpha,
                std_error=est.std_error,
                ci_low=est.ci_low,
                ci_high=est.ci_high,
                covered=bool(est.covers(spec.alpha_true)),
                k_outcome=d.get("k_outcome"),
                k_treatment=d.get("k_treatment"),
                converged_outcome=d.get("converged_outcome"),
                converged_treatment=d.get("converged_treatment"),
            )
        )
    return out


def _replicate_task(args):
    return _one_replicate(*args)


def _summarize(spec, method, records):
    ok = [r for r in records if not r.failed]
    failures = len(records) - len(ok)
    if not ok:
        raise EstimationError(f"{method} failed on every replicate of scenario {spec.scenario}, n={spec.n}")
    if failures > FAILURE_WARN_FRACTION * len(records):
        msg = f"{method}: {failures} of {len(records)} replicates failed in scenario {spec.scenario}, n={spec.n}"
        log.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    a = np.array([r.alpha for r in ok])
    return SimulationSummary(
        scenario=spec.scenario,
        n=spec.n,
        alpha_true=spec.alpha_true,
        method=method,
        mean=float(a.mean()),
        sd=float(a.std(ddof=1)) if a.size > 1 else 0.0,
        mean_se=float(np.mean([r.std_error for r in ok])),
        ci_coverage=float(np.mean([r.covered for r in ok])),
        replicates=len(ok),
        failures=failures,
        records=tuple(records),
    )


def run_monte_carlo(spec, replicates, seed, methods=METHODS, options=None, workers=1):
    """Replicate ``spec`` and summarize each method.

    Replicates are independent, so ``workers > 1`` spreads them over processes
    without changing any number in the output.

    Returns
    -------
    list of SimulationSummary
        One per method, in canonical method order; replicate-level results are kept
        on ``SimulationSummary.records`` sorted by replicate index.
    """
    if replicates < 2:
        raise ValueError(f"need at least 2 replicates, got {replicates}")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}; expected some of {METHODS}")
    methods = [m for m in METHODS if m in set(methods)]
    if not methods:
        return []
    options = options or FitOptions()
    tasks = [(spec, seed, r, tuple(methods), options) for r in range(1, replicates + 1)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_task, tasks, chunksize=max(1, replicates // (4 * workers))))
    else:
        results = [_replicate_task(t) for t in tasks]
    by_method = {m: [] for m in methods}
    for rows in results:
        for row in rows:
            by_method[row.method].append(row)
    return [
        _summarize(spec, m, sorted(by_method[m], key=lambda rec: rec.replicate))
        for m in methods
    ]


_LABELS = {"ps_regression": "alpha_R", "ps_residual": "alpha_L", "proposed": "alpha_P"}


def format_table(rows):
    """Plain-text table: one line per (scenario, n, method), Mean/SD/SE/CI per alpha block."""
    if not rows:
        raise ValueError("no simulation rows to tabulate")
    alphas = sorted({r.alpha_true for r in rows})
    order = {m: i for i, m in enumerate(METHODS)}
    keys = sorted(
        {(r.scenario, r.n, r.method) for r in rows},
        key=lambda t: (SCENARIOS.index(t[0]), t[1], order.get(t[2], 99)),
    )
    cell = {(r.scenario, r.n, r.method, r.alpha_true): r for r in rows}
    head1 = f"{'':<9}{'':>6}{'':>10}" + "".join(f" | {'alpha=' + format(a, 'g'):^35}" for a in alphas)
    head2 = f"{'Scenario':<9}{'n':>6}{'Method':>10}" + " | {:>8} {:>8} {:>8} {:>8}".format(
        "Mean", "SD", "SE", "CI"
    ) * len(alphas)
    lines = [head1, head2, "-" * len(head2)]
    footnotes = []
    for sc, n, m in keys:
        line = f"{sc:<9}{n:>6}{_LABELS.get(m, m):>10}"
        for a in alphas:
            r = cell.get((sc, n, m, a))
            if r is None:
                line += " | " + " ".join(f"{'':>8}" for _ in range(4))
                continue
            line += f" | {r.mean:8.3f} {r.sd:8.3f} {r.mean_se:8.3f} {r.ci_coverage:8.3f}"
            if r.failures:
                footnotes.append(
                    f"* scenario {sc}, n={n}, {m}, alpha={a:g}: {r.failures} of "
                    f"{r.failures + r.replicates} replicates failed and were excluded"
                )
        lines.append(line)
    return "\n".join(lines + footnotes) + "\n"


SUMMARY_FIELDS = ("scenario", "n", "alpha_true", "method", "mean", "sd", "mean_se", "ci_coverage", "replicates", "failures")
RECORD_FIELDS = (
    "scenario", "n", "alpha_true", "method", "replicate", "alpha", "std_error", "ci_low", "ci_high",
    "covered", "k_outcome", "k_treatment", "converged_outcome", "converged_treatment", "error",
)


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def _csv(rows, fields):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_cell(getattr(r, f)) for f in fields])
    return buf.getvalue()


def summary_csv(rows):
    return _csv(rows, SUMMARY_FIELDS)


def records_csv(rows):
    return _csv([rec for r in rows for rec in r.records], RECORD_FIELDS)


def summarize_table(rows):
    """Return ``(text_table, csv_text)`` for a list of summaries."""
    return format_table(rows), summary_csv(rows)


def replicate_path(directory, spec, replicate):
    return directory / f"scenario{spec.scenario}_n{spec.n}_alpha{spec.alpha_true:g}_rep{replicate:04d}.csv"


def dump_datasets(spec, seed, replicates, directory):
    """Write the datasets of replicates ``1..replicates`` as CSV files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in range(1, replicates + 1):
        path = replicate_path(directory, spec, r)
        write_dataset_csv(generate(spec, [seed, r]), path)
        paths.append(path)
    return paths


BIRTHWEIGHT_COLUMNS = (
    "bweight", "smoke", "age", "educ", "visits",
    "alcohol", "first_baby", "first_trimester", "prev_death",
)


def synthetic_birthweight(n=3000, seed=0, effect=-280.0):
    """Synthetic stand-in with the schema of the maternal-smoking data.

    Three quantitative covariates (age, education, prenatal visits) and four
    binary ones; smoking lowers birth weight (grams) by ``effect``. Returns
    a list of row dicts keyed by :data:`BIRTHWEIGHT_COLUMNS`.
    """
    rng = np.random.default_rng(seed)
    age = np.clip(np.round(rng.normal(27.0, 5.5, n)), 15, 45)
    educ = np.clip(np.round(rng.normal(13.0, 2.3, n)), 6, 20)
    visits = np.clip(rng.poisson(11.0, n), 0, 40).astype(float)
    alcohol = (rng.random(n) < 0.04).astype(float)
    first_baby = (rng.random(n) < 0.42).astype(float)
    first_trimester = (rng.random(n) < 0.8).astype(float)
    prev_death = (rng.random(n) < 0.03).astype(float)
    lin = (
        -1.3 - 0.06 * (age - 27) - 0.35 * (educ - 13) - 0.04 * (visits - 11)
        + 1.2 * alcohol - 0.3 * first_baby - 0.4 * first_trimester + 0.3 * prev_death
    )
    smoke = (rng.random(n) < expit(lin)).astype(float)
    bweight = (
        3400.0 + effect * smoke + 9.0 * (age - 27) - 0.6 * (age - 27) ** 2 + 14.0 * (educ - 13)
        + 12.0 * (visits - 11) - 90.0 * first_baby - 60.0 * alcohol + 40.0 * first_trimester
        - 120.0 * prev_death + rng.normal(0.0, 520.0, n)
    )
    cols = (bweight.round(1), smoke, age, educ, visits, alcohol, first_baby, first_trimester, prev_death)
    return [dict(zip(BIRTHWEIGHT_COLUMNS, vals)) for vals in zip(*cols)]
