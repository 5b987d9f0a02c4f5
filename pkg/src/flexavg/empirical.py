"""Empirical train/validation pipeline with ordered nested candidates."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .baselines import ewa_weights, info_criterion, smooth_weights
from .errors import ConfigError, FlexavgError, RankDeficient
from .io import Table
from .jcvma import CandidateSet, jcvma_weights
from .loss import LossSpec, rho
from .regress import CandidateModel, Dataset, fit, ols
from .simlab import toggle_models

log = logging.getLogger(__name__)

ORDERINGS = ("CORRELATION", "PVALUE", "AS_GIVEN")
SHAPES = ("NESTED", "SUBSET_TOGGLE")
MAX_TOGGLED = 12


def order_by_correlation(data: Dataset, columns=None) -> tuple:
    """Pool columns sorted by descending |Pearson correlation| with ``y``.

    Ties keep the original column order.  Constant columns have no defined
    correlation; they go last with a warning.
    """
    if columns is None:
        columns = range(1, data.K)
    columns = tuple(columns)
    if data.n < 2:
        raise ValueError("need at least two rows to correlate")
    y = data.y - data.y.mean()
    keys = []
    for c in columns:
        x = data.x[:, c] - data.x[:, c].mean()
        denom = np.sqrt((x @ x) * (y @ y))
        if denom == 0:
            warnings.warn(f"column {c} (or the response) is constant; ordered last",
                          stacklevel=2)
            keys.append(-1.0)
        else:
            keys.append(abs(x @ y) / denom)
    order = np.argsort(-np.array(keys), kind="stable")
    return tuple(columns[i] for i in order)


def ols_pvalues(data: Dataset, columns=None) -> np.ndarray:
    """Two-sided t-test p-values of the full least-squares fit (classical SEs).

    Returned in the order of ``columns`` (default: every non-constant column);
    the intercept is always in the regression but not reported.
    """
    if columns is None:
        columns = range(1, data.K)
    columns = tuple(columns)
    X = data.x[:, (0, *columns)]
    n, k = X.shape
    s = np.linalg.svd(X, compute_uv=False)
    if n <= k or s[-1] <= 1e-10 * s[0]:
        raise RankDeficient(f"full least-squares design is rank deficient ({n} x {k})")
    beta = ols(X, data.y)
    resid = data.y - X @ beta
    sigma2 = resid @ resid / (n - k)
    cov = sigma2 * np.linalg.inv(X.T @ X)
    t = beta / np.sqrt(np.diag(cov))
    return 2.0 * stats.t.sf(np.abs(t), df=n - k)[1:]


def order_by_pvalue(data: Dataset, columns=None) -> tuple:
    """Pool columns sorted by ascending full-model p-value (ties keep order)."""
    if columns is None:
        columns = range(1, data.K)
    columns = tuple(columns)
    pv = ols_pvalues(data, columns)
    order = np.argsort(pv, kind="stable")
    return tuple(columns[i] for i in order)


def build_nested(ordered, always=()) -> CandidateSet:
    """``{const, always}``, then one more ordered column per model."""
    base = (0, *always)
    models = [CandidateModel(tuple(sorted(base)))]
    acc = list(base)
    for c in ordered:
        acc.append(c)
        models.append(CandidateModel(tuple(sorted(acc))))
    return CandidateSet(tuple(models))


def build_subsets(optional, always=()) -> CandidateSet:
    if len(optional) > MAX_TOGGLED:
        raise ConfigError(f"{len(optional)} toggled columns would give "
                          f"{2 ** len(optional)} models; limit is {MAX_TOGGLED}")
    return toggle_models((0, *always), tuple(optional))


@dataclass
class EmpiricalConfig:
    input: str | None = None
    response: str = "y"
    always: tuple = ()
    ordering: str = "CORRELATION"
    shape: str = "NESTED"
    spec: LossSpec = field(default_factory=lambda: LossSpec(0.05, 2))
    folds: int = 5
    n1: int = 100
    reps: int = 100
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        self.ordering = self.ordering.upper()
        self.shape = self.shape.upper()
        if self.ordering not in ORDERINGS:
            raise ConfigError(f"ordering must be one of {ORDERINGS}, got {self.ordering!r}")
        if self.shape not in SHAPES:
            raise ConfigError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        self.always = tuple(self.always)


def candidates_for(table: Table, config: EmpiricalConfig):
    """Dataset over all predictors plus the candidate set the config asks for.

    The ordering is computed once on the full sample.
    """
    if config.response not in table.names:
        raise ConfigError(f"response column {config.response!r} not in the input")
    data, names = table.dataset(config.response)
    for c in config.always:
        if c not in names:
            raise ConfigError(f"always-include column {c!r} not in the input")
    always = tuple(names.index(c) for c in config.always)
    rest = tuple(i for i in range(1, data.K) if i not in always)
    if config.ordering == "CORRELATION":
        ordered = order_by_correlation(data, rest)
    elif config.ordering == "PVALUE":
        ordered = order_by_pvalue(data, rest)
    else:
        ordered = rest
    if config.shape == "NESTED":
        models = build_nested(ordered, always)
    else:
        models = build_subsets(ordered, always)
    return data, names, models, ordered


@dataclass
class EmpiricalReport:
    methods: tuple
    fpe: dict  # method -> per-replication FPE array
    failures: list
    ordered: tuple

    def mean(self, method) -> float:
        return float(np.nanmean(self.fpe[method]))

    def relative(self, method) -> float:
        return self.mean(method) / self.mean("LARGEST")


def split_rows(n: int, n1: int, seed: int, r: int):
    perm = np.random.default_rng(np.random.SeedSequence([seed, r])).permutation(n)
    return np.sort(perm[:n1]), np.sort(perm[n1:])


def evaluate_empirical(config: EmpiricalConfig, table: Table) -> EmpiricalReport:
    """Random train/validation splits; validation FPE per method.

    Methods: JCVMA with ``config.folds`` folds, SAIC, SBIC, EWA and the
    largest candidate model.
    """
    data, names, models, ordered = candidates_for(table, config)
    if not (0 < config.n1 < data.n):
        raise ConfigError(f"training size n1={config.n1} must lie in (0, {data.n})")
    spec = config.spec
    jname = f"JCVMA{config.folds}"
    methods = (jname, "SAIC", "SBIC", "EWA", "LARGEST")
    sizes = [m.k for m in models]
    largest = len(sizes) - 1 - int(np.argmax(sizes[::-1]))
    fpe = {m: np.full(config.reps, np.nan) for m in methods}
    failures = []
    for r in range(config.reps):
        tr, va = split_rows(data.n, config.n1, config.seed, r)
        train, valid = data.subset(tr), data.subset(va)
        fold_seed = int(np.random.SeedSequence([config.seed, r, 1]).generate_state(1)[0])
        try:
            coefs = [fit(train, mod, spec) for mod in models]
            P = np.column_stack([c.predict(valid.x) for c in coefs])
            weights = {
                jname: jcvma_weights(train, models, spec, config.folds, fold_seed)[0].w,
                "SAIC": smooth_weights(
                    [info_criterion(train, mod, spec, "AIC", m, coef=c)
                     for m, (mod, c) in enumerate(zip(models, coefs))]).w,
                "SBIC": smooth_weights(
                    [info_criterion(train, mod, spec, "BIC", m, coef=c)
                     for m, (mod, c) in enumerate(zip(models, coefs))]).w,
                "EWA": ewa_weights(len(models)).w,
            }
        except FlexavgError as exc:
            log.warning("replication %d failed: %s", r, exc)
            failures.append({"rep": r, "error": exc.code, "message": str(exc)})
            continue
        for m, w in weights.items():
            fpe[m][r] = float(np.mean(rho(spec, valid.y - P @ w)))
        fpe["LARGEST"][r] = float(np.mean(rho(spec, valid.y - P[:, largest])))
    return EmpiricalReport(methods, fpe, failures, ordered)
