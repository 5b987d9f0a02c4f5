"""Simulation designs, metrics and the replication harness.

Designs
-------
DGP1
    ``y = theta * sum_{j=1}^{1000} x_j / j + eps``,
    ``eps = (sum_{j=2}^{6} x_j^2) * e``; nested candidates.
DGP2
    ``y = theta * sum_{j=1}^{30} beta_j x_j + eps`` with
    ``beta = (1, 1, 1, 0, 0, 1, 2, 3, 1, ..., 1)``,
    ``eps = (sum_{j=2}^{8} x_j^2) * e``; eight observed columns, the first
    three always in the model and the other five toggled (32 candidates).
DGP3
    ``y = theta * (1 + sum_{j=2}^{25} Phi(x_j) / j) + eps``,
    ``eps = (0.01 + sum_{j=2}^{11} x_j^2) * e``; nested candidates.
DESIGN2
    ``y = x_1 + x_2 + x_3 + x_4 + e`` over a five-column pool (the fifth
    coefficient is zero); intercept always in, other four toggled
    (16 candidates, two of them correct).

Here ``x_1 = 1``, the remaining ``x_j`` and ``e`` are iid N(0, 1), and the
1-based ``x_j`` is pool column ``j - 1``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize, stats

from .baselines import ewa_weights, info_criterion, select_model, smooth_weights
from .errors import FlexavgError
from .jcvma import CandidateSet, average_coefficients, jcvma_weights
from .loss import LossSpec, rho
from .optim import WeightVector
from .regress import CandidateModel, Dataset, fit

log = logging.getLogger(__name__)

KINDS = ("DGP1", "DGP2", "DGP3", "DESIGN2")

DGP1_TERMS = 1000
DGP2_BETA = np.array([1, 1, 1, 0, 0, 1, 2, 3] + [1] * 22, dtype=float)
DGP2_OBSERVED = 8
DGP2_ALWAYS = (0, 1, 2)
DGP3_TERMS = 25
DESIGN2_BETA = np.array([1.0, 1.0, 1.0, 1.0, 0.0])
DEFAULT_HOLDOUT = 100

# Var(eps) for the raw heteroskedastic noise: E[(chi2_k + c)^2]
NOISE_VAR = {
    "DGP1": 2 * 5 + 5.0**2,
    "DGP2": 2 * 7 + 7.0**2,
    "DGP3": 2 * 10 + 10.01**2,
}
# Var(mu) / theta^2
SIGNAL_VAR = {
    "DGP1": sum(j**-2.0 for j in range(2, DGP1_TERMS + 1)),
    "DGP2": float(np.sum(DGP2_BETA[1:] ** 2)),
    "DGP3": sum(j**-2.0 for j in range(2, DGP3_TERMS + 1)) / 12.0,
}


def nested_count(n: int) -> int:
    """``floor(5 n^(1/5))`` in exact integer arithmetic."""
    m = int(5 * n**0.2)
    while (m + 1) ** 5 <= 3125 * n:
        m += 1
    while m > 0 and m**5 > 3125 * n:
        m -= 1
    return max(m, 1)


# --------------------------------------------------------------------------
# noise location constants
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def location_constant(tau: float, p: int) -> float:
    """tau-quantile (p=1) or tau-expectile (p=2) of the standard normal."""
    if p == 1:
        return float(stats.norm.ppf(tau))

    def foc(e):
        upper = stats.norm.pdf(e) - e * stats.norm.sf(e)  # E[(Z - e)+]
        lower = e * stats.norm.cdf(e) + stats.norm.pdf(e)  # E[(e - Z)+]
        return tau * upper - (1.0 - tau) * lower

    if tau == 0.5:
        return 0.0
    return float(optimize.bisect(foc, -10.0, 10.0, xtol=1e-12, maxiter=200))


NOISE_MC_DRAWS = 1_000_000
NOISE_MC_SEED = 20240


@lru_cache(maxsize=None)
def noise_loss_constant(tau: float, p: int) -> float:
    """``E[rho(e - q)]`` for standard normal ``e``, by Monte Carlo (1e6 draws)."""
    spec = LossSpec(tau, p)
    e = np.random.default_rng(NOISE_MC_SEED).standard_normal(NOISE_MC_DRAWS)
    return float(np.mean(rho(spec, e - location_constant(tau, p))))


# --------------------------------------------------------------------------
# data generation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DgpSpec:
    kind: str
    n: int
    theta: float | None = None
    seed: int | None = None
    holdout: int = DEFAULT_HOLDOUT

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown design {self.kind!r}; choose from {KINDS}")
        if self.n < 1 or self.holdout < 0:
            raise ValueError("n must be positive and holdout nonnegative")
        if self.kind == "DESIGN2":
            if self.theta is not None:
                raise ValueError("DESIGN2 has no signal scale")
        elif self.theta is None or self.theta < 0:
            raise ValueError(f"{self.kind} needs a nonnegative theta")


@dataclass(frozen=True)
class SimSample:
    """Training data, holdout data and the generating truth.

    ``location`` is the noise-free part of ``y`` and ``scale`` the noise
    multiplier, so ``y = location + scale * e`` row by row.
    """

    train: Dataset
    holdout: Dataset | None
    location: np.ndarray
    scale: np.ndarray
    holdout_location: np.ndarray | None
    holdout_scale: np.ndarray | None
    shocks: np.ndarray = field(repr=False)
    holdout_shocks: np.ndarray | None = field(default=None, repr=False)

    def target(self, spec: LossSpec, holdout: bool = False) -> np.ndarray:
        """Conditional tau-quantile / tau-expectile of ``y`` given ``x``."""
        loc = self.holdout_location if holdout else self.location
        sc = self.holdout_scale if holdout else self.scale
        return loc + sc * location_constant(spec.tau, spec.p)


def _draw(kind, n, theta, rng, width=None):
    """Return (observed pool, location, scale, shocks) for ``n`` rows.

    ``width`` fixes the DGP1 pool width (holdout rows must match training).
    """
    if kind == "DGP1":
        K = width or max(nested_count(n), 6)
        z = rng.standard_normal((n, K - 1))
        x = np.column_stack([np.ones(n), z])
        j = np.arange(1, K + 1)
        # columns beyond the pool enter only through their sum, which is normal
        tail_sd = math.sqrt(sum(i**-2.0 for i in range(K + 1, DGP1_TERMS + 1)))
        hidden = tail_sd * rng.standard_normal(n)
        location = theta * (x @ (1.0 / j) + hidden)
        scale = np.sum(x[:, 1:6] ** 2, axis=1)
    elif kind == "DGP2":
        z = rng.standard_normal((n, DGP2_BETA.size - 1))
        full = np.column_stack([np.ones(n), z])
        location = theta * (full @ DGP2_BETA)
        scale = np.sum(full[:, 1:DGP2_OBSERVED] ** 2, axis=1)
        x = full[:, :DGP2_OBSERVED]
    elif kind == "DGP3":
        z = rng.standard_normal((n, DGP3_TERMS - 1))
        x = np.column_stack([np.ones(n), z])
        j = np.arange(2, DGP3_TERMS + 1)
        location = theta * (1.0 + stats.norm.cdf(z) @ (1.0 / j))
        scale = 0.01 + np.sum(z[:, :10] ** 2, axis=1)
    else:
        z = rng.standard_normal((n, DESIGN2_BETA.size - 1))
        x = np.column_stack([np.ones(n), z])
        location = x @ DESIGN2_BETA
        scale = np.ones(n)
    shocks = rng.standard_normal(n)
    return x, location, scale, shocks


def generate(spec: DgpSpec, rng=None) -> SimSample:
    """Draw a training sample and holdout from ``spec`` (deterministic per seed)."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    theta = spec.theta if spec.theta is not None else 1.0
    x, loc, sc, e = _draw(spec.kind, spec.n, theta, rng)
    train = Dataset(x, loc + sc * e)
    if spec.holdout:
        hx, hloc, hsc, he = _draw(spec.kind, spec.holdout, theta, rng, width=x.shape[1])
        holdout = Dataset(hx, hloc + hsc * he)
        return SimSample(train, holdout, loc, sc, hloc, hsc, e, he)
    return SimSample(train, None, loc, sc, None, None, e)


def calibrate_theta(kind: str, r2: float) -> float:
    """Signal scale giving population ``R^2 = Var(mu) / (Var(mu) + Var(eps))``."""
    if kind not in SIGNAL_VAR:
        raise ValueError(f"{kind} has no signal scale to calibrate")
    if not (0.0 < r2 < 1.0):
        raise ValueError(f"R^2 must lie in (0, 1), got {r2}")
    return math.sqrt(r2 / (1.0 - r2) * NOISE_VAR[kind] / SIGNAL_VAR[kind])


def monte_carlo_r2(kind: str, theta: float, draws: int = 200_000, seed=0) -> float:
    """Empirical ``[var(y) - var(eps)] / var(y)`` from one large sample."""
    s = generate(DgpSpec(kind, draws, theta, seed, holdout=0))
    noise = s.scale * s.shocks
    vy = np.var(s.train.y)
    return float((vy - np.var(noise)) / vy)


# --------------------------------------------------------------------------
# candidate sets and truth
# --------------------------------------------------------------------------


def toggle_models(always, optional) -> CandidateSet:
    """All ``2^len(optional)`` models containing ``always``; bit b toggles ``optional[b]``."""
    always = tuple(always)
    models = []
    for mask in range(2 ** len(optional)):
        extra = tuple(c for b, c in enumerate(optional) if mask >> b & 1)
        models.append(CandidateModel(tuple(sorted(always + extra))))
    return CandidateSet(tuple(models))


def candidate_set(kind: str, n: int, dgp2_always=DGP2_ALWAYS) -> CandidateSet:
    if kind in ("DGP1", "DGP3"):
        M = nested_count(n)
        if kind == "DGP3":
            M = min(M, DGP3_TERMS)
        return CandidateSet(tuple(CandidateModel(tuple(range(m + 1))) for m in range(M)))
    if kind == "DGP2":
        optional = tuple(c for c in range(DGP2_OBSERVED) if c not in dgp2_always)
        return toggle_models(dgp2_always, optional)
    if kind == "DESIGN2":
        return toggle_models((0,), (1, 2, 3, 4))
    raise ValueError(f"unknown design {kind!r}")


def correct_models(models: CandidateSet, relevant) -> tuple:
    """Indices of models whose regressors include every column in ``relevant``."""
    relevant = set(relevant)
    return tuple(m for m, mod in enumerate(models) if relevant <= set(mod.indices))


DESIGN2_RELEVANT = (0, 1, 2, 3)


def design2_truth(spec: LossSpec) -> np.ndarray:
    """Population coefficients on the five-column pool; the intercept absorbs
    the noise location for this loss."""
    t = DESIGN2_BETA.copy()
    t[0] += location_constant(spec.tau, spec.p)
    return t


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------


def efpe(pred, y, scale, spec: LossSpec) -> float:
    """Holdout loss minus the irreducible noise loss.

    With ``eps = s(x) e`` the irreducible part is
    ``E[rho(s (e - q))] = s^p E[rho(e - q)]``; it is averaged over the
    holdout scales.
    """
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if pred.shape != y.shape or scale.shape != y.shape:
        raise ValueError("prediction, response and scale must align")
    first = float(np.mean(rho(spec, y - pred)))
    return first - noise_loss_constant(spec.tau, spec.p) * float(np.mean(scale**spec.p))


def fpe(pred, y, spec: LossSpec) -> float:
    return float(np.mean(rho(spec, np.asarray(y) - np.asarray(pred))))


def mse_metric(theta_hat, truth) -> float:
    a = np.asarray(theta_hat, dtype=float)
    b = np.asarray(truth, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sum((a - b) ** 2))


def weight_sum_correct(weights, correct) -> float:
    w = np.asarray(weights, dtype=float)
    return float(np.clip(np.sum(w[list(correct)]), 0.0, 1.0))


# --------------------------------------------------------------------------
# harness
# --------------------------------------------------------------------------


def method_family(name: str):
    """Split a method name into (family, J).  ``JCVMA5`` -> ("JCVMA", 5)."""
    for fam in ("JCVMA", "CV"):
        if name.startswith(fam) and name[len(fam):].isdigit():
            return fam, int(name[len(fam):])
    if name in ("SAIC", "SBIC", "EWA", "AIC", "BIC"):
        return name, None
    raise ValueError(f"unknown method {name!r}")


@dataclass
class ExperimentConfig:
    dgp: str = "DESIGN2"
    n_values: tuple = (100,)
    r2_values: tuple = (0.5,)
    specs: tuple = (LossSpec(0.5, 2),)
    methods: tuple = ("JCVMA5",)
    reps: int = 100
    seed: int = 0
    holdout: int = DEFAULT_HOLDOUT
    dgp2_always: tuple = DGP2_ALWAYS

    def __post_init__(self):
        if self.dgp not in KINDS:
            raise ValueError(f"unknown design {self.dgp!r}")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        for m in self.methods:
            method_family(m)
        self.n_values = tuple(int(n) for n in self.n_values)
        self.r2_values = tuple(float(r) for r in self.r2_values) if self.dgp != "DESIGN2" else (None,)
        self.specs = tuple(self.specs)
        self.methods = tuple(self.methods)

    def settings(self):
        for spec in self.specs:
            for n in self.n_values:
                for r2 in self.r2_values:
                    yield spec, n, r2


@dataclass
class ExperimentReport:
    dgp: str
    n: int
    r2: float | None
    spec: LossSpec
    method: str
    metric: str
    values: np.ndarray
    normalizer: float | None = None

    @property
    def reps(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        return float(np.nanmean(self.values)) if np.isfinite(self.values).any() else float("nan")

    @property
    def se(self) -> float:
        v = self.values[np.isfinite(self.values)]
        return float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")

    @property
    def normalized(self) -> float | None:
        if self.normalizer is None:
            return None
        return self.mean / self.normalizer


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    reports: list
    failures: list

    def get(self, method, metric, n=None, spec=None, r2=None) -> ExperimentReport:
        for rep in self.reports:
            if (rep.method == method and rep.metric == metric
                    and (n is None or rep.n == n)
                    and (spec is None or rep.spec == spec)
                    and (r2 is None or rep.r2 == r2)):
                return rep
        raise KeyError((method, metric, n, spec, r2))


def replication_seeds(seed: int, n: int, r: int):
    """Independent (data, folds) seeds for replication ``r`` at sample size ``n``."""
    data_ss, fold_ss = np.random.SeedSequence([seed, n, r]).spawn(2)
    return data_ss, int(fold_ss.generate_state(1)[0])


def _method_weights(name, data, models, spec, coefs, fold_seed, cache):
    fam, J = method_family(name)
    M = len(models)
    if fam == "JCVMA":
        if ("cv", J) not in cache:
            cache["cv", J] = jcvma_weights(data, models, spec, J, fold_seed)
        return cache["cv", J][0].w
    if fam == "CV":
        if ("cv", J) not in cache:
            cache["cv", J] = jcvma_weights(data, models, spec, J, fold_seed)
        F = cache["cv", J][1].F
        losses = np.mean(rho(spec, data.y[:, None] - F), axis=0)
        losses[list(cache["cv", J][2])] = np.inf
        return WeightVector.vertex(M, select_model(losses)).w
    if fam == "EWA":
        return ewa_weights(M).w
    kind = "AIC" if fam in ("SAIC", "AIC") else "BIC"
    if ("ic", kind) not in cache:
        cache["ic", kind] = [info_criterion(data, mod, spec, kind, m, coef=c)
                             for m, (mod, c) in enumerate(zip(models, coefs))]
    scores = cache["ic", kind]
    if fam in ("SAIC", "SBIC"):
        return smooth_weights(scores).w
    return WeightVector.vertex(M, select_model(scores)).w


def run_replication(config: ExperimentConfig, spec: LossSpec, n: int, r2, r: int):
    """One replication of one setting; returns {(method, metric): value}."""
    data_ss, fold_seed = replication_seeds(config.seed, n, r)
    rng = np.random.default_rng(data_ss)
    kind = config.dgp
    theta = None if kind == "DESIGN2" else calibrate_theta(kind, r2)
    holdout = config.holdout if kind != "DESIGN2" else 0
    sample = generate(DgpSpec(kind, n, theta, None, holdout), rng=rng)
    data = sample.train
    models = candidate_set(kind, n, config.dgp2_always)
    coefs = [fit(data, mod, spec) for mod in models]
    out = {}
    if kind == "DESIGN2":
        pool = models.pool
        truth = design2_truth(spec)
        correct = correct_models(models, DESIGN2_RELEVANT)
    else:
        hold = sample.holdout
        P = np.column_stack([c.predict(hold.x) for c in coefs])
        for m in range(len(models)):
            out[f"model{m + 1}", "EFPE"] = efpe(P[:, m], hold.y, sample.holdout_scale, spec)
    cache = {}
    for name in config.methods:
        w = _method_weights(name, data, models, spec, coefs, fold_seed, cache)
        if kind == "DESIGN2":
            out[name, "MSE"] = mse_metric(average_coefficients(coefs, w, pool), truth)
            out[name, "WEIGHT_SUM"] = weight_sum_correct(w, correct)
        else:
            out[name, "EFPE"] = efpe(P @ w, hold.y, sample.holdout_scale, spec)
    return out


def run_experiment(config: ExperimentConfig, progress=None) -> ExperimentResult:
    """Run every setting of ``config`` for ``config.reps`` replications.

    Replications that raise are recorded in ``failures`` (their values are
    NaN) rather than dropped.  For the EFPE designs each method's report
    carries the normaliser ``min_m mean EFPE(model m)``.
    """
    reports, failures = [], []
    for spec, n, r2 in config.settings():
        rows = []
        for r in range(config.reps):
            try:
                rows.append(run_replication(config, spec, n, r2, r))
            except FlexavgError as exc:
                log.warning("replication %d failed (%s, n=%d, r2=%s): %s", r, spec, n, r2, exc)
                failures.append({"n": n, "r2": r2, "tau": spec.tau, "p": spec.p, "rep": r,
                                 "error": exc.code, "message": str(exc)})
                rows.append({})
            if progress is not None:
                progress(spec, n, r2, r)
        keys = []
        for row in rows:
            for k in row:
                if k not in keys:
                    keys.append(k)
        values = {k: np.array([row.get(k, np.nan) for row in rows]) for k in keys}
        normalizer = None
        singles = [k for k in keys if k[0].startswith("model")]
        if singles:
            normalizer = min(float(np.nanmean(values[k])) for k in singles)
        for method in config.methods:
            for (name, metric) in keys:
                if name == method:
                    reports.append(ExperimentReport(config.dgp, n, r2, spec, method, metric,
                                                    values[name, metric],
                                                    normalizer if metric == "EFPE" else None))
    return ExperimentResult(config, reports, failures)


# --------------------------------------------------------------------------
# synthetic stand-in for the empirical data
# --------------------------------------------------------------------------

FIXTURE_ROWS = 175
FIXTURE_PREDICTORS = 14


def synthetic_fixture(seed: int = 0, n: int = FIXTURE_ROWS, k: int = FIXTURE_PREDICTORS):
    """Correlated predictors ``x1..xk`` and a response driven by the first three.

    The other predictors are heavy tailed (Student t, 2 df) so that
    high-leverage rows punish overfitted models, and the noise is skewed and
    heteroskedastic.  Returns ``(names, values)`` with the response last.
    """
    rng = np.random.default_rng(seed)
    factor = rng.standard_normal((n, 1))
    x = 0.5 * factor + rng.standard_normal((n, k))
    x[:, 3:] = 0.3 * factor + rng.standard_t(2, (n, k - 3))
    beta = np.zeros(k)
    beta[:3] = (1.0, -0.6, 0.4)
    noise = (0.5 + 0.3 * np.abs(x[:, 0])) * (rng.chisquare(3, n) - 3.0) / np.sqrt(6.0)
    y = 2.0 + x @ beta + noise
    names = tuple(f"x{j}" for j in range(1, k + 1)) + ("y",)
    return names, np.column_stack([x, y])
