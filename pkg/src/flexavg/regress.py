"""Single-model fits under the flexible loss.

``p = 1`` gives linear quantile regression, solved exactly as an LP with the
in-package simplex; ``p = 2`` gives expectile regression, solved by
iteratively reweighted least squares.

Column indices are 0-based throughout; column 0 of every design is the
constant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NotConverged, RankDeficient
from .loss import LossSpec, rho
from .optim import solve_quantile_lp

log = logging.getLogger(__name__)

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class Dataset:
    """Regressor pool ``x`` (n x K, column 0 all ones) and response ``y``."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.array(self.x, dtype=float))
        y = np.array(self.y, dtype=float).ravel()
        n, K = x.shape
        if n < 1 or K < 1:
            raise ValueError("dataset needs at least one row and one column")
        if y.size != n:
            raise ValueError(f"x has {n} rows but y has {y.size} entries")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        if not np.all(x[:, 0] == 1.0):
            raise ValueError("column 0 of the regressor pool must be identically 1")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def K(self) -> int:
        return self.x.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.x[rows], self.y[rows])


@dataclass(frozen=True)
class CandidateModel:
    """Strictly increasing column indices into the regressor pool."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("a candidate model needs at least one regressor")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"model indices must be strictly increasing: {idx}")
        if idx[0] < 0:
            raise ValueError(f"negative column index in {idx}")
        object.__setattr__(self, "indices", idx)

    @property
    def k(self) -> int:
        return len(self.indices)

    def design(self, x) -> np.ndarray:
        x = np.asarray(x)
        if self.indices[-1] >= x.shape[-1]:
            raise IndexError(f"model uses column {self.indices[-1]} but the pool "
                             f"has {x.shape[-1]} columns")
        return x[..., list(self.indices)]


@dataclass(frozen=True)
class Coefficients:
    values: np.ndarray
    model: CandidateModel
    spec: LossSpec

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != self.model.k:
            raise ValueError(f"{v.size} coefficients for a {self.model.k}-regressor model")
        if not np.all(np.isfinite(v)):
            raise ValueError("coefficients must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def predict(self, x) -> np.ndarray:
        return self.model.design(x) @ self.values


def objective(data: Dataset, model: CandidateModel, spec: LossSpec, theta) -> float:
    """``sum_i rho(y_i - theta' x_i(m))``."""
    return float(np.sum(rho(spec, data.y - model.design(data.x) @ np.asarray(theta))))


def _check_rank(X, model):
    n, k = X.shape
    if n <= k:
        raise RankDeficient(f"model {model.indices} has {k} regressors but only {n} rows")
    s = np.linalg.svd(X, compute_uv=False)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s[0] > 0 else 0
    if rank < k:
        raise RankDeficient(f"model {model.indices}: design rank {rank} < {k}")


def fit(data: Dataset, model: CandidateModel, spec: LossSpec) -> Coefficients:
    """Minimise the summed flexible loss over the model's coefficients."""
    if spec.p == 1:
        return fit_quantile(data, model, spec.tau)
    return fit_expectile(data, model, spec.tau)


def fit_quantile(data: Dataset, model: CandidateModel, tau: float) -> Coefficients:
    X = model.design(data.x)
    _check_rank(X, model)
    theta, _, _ = solve_quantile_lp(X, data.y, tau, rule="dantzig")
    return Coefficients(theta, model, LossSpec(tau, 1))


def fit_expectile(data: Dataset, model: CandidateModel, tau: float,
                  max_iter: int = 500) -> Coefficients:
    """Asymmetric least squares by IRLS with weights ``|tau - 1{r <= 0}|``.

    Converged once the largest coefficient change is below 1e-10 or the
    relative objective change is below 1e-12.
    """
    X = model.design(data.x)
    y = data.y
    _check_rank(X, model)
    spec = LossSpec(tau, 2)
    theta = _weighted_lstsq(X, y, np.ones(y.size))
    obj = np.sum(rho(spec, y - X @ theta))
    for _ in range(max_iter):
        r = y - X @ theta
        omega = np.where(r > 0, tau, 1.0 - tau)
        new = _weighted_lstsq(X, y, omega)
        new_obj = np.sum(rho(spec, y - X @ new))
        step = np.max(np.abs(new - theta))
        rel = abs(obj - new_obj) / max(abs(obj), np.finfo(float).tiny)
        theta, obj = new, new_obj
        if step < 1e-10 or rel < 1e-12:
            return Coefficients(theta, model, spec)
    raise NotConverged(f"expectile IRLS did not converge in {max_iter} iterations "
                       f"for model {model.indices}")


def _weighted_lstsq(X, y, omega):
    sq = np.sqrt(omega)
    Q, R = np.linalg.qr(X * sq[:, None])
    rhs = Q.T @ (sq * y)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-14 * diag.max():
        A = (X * omega[:, None]).T @ X
        jitter = 1e-12 * np.trace(A)
        log.warning("weighted design near singular; adding ridge %.3g", jitter)
        return np.linalg.solve(A + jitter * np.eye(A.shape[0]), X.T @ (omega * y))
    return solve_triangular(R, rhs)


def ols(X, y) -> np.ndarray:
    """Least-squares coefficients via QR."""
    return _weighted_lstsq(np.asarray(X, float), np.asarray(y, float), np.ones(len(y)))
