"""J-fold cross-validation model averaging.

Pipeline: :func:`make_folds` -> :func:`cv_predictions` -> :func:`select_weights`
-> full-data fits -> averaged coefficients.  :func:`fit_jcvma` runs all of it.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import RankDeficient
from .loss import LossSpec, rho
from .optim import SimplexQp, WeightVector, solve_weight_lp, solve_weight_qp
from .regress import CandidateModel, Coefficients, Dataset, fit

log = logging.getLogger(__name__)

DEFAULT_FOLDS = 5


@dataclass(frozen=True)
class FoldPlan:
    """Fold id (0-based) for every observation, plus the seed that produced it."""

    J: int
    assignment: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        a = np.array(self.assignment, dtype=int).ravel()
        a.flags.writeable = False
        object.__setattr__(self, "assignment", a)

    @property
    def n(self) -> int:
        return self.assignment.size

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == j)

    def sizes(self) -> tuple:
        return tuple(int(s) for s in np.bincount(self.assignment, minlength=self.J))


def make_folds(n: int, J: int, seed=None) -> FoldPlan:
    """Random partition of ``range(n)`` into ``J`` groups.

    A seeded permutation is cut into consecutive blocks: the first ``J - 1``
    hold ``n // J`` observations each and the last holds the remainder.
    """
    if not (2 <= J <= n):
        raise ValueError(f"need 2 <= J <= n, got J={J}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    Q = n // J
    assignment = np.empty(n, dtype=int)
    for j in range(J - 1):
        assignment[perm[j * Q:(j + 1) * Q]] = j
    assignment[perm[(J - 1) * Q:]] = J - 1
    return FoldPlan(J, assignment, seed)


@dataclass(frozen=True)
class CandidateSet:
    """The ``M`` candidate models.

    ``pool`` is the sorted union of the columns the models use; averaged
    coefficient vectors live in these coordinates.  For nested sets and for
    the all-subsets designs it coincides with the columns of the largest
    model, so its length equals ``kbar``.
    """

    models: tuple

    def __post_init__(self):
        models = tuple(m if isinstance(m, CandidateModel) else CandidateModel(m)
                       for m in self.models)
        if not models:
            raise ValueError("candidate set is empty")
        if len(set(models)) < len(models):
            warnings.warn("candidate set contains duplicate models", stacklevel=3)
        object.__setattr__(self, "models", models)

    def __len__(self):
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    def __getitem__(self, m):
        return self.models[m]

    @property
    def kbar(self) -> int:
        return max(m.k for m in self.models)

    @property
    def pool(self) -> tuple:
        return tuple(sorted({i for m in self.models for i in m.indices}))

    def without(self, drop) -> "CandidateSet":
        drop = set(drop)
        return CandidateSet(tuple(m for i, m in enumerate(self.models) if i not in drop))


@dataclass(frozen=True)
class CvPredictionMatrix:
    """``F[i, m]``: prediction for row ``i`` from model ``m`` fitted without ``i``'s fold."""

    F: np.ndarray
    plan: FoldPlan
    spec: LossSpec
    models: CandidateSet


def _cv_column(data, model, spec, plan, m):
    col = np.empty(data.n)
    for j in range(plan.J):
        held = plan.assignment == j
        try:
            coef = fit(data.subset(~held), model, spec)
        except RankDeficient as exc:
            raise RankDeficient(f"model {m} unfittable without fold {j}: {exc}",
                                model=m, fold=j) from exc
        col[held] = coef.predict(data.x[held])
    return col


def cv_predictions(data: Dataset, models: CandidateSet, spec: LossSpec,
                   plan: FoldPlan) -> CvPredictionMatrix:
    """Leave-one-fold-out predictions for every model.

    Raises
    ------
    RankDeficient
        Tagged with the offending ``model`` and ``fold``.
    """
    if plan.n != data.n:
        raise ValueError(f"fold plan covers {plan.n} rows, data has {data.n}")
    F = np.column_stack([_cv_column(data, mod, spec, plan, m)
                         for m, mod in enumerate(models)])
    return CvPredictionMatrix(F, plan, spec, models)


def jcv_criterion(F, y, w, spec: LossSpec) -> float:
    """Cross-validation criterion ``(1/n) sum_i rho(y_i - F_i w)``."""
    F = F.F if isinstance(F, CvPredictionMatrix) else np.asarray(F, dtype=float)
    w = np.asarray(w, dtype=float)
    y = np.asarray(y, dtype=float)
    if F.shape != (y.size, w.size):
        raise ValueError(f"F {F.shape} incompatible with y ({y.size}) and w ({w.size})")
    return float(np.mean(rho(spec, y - F @ w)))


def select_weights(F, y, spec: LossSpec) -> WeightVector:
    """Weights on the simplex minimising :func:`jcv_criterion`."""
    F = F.F if isinstance(F, CvPredictionMatrix) else np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.p == 1:
        return solve_weight_lp(F, y, spec.tau, rule="dantzig")
    return solve_weight_qp(SimplexQp(F, y, spec))


def embed_coefficients(theta: Coefficients, pool) -> np.ndarray:
    """Scatter a model's coefficients into pool coordinates (zeros elsewhere).

    ``pool`` is either a sequence of column indices or an int ``kbar``, in
    which case the pool is ``range(kbar)``.
    """
    if isinstance(pool, (int, np.integer)):
        pool = range(int(pool))
    position = {c: i for i, c in enumerate(pool)}
    out = np.zeros(len(position))
    for c, v in zip(theta.model.indices, theta.values):
        if c not in position:
            raise IndexError(f"column {c} of model {theta.model.indices} is outside the pool")
        out[position[c]] = v
    return out


def average_coefficients(coefs, weights, pool) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    out = np.zeros(len(pool))
    for wm, c in zip(w, coefs):
        out += wm * embed_coefficients(c, pool)
    return out


@dataclass(frozen=True)
class JcvmaFit:
    coefficients: tuple
    weights: WeightVector
    averaged_theta: np.ndarray
    spec: LossSpec
    models: CandidateSet
    J: int
    seed: int | None = None
    dropped: tuple = ()
    cv: CvPredictionMatrix | None = field(default=None, repr=False, compare=False)

    @property
    def pool(self) -> tuple:
        return self.models.pool

    def predict(self, xnew) -> np.ndarray | float:
        return predict(self, xnew)


def jcvma_weights(data: Dataset, models: CandidateSet, spec: LossSpec, J: int = DEFAULT_FOLDS,
                  seed=None):
    """Cross-validated weights over all of ``models``.

    Returns ``(weights, cv, dropped)``: dropped models get weight zero and
    are absent from ``cv``, whose columns follow the surviving models.
    """
    plan = make_folds(data.n, J, seed)
    columns, dropped = [], []
    for m, mod in enumerate(models):
        try:
            columns.append(_cv_column(data, mod, spec, plan, m))
        except RankDeficient as exc:
            log.warning("dropping model %d %s: %s", m, mod.indices, exc)
            dropped.append(m)
    if not columns:
        raise RankDeficient("every candidate model is rank deficient on some fold")
    surviving = models.without(dropped)
    cv = CvPredictionMatrix(np.column_stack(columns), plan, spec, surviving)
    sub = select_weights(cv, data.y, spec)
    if not dropped:
        return sub, cv, ()
    w = np.zeros(len(models))
    w[[m for m in range(len(models)) if m not in dropped]] = sub.w
    return WeightVector(w), cv, tuple(dropped)


def fit_jcvma(data: Dataset, models: CandidateSet, spec: LossSpec, J: int = DEFAULT_FOLDS,
              seed=None) -> JcvmaFit:
    """Cross-validated weights, full-data fits and the averaged estimator.

    A model that cannot be fitted on some fold complement is dropped from the
    run altogether; its original index is listed in ``dropped``.
    """
    if not isinstance(models, CandidateSet):
        models = CandidateSet(models)
    weights, cv, dropped = jcvma_weights(data, models, spec, J, seed)
    surviving = cv.models
    if dropped:
        weights = WeightVector.clean(np.delete(weights.w, dropped))
    coefs = tuple(fit(data, mod, spec) for mod in surviving)
    theta = average_coefficients(coefs, weights.w, surviving.pool)
    return JcvmaFit(coefs, weights, theta, spec, surviving, J, seed, dropped, cv)


def predict(fit: JcvmaFit, xnew):
    """Averaged prediction ``sum_m w_m x_(m)' theta_(m)`` for one row or a matrix."""
    x = np.asarray(xnew, dtype=float)
    need = max(mod.indices[-1] for mod in fit.models) + 1
    if x.shape[-1] < need:
        raise ValueError(f"xnew has {x.shape[-1]} columns; the models need {need}")
    preds = np.stack([c.predict(x) for c in fit.coefficients], axis=-1)
    out = preds @ fit.weights.w
    return float(out) if np.ndim(out) == 0 else out
