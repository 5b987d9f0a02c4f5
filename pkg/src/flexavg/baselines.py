"""Comparator weighting schemes: smoothed AIC/BIC, equal weights, selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .loss import LossSpec, rho
from .optim import WeightVector
from .regress import CandidateModel, Coefficients, Dataset, fit

KINDS = ("AIC", "BIC", "JCV")
ZERO_LOSS_RTOL = 1e-12


@dataclass(frozen=True)
class CriterionScore:
    """One model's criterion value.

    A perfect in-sample fit has mean loss 0 and log-loss -inf; such scores
    carry ``zero_loss=True`` and ``value=-inf`` and beat every finite score.
    """

    model: int
    kind: str
    value: float
    zero_loss: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown criterion kind {self.kind!r}")
        if self.zero_loss:
            object.__setattr__(self, "value", -np.inf)
        elif not np.isfinite(self.value):
            raise ValueError(f"criterion value must be finite, got {self.value}")


def information_score(mean_loss: float, n: int, k: int, p: int, kind: str) -> float:
    """``(2/p) n ln(mean_loss) + penalty`` with penalty ``2k`` (AIC) or ``k ln n`` (BIC)."""
    if kind == "AIC":
        penalty = 2.0 * k
    elif kind == "BIC":
        penalty = k * np.log(n)
    else:
        raise ValueError(f"information criterion must be AIC or BIC, got {kind!r}")
    if mean_loss <= 0:
        return -np.inf
    return (2.0 / p) * n * np.log(mean_loss) + penalty


def info_criterion(data: Dataset, model: CandidateModel, spec: LossSpec, kind: str,
                   index: int = 0, coef: Coefficients | None = None) -> CriterionScore:
    """AIC or BIC of ``model`` under the flexible loss, from its full-data fit.

    ``coef`` may be passed to reuse an existing fit.
    """
    if coef is None:
        coef = fit(data, model, spec)
    mean = float(np.mean(rho(spec, data.y - coef.predict(data.x))))
    # residuals of an exact fit are round-off, not signal
    scale = max(1.0, float(np.max(np.abs(data.y))))
    if mean <= (ZERO_LOSS_RTOL * scale) ** spec.p:
        return CriterionScore(index, kind, -np.inf, zero_loss=True)
    return CriterionScore(index, kind, information_score(mean, data.n, model.k, spec.p, kind))


def smooth_weights(scores) -> WeightVector:
    """Weights proportional to ``exp(-IC_m / 2)``.

    Computed with the maximum subtracted first.  If any score is a zero-loss
    score, those models share all the weight equally.
    """
    scores = list(scores)
    if not scores:
        raise ValueError("no scores to smooth")
    if len({s.kind for s in scores}) > 1:
        raise ValueError("scores must all be of one kind")
    zero = np.array([s.zero_loss for s in scores])
    if zero.any():
        return WeightVector.clean(zero.astype(float))
    a = -0.5 * np.array([s.value for s in scores])
    e = np.exp(a - a.max())
    return WeightVector.clean(e / e.sum())


def ewa_weights(M: int) -> WeightVector:
    if M < 1:
        raise ValueError("need at least one model")
    return WeightVector(np.full(M, 1.0 / M))


def select_model(scores) -> int:
    """0-based index of the smallest score; ties go to the lowest index."""
    vals = np.array([s.value if isinstance(s, CriterionScore) else float(s) for s in scores])
    if vals.size == 0:
        raise ValueError("no scores to select from")
    return int(np.argmin(vals))


def select_by_cv(F, y, spec: LossSpec) -> int:
    """Model with the smallest single-model cross-validation loss."""
    F = np.asarray(getattr(F, "F", F), dtype=float)
    losses = np.mean(rho(spec, np.asarray(y, dtype=float)[:, None] - F), axis=0)
    return select_model(losses)
