"""Flexible asymmetric loss and its score functions.

The loss is ``rho(lam) = |tau - 1{lam <= 0}| * |lam| ** p`` with ``p`` in
{1, 2}: the check (pinball) loss for ``p = 1`` and the asymmetric squared
loss for ``p = 2``.  Every function accepts scalars or numpy arrays.

The indicator ``1{lam <= 0}`` includes zero, so the weight at ``lam = 0`` is
``1 - tau``.  The loss itself vanishes there, but :func:`psi` and
:func:`loss_gradient` inherit this left convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LossSpec:
    """Asymmetry level ``tau`` in (0, 1) and power ``p`` in {1, 2}."""

    tau: float
    p: int

    def __post_init__(self):
        tau = float(self.tau)
        if not (0.0 < tau < 1.0):
            raise ValueError(f"tau must lie strictly between 0 and 1, got {self.tau!r}")
        if self.p not in (1, 2) or isinstance(self.p, bool):
            raise ValueError(f"p must be 1 or 2, got {self.p!r}")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "p", int(self.p))

    @property
    def kind(self) -> str:
        return "quantile" if self.p == 1 else "expectile"


def asymmetry_weight(tau, lam):
    """``|tau - 1{lam <= 0}|``: ``tau`` for positive ``lam``, ``1 - tau`` otherwise."""
    lam = np.asarray(lam, dtype=float)
    out = np.where(lam > 0, tau, 1.0 - tau)
    return out if out.ndim else float(out)


def rho(spec: LossSpec, lam):
    """Evaluate the flexible loss elementwise."""
    lam = np.asarray(lam, dtype=float)
    a = np.abs(lam)
    mag = a if spec.p == 1 else a * a
    out = np.where(lam > 0, spec.tau, 1.0 - spec.tau) * mag
    return out if out.ndim else float(out)


def mean_loss(spec: LossSpec, residuals) -> float:
    """Average loss over a residual vector."""
    return float(np.mean(rho(spec, residuals)))


def psi(tau, u):
    """``tau - 1{u <= 0}``, the quantile score.

    Equals ``-d/du rho_{tau,1}(u)`` away from zero; at ``u = 0`` it takes the
    left-limit value ``tau - 1``.
    """
    u = np.asarray(u, dtype=float)
    out = tau - (u <= 0).astype(float)
    return out if out.ndim else float(out)


def weighted_identity(tau, u):
    """``|tau - 1{u <= 0}| * u``; half the expectile score."""
    u = np.asarray(u, dtype=float)
    out = np.where(u > 0, tau, 1.0 - tau) * u
    return out if out.ndim else float(out)


def loss_gradient(spec: LossSpec, lam):
    """Derivative of :func:`rho` with respect to ``lam``.

    Exact for ``p = 2``.  For ``p = 1`` returns the subgradient
    ``|tau - 1{lam <= 0}| * sign(lam)`` with ``sign(0) = -1``, i.e. the left
    derivative ``-(1 - tau)`` at the kink.
    """
    lam = np.asarray(lam, dtype=float)
    w = np.where(lam > 0, spec.tau, 1.0 - spec.tau)
    if spec.p == 2:
        out = 2.0 * w * lam
    else:
        out = w * np.where(lam > 0, 1.0, -1.0)
    return out if out.ndim else float(out)
