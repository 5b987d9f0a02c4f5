"""Simplex-constrained solvers.

* :func:`solve_lp` -- bounded-variable revised simplex (two phases,
  deterministic pricing, Bland anti-cycling).
* :func:`solve_quantile_lp` -- quantile regression as an LP.
* :func:`solve_weight_lp` / :func:`solve_weight_qp` -- weight selection on the
  probability simplex under the check loss (LP) or the asymmetric squared loss
  (accelerated projected gradient).
* :func:`project_simplex` -- Euclidean projection onto the simplex.

The two regression-shaped LPs (quantile fit and weight LP) are both of the
form ``min tau 1'u + (1 - tau) 1'v`` with one equality row per observation.
They are solved through their LP duals, which have one row per coefficient
instead of one per observation; the primal solution is read off the simplex
multipliers of the optimal dual basis.  :func:`quantile_program` and
:func:`weight_lp_program` build the primal programs verbatim (slacks ``u``,
``v`` included) for cross-checking on small instances.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import CycleGuardTripped, Infeasible, NotConverged, Unbounded
from .loss import LossSpec, rho

log = logging.getLogger(__name__)

SIMPLEX_SUM_TOL = 1e-10


# --------------------------------------------------------------------------
# Linear programming
# --------------------------------------------------------------------------


@dataclass
class LinearProgram:
    """``min c'x  s.t.  A x = b,  0 <= x <= upper`` (``upper`` may hold inf)."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        m, n = self.A.shape
        if self.c.shape != (n,) or self.b.shape != (m,):
            raise ValueError(f"inconsistent LP dimensions: A {self.A.shape}, "
                             f"c {self.c.shape}, b {self.b.shape}")
        if self.upper is None:
            self.upper = np.full(n, np.inf)
        else:
            self.upper = np.asarray(self.upper, dtype=float).ravel()
            if self.upper.shape != (n,) or np.any(self.upper < 0):
                raise ValueError("upper bounds must be nonnegative, one per variable")
        if not (np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.c))
                and np.all(np.isfinite(self.A))):
            raise ValueError("LP data must be finite")

    @property
    def shape(self):
        return self.A.shape


@dataclass
class LpResult:
    x: np.ndarray
    objective: float
    duals: np.ndarray
    basis: np.ndarray
    iterations: int
    at_upper: np.ndarray = field(repr=False)


class _Simplex:
    """Working state of the bounded revised simplex on ``[A | artificials]``."""

    refactor_every = 50

    def __init__(self, lp: LinearProgram, at_upper, rule, max_iter, tol):
        A, b = lp.A, lp.b
        m, n = A.shape
        self.m, self.n = m, n
        self.rule = rule
        self.tol = tol
        self.iterations = 0
        self.max_iter = max_iter if max_iter is not None else 50 * (m + n) + 1000

        ub = np.concatenate([lp.upper, np.full(m, np.inf)])
        x = np.zeros(n + m)
        if at_upper is not None:
            at_upper = np.asarray(at_upper, dtype=bool) & np.isfinite(lp.upper)
            x[:n][at_upper] = lp.upper[at_upper]
        resid = b - A @ x[:n]
        sign = np.where(resid >= 0, 1.0, -1.0)
        self.A = np.hstack([A, np.diag(sign)])
        self.b = b
        x[n:] = np.abs(resid)
        self.x = x
        self.ub = ub
        self.basis = np.arange(n, n + m)
        self.is_basic = np.zeros(n + m, dtype=bool)
        self.is_basic[self.basis] = True
        self.Binv = np.diag(sign)
        self._since_refactor = 0

    # -- linear algebra ---------------------------------------------------
    def refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        nb = ~self.is_basic
        rhs = self.b - self.A[:, nb] @ self.x[nb]
        self.x[self.basis] = self.Binv @ rhs
        self._since_refactor = 0

    def pivot(self, row, col, alpha):
        Binv = self.Binv
        piv = Binv[row] / alpha[row]
        Binv -= np.outer(alpha, piv)
        Binv[row] = piv
        old = self.basis[row]
        self.is_basic[old] = False
        self.is_basic[col] = True
        self.basis[row] = col
        self._since_refactor += 1
        if self._since_refactor >= self.refactor_every:
            self.refactor()

    # -- main loop --------------------------------------------------------
    def run(self, cost, phase):
        tol = self.tol
        dtol = tol * (1.0 + np.max(np.abs(cost), initial=0.0))
        rule = self.rule
        stall, best = 0, np.inf
        while True:
            pi = cost[self.basis] @ self.Binv
            d = cost - pi @ self.A
            movable = ~self.is_basic & (self.ub > 0)
            at_up = self.x >= self.ub  # only meaningful for finite ub
            elig = movable & np.where(at_up, d > dtol, d < -dtol)
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return pi
            self.iterations += 1
            if self.iterations > self.max_iter:
                raise CycleGuardTripped(
                    f"simplex exceeded {self.max_iter} iterations in phase {phase}")
            if rule == "bland":
                q = cand[0]
            else:
                q = cand[np.argmax(np.abs(d[cand]))]
            delta = -1.0 if at_up[q] else 1.0
            alpha = self.Binv @ self.A[:, q]
            g = delta * alpha
            xb = self.x[self.basis]
            ubb = self.ub[self.basis]
            ratios = np.full(self.m, np.inf)
            dec = g > tol
            ratios[dec] = np.maximum(xb[dec], 0.0) / g[dec]
            inc = (g < -tol) & np.isfinite(ubb)
            ratios[inc] = np.maximum(ubb[inc] - xb[inc], 0.0) / (-g[inc])
            step = ratios.min() if self.m else np.inf
            flip = self.ub[q]
            if not np.isfinite(step) and not np.isfinite(flip):
                raise Unbounded(f"LP is unbounded along variable {q}")
            if flip <= step:
                # bound flip: entering variable crosses to its other bound
                self.x[self.basis] = xb - flip * g
                self.x[q] = self.ub[q] if delta > 0 else 0.0
            else:
                ties = np.flatnonzero(ratios <= step + tol * max(1.0, step))
                row = ties[np.argmin(self.basis[ties])]
                leaving = self.basis[row]
                self.x[self.basis] = xb - step * g
                self.x[q] = (self.x[q] + delta * step)
                self.x[leaving] = self.ub[leaving] if g[row] < 0 else 0.0
                if phase == 1 and leaving >= self.n:
                    self.ub[leaving] = 0.0
                    self.x[leaving] = 0.0
                self.pivot(row, q, alpha)
            if rule != "bland":
                obj = cost @ self.x
                if obj < best - dtol:
                    best, stall = obj, 0
                else:
                    stall += 1
                    if stall > 2 * self.m + 20:
                        log.debug("simplex stalled under %s pricing; switching to Bland", rule)
                        rule = "bland"

    def drive_out_artificials(self):
        n = self.n
        for row in range(self.m):
            var = self.basis[row]
            if var < n:
                continue
            r = self.Binv[row] @ self.A[:, :n]
            r[self.is_basic[:n]] = 0.0
            cols = np.flatnonzero(np.abs(r) > 1e-9)
            if cols.size:
                col = cols[0]
                self.pivot(row, col, self.Binv @ self.A[:, col])
        self.refactor()


def solve_lp(lp: LinearProgram, rule: str = "bland", at_upper=None,
             max_iter: int | None = None, tol: float = 1e-9) -> LpResult:
    """Solve ``lp`` to a vertex-optimal basic feasible solution.

    Parameters
    ----------
    lp : LinearProgram
    rule : {"bland", "dantzig"}
        Pricing.  ``"bland"`` takes the lowest-index improving column and is
        anti-cycling; ``"dantzig"`` takes the largest reduced cost and falls
        back to Bland after a run of non-improving pivots.  Both are
        deterministic.
    at_upper : bool array, optional
        Variables with finite upper bounds to start at their upper bound.  A
        good guess shortens phase 1; it never changes the optimum.
    max_iter : int, optional
        Pivot cap, after which :class:`CycleGuardTripped` is raised.

    Raises
    ------
    Infeasible, Unbounded, CycleGuardTripped
    """
    if rule not in ("bland", "dantzig"):
        raise ValueError(f"unknown pricing rule {rule!r}")
    m, n = lp.shape
    s = _Simplex(lp, at_upper, rule, max_iter, tol)
    phase1 = np.concatenate([np.zeros(n), np.ones(m)])
    s.run(phase1, phase=1)
    infeas = s.x[n:].sum()
    if infeas > 1e-7 * (1.0 + np.abs(lp.b).max(initial=0.0)):
        raise Infeasible(f"LP infeasible (phase-1 residual {infeas:.3g})")
    s.ub[n:] = 0.0
    s.x[n:] = 0.0
    s.drive_out_artificials()
    cost = np.concatenate([lp.c, np.zeros(m)])
    duals = s.run(cost, phase=2)
    s.refactor()
    x = np.clip(s.x[:n], 0.0, lp.upper)
    return LpResult(x=x, objective=float(lp.c @ x), duals=duals, basis=s.basis.copy(),
                    iterations=s.iterations, at_upper=(s.x[:n] >= lp.upper))


# --------------------------------------------------------------------------
# Regression-shaped LPs
# --------------------------------------------------------------------------


def quantile_program(X, y, tau) -> LinearProgram:
    """Primal quantile-regression LP over ``[theta+, theta-, u, v]``.

    ``min tau 1'u + (1 - tau) 1'v  s.t.  X theta + u - v = y``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    eye = np.eye(n)
    A = np.hstack([X, -X, eye, -eye])
    c = np.concatenate([np.zeros(2 * k), np.full(n, tau), np.full(n, 1.0 - tau)])
    return LinearProgram(c=c, A=A, b=y)


def solve_quantile_lp(X, y, tau, rule="bland", start=None):
    """Exact quantile regression coefficients.

    Works on the dual ``max y'a  s.t.  X'a = (1 - tau) X'1,  0 <= a <= 1``;
    the coefficients are the negated simplex multipliers, so the fit
    interpolates the ``k`` observations left in the optimal basis.

    Returns
    -------
    theta : ndarray, shape (k,)
    objective : float
        ``sum_i rho_{tau,1}(y_i - x_i' theta)`` evaluated from the dual
        optimum (strong duality), i.e. without using ``theta``.
    result : LpResult
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if start is None:
        start, *_ = np.linalg.lstsq(X, y, rcond=None)
        r = y - X @ start
        # shift toward the tau-quantile of the residuals so the starting sign
        # pattern is close to optimal when X has an intercept
        r = r - np.quantile(r, tau)
    else:
        r = y - X @ start
    at_upper = r > 0
    lp = LinearProgram(c=-y, A=X.T, b=(1.0 - tau) * X.sum(axis=0), upper=np.ones(n))
    res = solve_lp(lp, rule=rule, at_upper=at_upper)
    theta = -res.duals
    objective = float(y @ res.x - (1.0 - tau) * y.sum())
    return theta, objective, res


def weight_lp_program(F, y, tau) -> LinearProgram:
    """Weight LP over ``[w, u, v]`` exactly as stated on the simplex.

    ``min tau 1'u + (1 - tau) 1'v  s.t.  F w + u - v = y,  1'w = 1,
    0 <= w <= 1,  u, v >= 0``.  The optimum divided by ``n`` is the
    cross-validation criterion.
    """
    F = np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=float)
    n, M = F.shape
    eye = np.eye(n)
    top = np.hstack([F, eye, -eye])
    bottom = np.concatenate([np.ones(M), np.zeros(2 * n)])
    A = np.vstack([top, bottom])
    b = np.concatenate([y, [1.0]])
    c = np.concatenate([np.zeros(M), np.full(n, tau), np.full(n, 1.0 - tau)])
    upper = np.concatenate([np.ones(M), np.full(2 * n, np.inf)])
    return LinearProgram(c=c, A=A, b=b, upper=upper)


# --------------------------------------------------------------------------
# Weights on the simplex
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightVector:
    """A point of the probability simplex."""

    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float).ravel()
        if w.size < 1:
            raise ValueError("weight vector must be nonempty")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0) or np.any(w > 1):
            raise ValueError(f"weights must lie in [0, 1]: {w}")
        if abs(w.sum() - 1.0) > SIMPLEX_SUM_TOL:
            raise ValueError(f"weights must sum to 1 (sum = {w.sum()!r})")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    @classmethod
    def clean(cls, v) -> "WeightVector":
        """Clip round-off negatives and renormalise a nearly feasible vector."""
        v = np.clip(np.asarray(v, dtype=float).ravel(), 0.0, None)
        total = v.sum()
        if total <= 0:
            raise ValueError("cannot normalise an all-zero weight vector")
        return cls(v / total)

    @classmethod
    def vertex(cls, M: int, m: int) -> "WeightVector":
        e = np.zeros(M)
        e[m] = 1.0
        return cls(e)

    def __len__(self):
        return self.w.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.w, dtype=dtype)


def project_simplex(v) -> WeightVector:
    """Euclidean projection onto ``{w >= 0, sum(w) = 1}`` by sort-and-threshold."""
    v = np.asarray(v, dtype=float).ravel()
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    return WeightVector.clean(_project(v))


def _project(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    r = np.flatnonzero(u - css / idx > 0)[-1]
    theta = css[r] / (r + 1)
    return np.maximum(v - theta, 0.0)


def weight_criterion(F, y, w, spec: LossSpec) -> float:
    """``(1/n) sum_i rho(y_i - F_i w)``."""
    return float(np.mean(rho(spec, y - F @ w)))


def solve_weight_lp(F, y, tau, rule="bland") -> WeightVector:
    """Minimise the mean check loss of ``y - F w`` over the simplex.

    The LP is solved through its dual (one row per model)::

        max  y'd + eta
        s.t. F'd + eta 1 <= 0,   tau - 1 <= d <= tau

    and the weights are the negated multipliers of the ``M`` rows.
    """
    F = np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=float)
    n, M = F.shape
    if M == 1:
        return WeightVector(np.ones(1))
    # variables: a = d - (tau - 1) in [0, 1]^n, eta+, eta-, slacks s (M)
    A = np.hstack([F.T, np.ones((M, 1)), -np.ones((M, 1)), np.eye(M)])
    b = (1.0 - tau) * F.sum(axis=0)
    c = np.concatenate([-y, [-1.0, 1.0], np.zeros(M)])
    upper = np.concatenate([np.ones(n), np.full(2 + M, np.inf)])
    lp = LinearProgram(c=c, A=A, b=b, upper=upper)
    spec = LossSpec(tau, 1)
    losses = [weight_criterion(F, y, np.eye(M)[m], spec) for m in range(M)]
    best = int(np.argmin(losses))
    at_upper = np.concatenate([(y - F[:, best]) > 0, np.zeros(2 + M, dtype=bool)])
    res = solve_lp(lp, rule=rule, at_upper=at_upper)
    return WeightVector.clean(-res.duals)


@dataclass
class SimplexQp:
    """Weight QP data: prediction matrix ``F`` (n x M), response ``y``, loss with p = 2."""

    F: np.ndarray
    y: np.ndarray
    spec: LossSpec

    def __post_init__(self):
        self.F = np.atleast_2d(np.asarray(self.F, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.spec.p != 2:
            raise ValueError("SimplexQp requires the p = 2 loss")
        if self.F.shape[0] != self.y.size or self.F.shape[1] < 1:
            raise ValueError(f"F {self.F.shape} does not match y ({self.y.size})")
        if not (np.all(np.isfinite(self.F)) and np.all(np.isfinite(self.y))):
            raise ValueError("QP data must be finite")

    def objective(self, w) -> float:
        return weight_criterion(self.F, self.y, w, self.spec)

    def gradient(self, w):
        """``-(2/n) sum_i |tau - 1{r_i <= 0}| r_i F_i``."""
        r = self.y - self.F @ w
        omega = np.where(r > 0, self.spec.tau, 1.0 - self.spec.tau)
        return -(2.0 / self.y.size) * (self.F.T @ (omega * r))


def solve_weight_qp(problem: SimplexQp, max_iter: int = 100_000, grad_tol: float = 1e-10,
                    rel_tol: float = 1e-12, window: int = 10) -> WeightVector:
    """Minimise the mean asymmetric squared loss of ``y - F w`` over the simplex.

    Accelerated projected gradient with adaptive restart.  The objective is
    piecewise quadratic, so every few iterations the current support and
    residual sign pattern are used to solve the equality-constrained weighted
    least-squares piece exactly; the candidate is kept only if it is feasible
    and lowers the objective.

    Stops when the projected-gradient norm falls below ``grad_tol`` or the
    relative objective change over ``window`` iterations is below
    ``rel_tol``.

    Raises
    ------
    NotConverged
        ``max_iter`` iterations without meeting either test.
    """
    F, y = problem.F, problem.y
    n, M = F.shape
    if M == 1:
        return WeightVector(np.ones(1))
    tau = problem.spec.tau
    smax = np.linalg.norm(F, 2)
    L = (2.0 / n) * max(tau, 1.0 - tau) * smax**2
    if L <= 0:
        # F == 0: objective is constant
        return WeightVector(np.full(M, 1.0 / M))
    step = 1.0 / L

    f = problem.objective
    grad = problem.gradient
    losses = [f(np.eye(M)[m]) for m in range(M)]
    w = np.eye(M)[int(np.argmin(losses))]
    z = w.copy()
    t = 1.0
    fw = f(w)
    history = [fw]

    def pg_norm(x):
        return L * np.linalg.norm(x - _project(x - step * grad(x)))

    for it in range(1, max_iter + 1):
        g = grad(z)
        w_new = _project(z - step * g)
        f_new = f(w_new)
        if f_new > fw or g @ (w_new - w) > 0:
            # adaptive restart
            t = 1.0
            z = w.copy()
            g = grad(z)
            w_new = _project(z - step * g)
            f_new = f(w_new)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = w_new + ((t - 1.0) / t_new) * (w_new - w)
        w, fw, t = w_new, f_new, t_new

        if it % 5 == 0:
            cand = _polish(F, y, w, tau)
            if cand is not None:
                fc = f(cand)
                if fc <= fw:
                    w, fw, z, t = cand, fc, cand.copy(), 1.0

        history.append(fw)
        if pg_norm(w) < grad_tol:
            break
        if len(history) > window:
            old = history[-1 - window]
            if abs(old - fw) <= rel_tol * max(abs(fw), np.finfo(float).tiny):
                break
    else:
        raise NotConverged(f"weight QP did not converge in {max_iter} iterations "
                           f"(projected-gradient norm {pg_norm(w):.3g})")
    return WeightVector.clean(w)


def _polish(F, y, w, tau, rounds=4):
    """Exact minimiser of the quadratic piece selected by ``w``.

    Fixes the support of ``w`` and the residual sign pattern, solves the
    resulting weighted least squares with ``sum(w) = 1``, and repeats while
    the sign pattern moves.  Returns None when the piece's minimiser leaves
    the simplex.
    """
    support = np.flatnonzero(w > 1e-12)
    if support.size == 0:
        return None
    r = y - F @ w
    for _ in range(rounds):
        omega = np.where(r > 0, tau, 1.0 - tau)
        sq = np.sqrt(omega)
        Z = F[:, support] * sq[:, None]
        k = support.size
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = Z.T @ Z
        K[:k, k] = 1.0
        K[k, :k] = 1.0
        rhs = np.concatenate([Z.T @ (sq * y), [1.0]])
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        beta = sol[:k]
        if np.any(beta < -1e-12):
            return None
        cand = np.zeros_like(w)
        cand[support] = np.clip(beta, 0.0, None)
        cand /= cand.sum()
        r_new = y - F @ cand
        if np.array_equal(r_new > 0, r > 0):
            return cand
        r = r_new
    return cand
