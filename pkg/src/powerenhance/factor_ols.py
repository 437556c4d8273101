"""Time-series OLS of each asset's returns on an intercept and K factors."""
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import EstimationError

DEFAULT_COND_CAP = 1e12
CLOSED_FORM_TOL = 1e-8


@dataclass(frozen=True)
class FactorFit:
    theta_hat: np.ndarray  # (N,) intercepts ("alphas")
    b_hat: np.ndarray  # (N, K) loadings
    residuals: np.ndarray  # (N, T)
    v_hat: np.ndarray  # (N,) estimated variance of each intercept
    a_fT: float
    w: np.ndarray  # (K,)
    f_bar: np.ndarray  # (K,)
    unit_labels: tuple = ()

    @property
    def n_units(self):
        return self.theta_hat.shape[0]

    @property
    def n_time(self):
        return self.residuals.shape[1]


def factor_moments(f, cond_cap=DEFAULT_COND_CAP):
    """Return ``(f_bar, w, a_fT)`` for a K x T factor matrix."""
    f = np.asarray(f, dtype=np.float64)
    t = f.shape[1]
    f_bar = f.mean(axis=1)
    m = f @ f.T / t
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > cond_cap:
        raise EstimationError(
            f"factor second-moment matrix is singular or ill-conditioned (cond={cond:.3g})"
        )
    w = np.linalg.solve(m, f_bar)
    a = 1.0 - float(f_bar @ w)
    if a <= 0.0:
        raise EstimationError(f"a_fT = {a:.3g} <= 0; factors are degenerate")
    return f_bar, w, a


def closed_form_intercepts(y, f, cond_cap=DEFAULT_COND_CAP):
    """sum_t y_jt (1 - f_t'w) / (T a_fT) for an N x T return matrix."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    f = np.atleast_2d(np.asarray(f, dtype=np.float64))
    _, w, a = factor_moments(f, cond_cap)
    return y @ (1.0 - f.T @ w) / (f.shape[1] * a)


def fit_factor_model(returns, factors, cond_cap=DEFAULT_COND_CAP):
    """Fit y_jt = theta_j + b_j' f_t + u_jt for every unit j.

    The design (1, f_t) is shared across units, so it is QR-factored once and
    reused. The intercept is reported from the closed form
    ``sum_t y_jt (1 - f_t'w) / (T a_fT)`` and cross-checked against the QR
    intercept.
    """
    y = np.asarray(returns.values, dtype=np.float64)
    f = np.asarray(factors.values, dtype=np.float64)
    if y.shape[1] != f.shape[1]:
        raise EstimationError(f"returns have T={y.shape[1]} but factors have T={f.shape[1]}")
    n, t = y.shape
    k = f.shape[0]
    if t <= k + 1:
        raise EstimationError(f"need T > K + 1, got T={t}, K={k}")
    f_bar, w, a = factor_moments(f, cond_cap)

    x = np.column_stack([np.ones(t), f.T])
    q, r = linalg.qr(x, mode="economic")
    coef = linalg.solve_triangular(r, q.T @ y.T)  # (K+1, N)

    weights = 1.0 - f.T @ w
    theta = y @ weights / (t * a)
    scale = np.maximum(np.abs(theta), np.abs(y).max(axis=1)) + 1.0
    gap = np.abs(theta - coef[0]) / scale
    if gap.max() > CLOSED_FORM_TOL:
        raise EstimationError(
            f"closed-form intercept disagrees with least squares (max rel gap {gap.max():.2e})"
        )
    b = coef[1:].T.copy()
    resid = y - theta[:, None] - b @ f
    v = np.mean(resid**2, axis=1) / (t * a)
    return FactorFit(theta, b, resid, v, a, w, f_bar, tuple(getattr(returns, "unit_labels", ())))


def alpha_tstats(fit):
    """theta_hat_j / sqrt(v_hat_j) for each unit."""
    bad = np.flatnonzero(fit.v_hat <= 0)
    if bad.size:
        j = bad[0]
        lab = fit.unit_labels[j] if fit.unit_labels else str(j)
        raise EstimationError(f"unit {lab!r} has zero residual variance")
    return fit.theta_hat / np.sqrt(fit.v_hat)
