"""Screening-based power enhancement component.

Given estimates theta_hat_j with variances v_hat_j, units whose standardized
magnitude |theta_hat_j| / sqrt(v_hat_j) strictly exceeds a slowly growing
threshold delta are kept, and

    J0 = sqrt(N) * sum_{j kept} theta_hat_j**2 / v_hat_j.

J0 is zero with high probability under the null and explodes as soon as any
component is clearly nonzero.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError

DEFAULT_GREY_BAND = (1.0 / 3.0, 2.0)


@dataclass(frozen=True)
class ScreeningResult:
    delta: float
    selected: np.ndarray  # sorted 0-based indices
    j0: float
    standardized: np.ndarray

    @property
    def empty(self):
        return self.selected.size == 0


@dataclass(frozen=True)
class OracleSets:
    s_theta: np.ndarray
    grey: np.ndarray


def _delta_real(n, t):
    return math.log(math.log(t)) * math.sqrt(math.log(n))


def high_criticism_delta(n, t):
    """log(log T) * sqrt(log N)."""
    if int(n) != n or int(t) != t:
        raise ValueError(f"N and T must be counts, got N={n}, T={t}")
    if n < 2 or t < 3:
        raise ValueError(f"need N >= 2 and T >= 3, got N={n}, T={t}")
    return _delta_real(n, t)


def _as_vectors(theta, v):
    theta = np.asarray(theta, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if theta.shape != v.shape or theta.size == 0:
        raise ValueError(f"theta and v must be equal-length nonempty vectors, got {theta.shape}, {v.shape}")
    return theta, v


def screen(theta_hat, v_hat, delta, zero_variance="error"):
    """Select j with |theta_hat_j| > sqrt(v_hat_j) * delta and compute J0.

    ``zero_variance="select"`` treats v_hat_j == 0 as an infinitely strong
    signal (standardized magnitude +inf, selected, J0 = inf) instead of raising.
    Negative variances always raise.
    """
    theta, v = _as_vectors(theta_hat, v_hat)
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if np.any(v < 0) or np.any(np.isnan(v)):
        raise EstimationError("variances must be nonnegative")
    zero = v == 0
    if zero.any() and zero_variance != "select":
        raise EstimationError(f"zero variance at index {int(np.flatnonzero(zero)[0])}")
    with np.errstate(divide="ignore", invalid="ignore"):
        std = np.abs(theta) / np.sqrt(v)
        ratio2 = theta**2 / v
    std[zero] = np.inf
    ratio2[zero] = np.inf
    keep = std > delta
    selected = np.flatnonzero(keep)
    j0 = math.sqrt(theta.size) * float(np.sum(ratio2[keep])) if selected.size else 0.0
    return ScreeningResult(float(delta), selected, j0, std)


def oracle_sets(theta_true, v_true, delta, grey_band=DEFAULT_GREY_BAND):
    """True violation set S(theta) and the grey-area set G(theta)."""
    lo, hi = grey_band
    if lo >= hi:
        raise ValueError(f"grey band needs lo < hi, got ({lo}, {hi})")
    theta, v = _as_vectors(theta_true, v_true)
    if np.any(v <= 0):
        raise EstimationError("true variances must be positive")
    ratio = np.abs(theta) / np.sqrt(v)
    s_theta = np.flatnonzero(ratio > 2.0 * delta)
    grey = np.flatnonzero((ratio > lo * delta) & (ratio <= hi * delta))
    return OracleSets(s_theta, grey)
