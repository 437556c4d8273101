"""Cross-sectional independence test for fixed/random-effect panels.

The N = n(n-1)/2 residual correlations are stacked in the order
(1,2), (1,3), ..., (1,n), (2,3), ..., (n-1,n) and screened with the same
operation as the factor-pricing alphas; the pivotal part is the
bias-corrected sum of squared correlations.
"""
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import EstimationError
from .quad_tests import _report
from .screening import high_criticism_delta, screen


@dataclass(frozen=True)
class WithinFit:
    beta_hat: np.ndarray
    residuals: np.ndarray  # (n, T)
    demeaned: bool = True


@dataclass(frozen=True)
class PairCorrelations:
    rho_hat: np.ndarray
    v_hat: np.ndarray
    sigma_hat_diag: np.ndarray
    n: int = 0
    t: int = 0


@dataclass(frozen=True)
class CsiConfig:
    delta_override: float = None


def n_pairs(n):
    return n * (n - 1) // 2


def pair_index(i, j, n):
    """Position of 0-based pair (i, j), i < j, in the stacked vector."""
    if not 0 <= i < j < n:
        raise ValueError(f"need 0 <= i < j < n, got i={i}, j={j}, n={n}")
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def _row_start(i, n):
    return i * n - i * (i + 1) // 2


def pair_from_index(k, n):
    """Inverse of :func:`pair_index`."""
    if not 0 <= k < n_pairs(n):
        raise ValueError(f"pair index {k} out of range for n={n}")
    i = int((2 * n - 1 - math.sqrt((2 * n - 1) ** 2 - 8 * k)) // 2)
    while i + 1 < n - 1 and _row_start(i + 1, n) <= k:
        i += 1
    while _row_start(i, n) > k:
        i -= 1
    return i, k - _row_start(i, n) + i + 1


def within_ols(y, x):
    """Pooled OLS on time-demeaned data; x is a list of regressor panels."""
    yv = np.asarray(y.values, dtype=np.float64)
    xs = [np.asarray(p.values, dtype=np.float64) for p in x]
    if not xs:
        raise EstimationError("need at least one regressor")
    for p in xs:
        if p.shape != yv.shape:
            raise EstimationError(f"regressor shape {p.shape} does not match y {yv.shape}")
    n, t = yv.shape
    k = len(xs)
    if t < k + 2:
        raise EstimationError(f"need T >= p + 2, got T={t}, p={k}")
    yd = yv - yv.mean(axis=1, keepdims=True)
    xd = np.stack([p - p.mean(axis=1, keepdims=True) for p in xs], axis=-1)  # (n, T, p)
    design = xd.reshape(n * t, k)
    raw_norm = np.array([np.linalg.norm(p) for p in xs])
    absorbed = np.linalg.norm(design, axis=0) <= 1e-10 * (raw_norm + 1e-300)
    if absorbed.any() or np.linalg.matrix_rank(design) < k:
        raise EstimationError("pooled within design is singular (regressor absorbed by unit effects?)")
    beta, *_ = np.linalg.lstsq(design, yd.ravel(), rcond=None)
    resid = yd - (xd @ beta)
    return WithinFit(beta, resid, True)


def pair_correlations(residuals):
    u = np.asarray(residuals, dtype=np.float64)
    n, t = u.shape
    ss = np.mean(u**2, axis=1)
    dead = np.flatnonzero(ss == 0)
    if dead.size:
        raise EstimationError(f"unit {int(dead[0])} has zero residual variance")
    rho = kernels.pair_correlations_kernel(u)
    rho = np.clip(rho, -1.0, 1.0)
    v = (1.0 - rho**2) ** 2 / t
    return PairCorrelations(rho, v, ss, n, t)


def bfk_j1(rho_hat, n, t):
    """sqrt(1/(n(n-1))) * sum_{i<j} (T rho_ij^2 - 1) - n / (2(T-1))."""
    rho = np.asarray(rho_hat, dtype=np.float64).ravel()
    if rho.size != n_pairs(n):
        raise ValueError(f"expected {n_pairs(n)} correlations for n={n}, got {rho.size}")
    if t < 2:
        raise ValueError("need T >= 2")
    return math.sqrt(1.0 / (n * (n - 1))) * float(np.sum(t * rho**2 - 1.0)) - n / (2.0 * (t - 1))


def power_enhanced_csi(y, x, config=CsiConfig()):
    """J = J0 + J1 for the null of no cross-sectional error correlation."""
    fit = within_ols(y, x)
    pc = pair_correlations(fit.residuals)
    n, t = pc.n, pc.t
    npairs = n_pairs(n)
    if npairs < 2:
        raise EstimationError("need at least 3 units for the independence test")
    delta = config.delta_override if config.delta_override is not None else high_criticism_delta(npairs, t)
    scr = screen(pc.rho_hat, pc.v_hat, delta, zero_variance="select")
    j1 = bfk_j1(pc.rho_hat, n, t)
    labels = [
        "({}, {})".format(*(y.unit_labels[a] for a in pair_from_index(k, n))) for k in scr.selected
    ]
    rep = _report(scr, j1, None, n, t, "csi", [])
    rep.selected_labels = labels
    rep.extras = {
        "n_pairs": npairs,
        "beta_hat": [float(b) for b in fit.beta_hat],
        "pairs": [
            {
                "unit_i": y.unit_labels[pair_from_index(k, n)[0]],
                "unit_j": y.unit_labels[pair_from_index(k, n)[1]],
                "rho_hat": float(pc.rho_hat[k]),
                "tstat": float(scr.standardized[k]),
            }
            for k in scr.selected
        ],
    }
    return rep


def write_pairs_csv(report, path):
    """Selected pairs as CSV with columns unit_i, unit_j, rho_hat, tstat."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_i", "unit_j", "rho_hat", "tstat"])
        for p in report.extras.get("pairs", []):
            w.writerow([p["unit_i"], p["unit_j"], repr(p["rho_hat"]), repr(p["tstat"])])
