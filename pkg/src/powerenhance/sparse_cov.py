"""Thresholded estimation of a sparse residual covariance and its inverse.

Off-diagonal sample covariances s_ij are shrunk by a generalized thresholding
rule with the entry-adaptive level

    tau_ij = C * sqrt(s_ii * s_jj * log(N) / T),

Two ways to pick C are offered. ``choose_C`` takes the smallest grid value
(plus one step of margin) that leaves the estimate positive definite.
``choose_C_cv`` restricts the grid to values at or above that point and picks
the one whose thresholded training covariance best predicts held-out sample
covariances (contiguous validation blocks, so the result is deterministic).
The minimal-PD choice sits on the edge of singularity and badly inflates
quadratic forms in the inverse, which is why the CV choice is the default for
the Wald statistic.
"""
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from . import kernels
from .errors import EstimationError, NotPositiveDefiniteError

RULES = ("hard", "soft", "scad")
SCAD_A = 3.7
DEFAULT_GRID = (0.0, 3.0, 0.05)
DEFAULT_EPS_SCALE = 1e-6


@dataclass(frozen=True)
class SparseCovEstimate:
    sigma_hat: np.ndarray
    inverse: np.ndarray
    c_used: float
    rule: str
    kept_offdiag: int
    min_eigen: float
    chol: tuple = None  # scipy cho_factor output, reused for solves


@dataclass(frozen=True)
class SparsityDiag:
    m_N: int
    D_N: int


def sample_residual_cov(residuals):
    """(1/T) U U' with uncentered residuals."""
    u = np.asarray(residuals, dtype=np.float64)
    if u.ndim != 2 or u.shape[1] < 2:
        raise ValueError(f"residuals must be N x T with T >= 2, got shape {u.shape}")
    s = u @ u.T / u.shape[1]
    return (s + s.T) / 2.0


def _rule_code(rule):
    try:
        return kernels.RULE_CODES[rule]
    except KeyError:
        raise ValueError(f"rule must be one of {RULES}, got {rule!r}") from None


def threshold_cov(s, t, rule="soft", c=1.0):
    """Apply h_ij to every off-diagonal entry; the diagonal is left untouched."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"s must be square, got shape {s.shape}")
    if c < 0:
        raise ValueError(f"C must be nonnegative, got {c}")
    if np.any(np.diag(s) <= 0):
        raise EstimationError("sample covariance has a nonpositive diagonal entry")
    n = s.shape[0]
    scale = math.log(n) / t if n > 1 else 0.0
    return kernels.threshold_offdiag(s, c, scale, _rule_code(rule), SCAD_A)


def _is_pd(m, eps):
    try:
        linalg.cholesky(m - eps * np.eye(m.shape[0]), lower=True, check_finite=False)
    except linalg.LinAlgError:
        return False
    return True


def _grid(grid):
    c_min, c_max, step = grid
    if step <= 0 or c_min < 0 or c_max < c_min:
        raise ValueError(f"bad C grid {grid}")
    count = int(math.floor((c_max - c_min) / step + 1e-9)) + 1
    return [c_min + k * step for k in range(count)], step


def choose_C(s, t, rule="soft", grid=DEFAULT_GRID, eps_pd=None):
    """Scan the grid for the first C giving min eigenvalue >= eps_pd, then add one step."""
    s = np.asarray(s, dtype=np.float64)
    if eps_pd is None:
        eps_pd = DEFAULT_EPS_SCALE * float(np.mean(np.diag(s)))
    cs, step = _grid(grid)
    chosen = None
    for k, c in enumerate(cs):
        if _is_pd(threshold_cov(s, t, rule, c), eps_pd):
            chosen = k
            break
    if chosen is None:
        m = threshold_cov(s, t, rule, cs[-1])
        lam = float(linalg.eigvalsh(m, subset_by_index=[0, 0])[0])
        raise NotPositiveDefiniteError(
            f"no C in [{cs[0]:g}, {cs[-1]:g}] makes the {rule}-thresholded covariance "
            f"positive definite (min eigenvalue at C={cs[-1]:g}: {lam:.4g})",
            min_eigen=lam,
            c_max=cs[-1],
        )
    # one step of safety margin; keep stepping in the rare case PD is lost
    c_used = cs[chosen] + step
    sigma = threshold_cov(s, t, rule, c_used)
    while not _is_pd(sigma, eps_pd):
        c_used += step
        sigma = threshold_cov(s, t, rule, c_used)
    return _finish(sigma, c_used, rule)


def cv_folds(t, n_folds=None):
    """Contiguous validation blocks of length floor(T / log T)."""
    if t < 8:
        raise ValueError(f"cross-validation needs T >= 8, got {t}")
    n2 = max(2, int(math.floor(t / math.log(t))))
    max_folds = t // n2
    n_folds = min(max_folds, 5) if n_folds is None else int(n_folds)
    if not 1 <= n_folds <= max_folds:
        raise ValueError(f"n_folds must be in [1, {max_folds}] for T={t}, got {n_folds}")
    # spread the blocks evenly over the sample
    starts = np.linspace(0, t - n2, n_folds).round().astype(int)
    return [np.arange(a, a + n2) for a in starts]


def cv_losses(residuals, cs, rule="soft", n_folds=None):
    """Summed squared Frobenius prediction loss for each C in cs."""
    u = np.asarray(residuals, dtype=np.float64)
    n, t = u.shape
    code = _rule_code(rule)
    loss = np.zeros(len(cs))
    for valid in cv_folds(t, n_folds):
        train = np.ones(t, dtype=bool)
        train[valid] = False
        s1 = sample_residual_cov(u[:, train])
        s2 = sample_residual_cov(u[:, valid])
        if np.any(np.diag(s1) <= 0):
            raise EstimationError("training covariance has a nonpositive diagonal entry")
        scale = math.log(n) / int(train.sum()) if n > 1 else 0.0
        loss += kernels.threshold_loss(s1, s2, np.asarray(cs, dtype=np.float64), scale, code, SCAD_A)
    return loss


def choose_C_cv(residuals, rule="soft", grid=DEFAULT_GRID, eps_pd=None, n_folds=None):
    """CV choice of C over the part of the grid at or above the minimal-PD choice."""
    u = np.asarray(residuals, dtype=np.float64)
    t = u.shape[1]
    s = sample_residual_cov(u)
    if eps_pd is None:
        eps_pd = DEFAULT_EPS_SCALE * float(np.mean(np.diag(s)))
    floor_est = choose_C(s, t, rule, grid, eps_pd)
    cs, step = _grid(grid)
    cands = [c for c in cs if c >= floor_est.c_used - 1e-12 * step]
    if len(cands) < 2:
        return floor_est
    loss = cv_losses(u, cands, rule, n_folds)
    # walk up from the CV minimizer until the full-sample estimate is PD
    for c in cands[int(np.argmin(loss)):]:
        sigma = threshold_cov(s, t, rule, c)
        if _is_pd(sigma, eps_pd):
            return _finish(sigma, c, rule)
    return floor_est


def _finish(sigma, c_used, rule):
    n = sigma.shape[0]
    cf = linalg.cho_factor(sigma, lower=True, check_finite=False)
    inv = linalg.cho_solve(cf, np.eye(n), check_finite=False)
    inv = (inv + inv.T) / 2.0
    lam = float(linalg.eigvalsh(sigma, subset_by_index=[0, 0])[0])
    kept = int(np.count_nonzero(sigma) - np.count_nonzero(np.diag(sigma)))
    return SparseCovEstimate(sigma, inv, float(c_used), rule, kept, lam, cf)


def diagonal_estimate(s):
    """Working-independence fallback: keep only the diagonal of s."""
    s = np.asarray(s, dtype=np.float64)
    d = np.diag(s)
    if np.any(d <= 0):
        raise EstimationError("sample covariance has a nonpositive diagonal entry")
    return _finish(np.diag(d), float("inf"), "diagonal")


def sparsity_diag(m):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("sparsity_diag needs a square matrix")
    nz = m != 0
    return SparsityDiag(int(nz.sum(axis=1).max()), int(nz.sum() - np.trace(nz)))


def write_matrix_csv(m, path, labels=None):
    """Dump a square matrix in full symmetric storage (debugging aid)."""
    m = np.asarray(m)
    labels = list(labels) if labels is not None else [str(i + 1) for i in range(m.shape[0])]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + labels)
        for lab, row in zip(labels, m):
            w.writerow([lab] + [repr(float(x)) for x in row])
