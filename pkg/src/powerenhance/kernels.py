"""Hot numeric kernels, compiled with numba when available.

Every kernel has a pure-numpy twin. The active implementation is picked once at
import time:

* ``POWERENHANCE_BACKEND=numpy`` forces the numpy path;
* ``POWERENHANCE_BACKEND=numba`` (default) uses numba if it imports, else numpy.

Both variants stay importable (``*_numpy`` / ``*_numba``) so tests and the
benchmark can compare them directly.
"""
import os

import numpy as np

HARD, SOFT, SCAD = 0, 1, 2
RULE_CODES = {"hard": HARD, "soft": SOFT, "scad": SCAD}

_requested = os.environ.get("POWERENHANCE_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"POWERENHANCE_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


# --------------------------------------------------------------------------
# generalized thresholding of off-diagonal covariance entries
# --------------------------------------------------------------------------

def threshold_offdiag_numpy(s, c, scale, rule, scad_a):
    diag = np.diag(s).copy()
    tau = c * np.sqrt(np.outer(diag, diag) * scale)
    absx = np.abs(s)
    if rule == HARD:
        out = np.where(absx > tau, s, 0.0)
    elif rule == SOFT:
        out = np.sign(s) * np.maximum(absx - tau, 0.0)
    elif rule == SCAD:
        soft = np.sign(s) * np.maximum(absx - tau, 0.0)
        mid = ((scad_a - 1.0) * s - np.sign(s) * scad_a * tau) / (scad_a - 2.0)
        out = np.where(absx <= 2.0 * tau, soft, np.where(absx <= scad_a * tau, mid, s))
    else:
        raise ValueError(f"unknown rule code {rule}")
    np.fill_diagonal(out, diag)
    return out


def threshold_loss_numpy(s_train, s_valid, cs, scale, rule, scad_a):
    """Squared Frobenius distance between thresholded s_train and s_valid, one per C in cs."""
    return np.array(
        [np.sum((threshold_offdiag_numpy(s_train, c, scale, rule, scad_a) - s_valid) ** 2) for c in cs]
    )


def pair_correlations_numpy(resid):
    n, t = resid.shape
    sigma = resid @ resid.T / t
    d = np.sqrt(np.diag(sigma))
    iu, ju = np.triu_indices(n, 1)
    return sigma[iu, ju] / (d[iu] * d[ju])


if HAVE_NUMBA:

    @njit(cache=True)
    def _h(x, tau, rule, scad_a):
        ax = abs(x)
        sgn = 1.0 if x > 0 else (-1.0 if x < 0 else 0.0)
        if rule == 0:
            return x if ax > tau else 0.0
        soft = sgn * max(ax - tau, 0.0)
        if rule == 1:
            return soft
        if ax <= 2.0 * tau:
            return soft
        if ax <= scad_a * tau:
            return ((scad_a - 1.0) * x - sgn * scad_a * tau) / (scad_a - 2.0)
        return x

    @njit(cache=True)
    def _threshold_offdiag_jit(s, c, scale, rule, scad_a):
        n = s.shape[0]
        out = np.empty_like(s)
        for i in range(n):
            out[i, i] = s[i, i]
            for j in range(i + 1, n):
                tau = c * np.sqrt(s[i, i] * s[j, j] * scale)
                hij = _h(s[i, j], tau, rule, scad_a)
                hji = _h(s[j, i], tau, rule, scad_a)
                out[i, j] = hij
                out[j, i] = hji
        return out

    @njit(cache=True)
    def _threshold_loss_jit(s_train, s_valid, cs, scale, rule, scad_a):
        n = s_train.shape[0]
        m = cs.shape[0]
        acc = np.zeros(m)
        diag = 0.0
        for i in range(n):
            d = s_train[i, i] - s_valid[i, i]
            diag += d * d
            for j in range(i + 1, n):
                base = np.sqrt(s_train[i, i] * s_train[j, j] * scale)
                x1, x2 = s_train[i, j], s_train[j, i]
                v1, v2 = s_valid[i, j], s_valid[j, i]
                for k in range(m):
                    tau = cs[k] * base
                    d1 = _h(x1, tau, rule, scad_a) - v1
                    d2 = _h(x2, tau, rule, scad_a) - v2
                    acc[k] += d1 * d1 + d2 * d2
        return acc + diag

    @njit(cache=True)
    def _pair_correlations_jit(resid):
        n, t = resid.shape
        ss = np.empty(n)
        for i in range(n):
            acc = 0.0
            for k in range(t):
                acc += resid[i, k] * resid[i, k]
            ss[i] = acc / t
        out = np.empty(n * (n - 1) // 2)
        p = 0
        for i in range(n - 1):
            for j in range(i + 1, n):
                acc = 0.0
                for k in range(t):
                    acc += resid[i, k] * resid[j, k]
                out[p] = (acc / t) / (np.sqrt(ss[i]) * np.sqrt(ss[j]))
                p += 1
        return out

    def threshold_offdiag_numba(s, c, scale, rule, scad_a):
        if rule not in (HARD, SOFT, SCAD):
            raise ValueError(f"unknown rule code {rule}")
        s = np.ascontiguousarray(s, dtype=np.float64)
        return _threshold_offdiag_jit(s, float(c), float(scale), int(rule), float(scad_a))

    def threshold_loss_numba(s_train, s_valid, cs, scale, rule, scad_a):
        if rule not in (HARD, SOFT, SCAD):
            raise ValueError(f"unknown rule code {rule}")
        return _threshold_loss_jit(
            np.ascontiguousarray(s_train, dtype=np.float64),
            np.ascontiguousarray(s_valid, dtype=np.float64),
            np.asarray(cs, dtype=np.float64),
            float(scale),
            int(rule),
            float(scad_a),
        )

    def pair_correlations_numba(resid):
        return _pair_correlations_jit(np.ascontiguousarray(resid, dtype=np.float64))

else:  # pragma: no cover
    threshold_offdiag_numba = None
    threshold_loss_numba = None
    pair_correlations_numba = None


if BACKEND == "numba":
    threshold_offdiag = threshold_offdiag_numba
    threshold_loss = threshold_loss_numba
else:
    threshold_offdiag = threshold_offdiag_numpy
    threshold_loss = threshold_loss_numpy
# one BLAS product beats the jitted pair loop on every size we timed, so both backends use it
pair_correlations_kernel = pair_correlations_numpy
