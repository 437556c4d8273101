from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from powerenhance.errors import EstimationError, PanelError
from powerenhance.factor_ols import alpha_tstats, closed_form_intercepts, factor_moments, fit_factor_model
from powerenhance.panel import FactorPanel, Panel


def _panels(y, f):
    y, f = np.atleast_2d(y), np.atleast_2d(f)
    times = [f"t{i}" for i in range(y.shape[1])]
    return (
        Panel(y, [f"u{i}" for i in range(y.shape[0])], times),
        FactorPanel(f, [f"f{k}" for k in range(f.shape[0])], times),
    )


def _exact_ols(y_row, f):
    """Normal equations (X'X) b = X'y solved in exact rational arithmetic."""
    t = len(y_row)
    x = [[Fraction(1)] + [Fraction(fk[s]) for fk in f] for s in range(t)]
    p = len(x[0])
    a = [[sum(x[s][i] * x[s][j] for s in range(t)) for j in range(p)] for i in range(p)]
    b = [sum(x[s][i] * Fraction(y_row[s]) for s in range(t)) for i in range(p)]
    for c in range(p):  # Gauss-Jordan
        piv = next(r for r in range(c, p) if a[r][c] != 0)
        a[c], a[piv], b[c], b[piv] = a[piv], a[c], b[piv], b[c]
        for r in range(p):
            if r != c and a[r][c] != 0:
                m = a[r][c] / a[c][c]
                a[r] = [u - m * v for u, v in zip(a[r], a[c])]
                b[r] -= m * b[c]
    return [float(b[i] / a[i][i]) for i in range(p)]


FIX_Y = np.array([[1.5, -0.25, 2.0, 0.75, -1.0, 3.25], [0.1, 0.4, -0.3, 0.2, 0.6, -0.5]])
FIX_F = np.array([[0.5, 1.0, -1.5, 2.0, 0.25, -0.75]])


def test_zero_mean_factor_collapses():
    a, b = 3.0, 5.0
    f_bar, w, af = factor_moments(np.array([[1.0, -1.0]]))
    assert f_bar[0] == 0.0 and w[0] == 0.0 and af == 1.0
    assert closed_form_intercepts([[a, b]], [[1.0, -1.0]])[0] == (a + b) / 2


def test_constant_factor_singular():
    y, f = _panels(np.random.default_rng(1).normal(size=(3, 10)), np.full((1, 10), 0.0))
    with pytest.raises(EstimationError, match="singular"):
        fit_factor_model(y, f)
    f2 = np.vstack([np.arange(10.0), 2 * np.arange(10.0)])
    y, f = _panels(np.ones((2, 10)), f2)
    with pytest.raises(EstimationError, match="singular|ill-conditioned"):
        fit_factor_model(y, f)


def test_t_must_exceed_k_plus_one():
    f = np.array([[1.0, 2.0, 4.0], [0.5, -1.0, 2.0]])
    with pytest.raises(PanelError):
        FactorPanel(f, ["a", "b"], ["t0", "t1", "t2"])
    y = Panel(np.ones((2, 3)), ["u0", "u1"], ["t0", "t1", "t2"])
    with pytest.raises(EstimationError, match="T > K"):
        fit_factor_model(y, SimpleNamespace(values=f))


def test_near_constant_factor_hits_condition_cap():
    y, f = _panels(np.ones((1, 5)), np.array([[1.0, 1.0, 1.0, 1.0, 1.0 + 1e-9]]))
    with pytest.raises(EstimationError):
        fit_factor_model(y, f)


def test_matches_exact_normal_equations():
    fit = fit_factor_model(*_panels(FIX_Y, FIX_F))
    for j in range(2):
        theta, b = _exact_ols(FIX_Y[j], FIX_F)
        assert abs(fit.theta_hat[j] - theta) < 1e-10
        assert abs(fit.b_hat[j, 0] - b) < 1e-10


def test_frozen_values():
    # exact rationals of the fixture's least-squares solution
    fit = fit_factor_model(*_panels(FIX_Y, FIX_F))
    np.testing.assert_allclose(fit.theta_hat, [901 / 744, 53 / 1860], rtol=1e-12)
    np.testing.assert_allclose(fit.b_hat[:, 0], [-21 / 31, 34 / 155], rtol=1e-12)


def test_tstats_match_oracle():
    fit = fit_factor_model(*_panels(FIX_Y, FIX_F))
    t = FIX_Y.shape[1]
    fbar = FIX_F.mean()
    a = 1 - fbar**2 / np.mean(FIX_F**2)
    for j in range(2):
        theta, b = _exact_ols(FIX_Y[j], FIX_F)
        u = FIX_Y[j] - theta - b * FIX_F[0]
        v = np.mean(u**2) / (t * a)
        assert abs(alpha_tstats(fit)[j] - theta / np.sqrt(v)) < 1e-10


def test_tstats_definition():
    class Fake:
        theta_hat = np.array([2.0, 0.0])
        v_hat = np.array([4.0, 1.0])
        unit_labels = ("a", "b")

    np.testing.assert_array_equal(alpha_tstats(Fake), [1.0, 0.0])


def test_tstats_zero_variance_cites_unit():
    f = np.arange(8.0)[None, :] ** 1.5
    y = np.vstack([np.random.default_rng(2).normal(size=8), 1.0 + 2.0 * f[0]])
    fit = fit_factor_model(*_panels(y, f))
    assert fit.v_hat[1] < 1e-25  # exact fit up to rounding
    fit = type(fit)(fit.theta_hat, fit.b_hat, fit.residuals, np.array([fit.v_hat[0], 0.0]), fit.a_fT,
                    fit.w, fit.f_bar, fit.unit_labels)
    with pytest.raises(EstimationError, match="'u1'"):
        alpha_tstats(fit)


def test_residual_orthogonality(rng):
    f = rng.normal(size=(3, 40)) + 0.3
    y = rng.normal(size=(5, 40))
    fit = fit_factor_model(*_panels(y, f))
    assert np.abs(fit.residuals.sum(axis=1)).max() <= 1e-10 * 40
    assert np.abs(fit.residuals @ f.T).max() <= 1e-10 * 40
    assert 0 < fit.a_fT <= 1
    np.testing.assert_allclose(fit.v_hat, np.mean(fit.residuals**2, axis=1) / (40 * fit.a_fT))


def test_random_fixtures_vs_lstsq():
    rng = np.random.default_rng(7)
    for _ in range(100):
        k = int(rng.integers(1, 4))
        t = int(rng.integers(k + 3, 60))
        f = rng.normal(size=(k, t)) + rng.normal(size=(k, 1))
        y = rng.normal(size=(4, t)) * 3
        fit = fit_factor_model(*_panels(y, f))
        x = np.column_stack([np.ones(t), f.T])
        coef = np.linalg.solve(x.T @ x, x.T @ y.T)
        np.testing.assert_allclose(fit.theta_hat, coef[0], atol=1e-8)
        np.testing.assert_allclose(fit.b_hat, coef[1:].T, atol=1e-8)


@given(st.floats(0.01, 100.0), st.integers(0, 3))
def test_scaling_unit(c, j):
    rng = np.random.default_rng(3)
    f = rng.normal(size=(2, 30)) + 0.2
    y = rng.normal(size=(4, 30))
    base = fit_factor_model(*_panels(y, f))
    y2 = y.copy()
    y2[j] *= c
    fit = fit_factor_model(*_panels(y2, f))
    assert fit.theta_hat[j] == pytest.approx(c * base.theta_hat[j], rel=1e-9, abs=1e-12)
    assert fit.v_hat[j] == pytest.approx(c * c * base.v_hat[j], rel=1e-9)
    np.testing.assert_allclose(alpha_tstats(fit), alpha_tstats(base), rtol=1e-8, atol=1e-10)


@given(st.floats(-50.0, 50.0), st.integers(0, 1))
def test_adding_factor_shifts_loading(c, k):
    rng = np.random.default_rng(4)
    f = rng.normal(size=(2, 25)) + 0.5
    y = rng.normal(size=(3, 25))
    base = fit_factor_model(*_panels(y, f))
    y2 = y.copy()
    y2[1] += c * f[k]
    fit = fit_factor_model(*_panels(y2, f))
    assert fit.b_hat[1, k] == pytest.approx(base.b_hat[1, k] + c, abs=1e-8)
    assert fit.theta_hat[1] == pytest.approx(base.theta_hat[1], abs=1e-8)
    np.testing.assert_allclose(fit.residuals, base.residuals, atol=1e-8)
