"""Augmented Dickey-Fuller unit-root test, constant-only specification.

Lag order: Schwert's rule floor(12 * (n/100)**0.25) as the starting point,
then general-to-specific elimination on the last lag's t-statistic at 10%.

p-values use MacKinnon's (1994) approximate asymptotic distribution with the
response-surface coefficients for one I(1) series and a constant term;
critical values use MacKinnon's (2010) finite-sample surface.

References
----------
MacKinnon, J.G. 1994. "Approximate asymptotic distribution functions for
    unit-root and cointegration tests." JBES 12, 167-76.
MacKinnon, J.G. 2010. "Critical Values for Cointegration Tests." Queen's
    University, Dept of Economics, Working Paper 1227.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# MacKinnon (1994), regression "c", N = 1.
TAU_MAX = 2.74
TAU_MIN = -18.83
TAU_STAR = -1.61
TAU_SMALLP = (2.1659, 1.4412, 3.8269e-2)
TAU_LARGEP = (1.7339, 9.3202e-1, -1.2745e-1, -1.0368e-2)

# MacKinnon (2010), regression "c", N = 1: cv = b0 + b1/T + b2/T^2 + b3/T^3.
CRIT_2010 = {
    "1%": (-3.43035, -6.5393, -16.786, -79.433),
    "5%": (-2.86154, -2.8903, -4.234, -40.040),
    "10%": (-2.56677, -1.5384, -2.809, 0.0),
}

MIN_NOBS = 20
LAG_T_CRIT = 1.6448536269514722  # two-sided 10% normal quantile


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class AdfResult:
    stat: float
    p_value: float
    lag_order: int
    nobs: int
    critical_values: dict

    @property
    def stationary(self) -> bool:
        return self.p_value < 0.05


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def mackinnon_p(stat: float) -> float:
    if stat > TAU_MAX:
        return 1.0
    if stat < TAU_MIN:
        return 0.0
    coef = TAU_SMALLP if stat <= TAU_STAR else TAU_LARGEP
    return _norm_cdf(sum(c * stat**k for k, c in enumerate(coef)))


def mackinnon_crit(nobs: int) -> dict:
    return {k: sum(b / nobs**i for i, b in enumerate(v)) for k, v in CRIT_2010.items()}


def schwert_maxlag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def _design(x: np.ndarray, lags: int, start: int):
    """Regressors [1, x_{t-1}, dx_{t-1..t-lags}] and target dx_t for t >= start."""
    dx = np.diff(x)
    rows = np.arange(start, len(dx))
    cols = [np.ones(len(rows)), x[rows]]
    cols += [dx[rows - k] for k in range(1, lags + 1)]
    return np.column_stack(cols), dx[rows]


def _ols_t(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    dof = X.shape[0] - X.shape[1]
    s2 = resid @ resid / dof
    if not s2 > 0:
        raise InsufficientData("degenerate regression: zero residual variance")
    cov_diag = np.diag(np.linalg.pinv(X.T @ X))
    return beta / np.sqrt(s2 * cov_diag)


def adf_test(values, max_lag: int | None = None, autolag: bool = True) -> AdfResult:
    """ADF test with a constant; ``autolag=False`` fixes the lag at ``max_lag``."""
    x = np.asarray(values, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("adf_test requires finite values")
    n = len(x)
    k_max = schwert_maxlag(n) if max_lag is None else int(max_lag)
    if n - 1 - k_max < MIN_NOBS:
        raise InsufficientData(
            f"insufficient data: {n} observations leave {n - 1 - k_max} after lag trimming "
            f"(need {MIN_NOBS})"
        )
    lag = k_max
    if autolag:
        # common sample across candidate lags so t-tests are comparable
        while lag > 0:
            X, y = _design(x, lag, k_max)
            t = _ols_t(X, y)
            if abs(t[-1]) > LAG_T_CRIT:
                break
            lag -= 1
    X, y = _design(x, lag, lag)
    stat = float(_ols_t(X, y)[1])
    nobs = len(y)
    return AdfResult(stat, mackinnon_p(stat), lag, nobs, mackinnon_crit(nobs))
