"""Small estimator helpers shared by the simulation and experiment layers."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats


def mean_se(values) -> tuple:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), math.inf
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def weighted_line_fit(x, y, se=None) -> dict:
    """Least squares line ``y = intercept + slope x`` with weights ``1/se^2``.

    Returns slope, intercept, their standard errors and residuals. With
    weights the parameter covariance is ``(X^T W X)^{-1}`` (known variances).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points")
    w = np.ones_like(x) if se is None else 1.0 / np.asarray(se, dtype=float) ** 2
    X = np.column_stack([np.ones_like(x), x])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ y)
    resid = y - X @ beta
    if se is None:
        dof = max(x.size - 2, 1)
        cov = cov * float(resid @ resid) / dof
    return {
        "intercept": float(beta[0]),
        "slope": float(beta[1]),
        "intercept_se": float(math.sqrt(cov[0, 0])),
        "slope_se": float(math.sqrt(cov[1, 1])),
        "residuals": resid.tolist(),
    }
