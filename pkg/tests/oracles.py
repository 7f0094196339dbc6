"""Independent reference implementations used as test oracles.

These deliberately avoid the package's code paths: normal equations instead
of QR, a quadrature of the Student-t density instead of scipy's CDF, and
scalar loops for Pearson sums.
"""
import math

import numpy as np
from scipy import integrate


def t_density(x, dof):
    logc = math.lgamma((dof + 1) / 2) - math.lgamma(dof / 2) - 0.5 * math.log(dof * math.pi)
    return math.exp(logc - (dof + 1) / 2 * math.log1p(x * x / dof))


def t_two_sided_p(t, dof):
    if math.isinf(t):
        return 0.0
    # integrate the central part, which is well conditioned for quad
    inner, _ = integrate.quad(t_density, 0.0, abs(t), args=(dof,), epsabs=1e-13, epsrel=1e-12)
    return max(0.0, 1.0 - 2.0 * inner)


def ols_normal_equations(X, y):
    """Coefficients, SE, t, p, RSS via (X'X)^-1 X'y."""
    X = np.asarray(X, dtype=float)
    A = np.column_stack([np.ones(len(y)), X])
    xtx_inv = np.linalg.inv(A.T @ A)
    beta = xtx_inv @ (A.T @ y)
    resid = y - A @ beta
    n, k = A.shape
    rss = float(resid @ resid)
    se = np.sqrt(rss / (n - k) * np.diag(xtx_inv))
    t = beta / se
    p = np.array([t_two_sided_p(v, n - k) for v in t])
    return beta, se, t, p, rss


def info_criteria(rss, n, n_coef):
    """AIC, BIC for a Gaussian model with ``n_coef`` regression coefficients plus variance."""
    q = n_coef + 1
    neg2ll = n * math.log(2 * math.pi * rss / n) + n
    return neg2ll + 2 * q, neg2ll + q * math.log(n)


def cp(rss, sigma2_full, n, n_coef):
    return rss / sigma2_full - n + 2 * n_coef


def adj_r2(rss, tss, n, n_predictors):
    return 1 - (rss / (n - n_predictors - 1)) / (tss / (n - 1))
