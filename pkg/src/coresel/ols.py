"""Ordinary least squares with inference, model-selection metrics, and backward stepwise elimination."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.linalg
from scipy import stats

from .trace import DataError, kfold_indices

INTERCEPT = "(Intercept)"


class SingularMatrixError(ArithmeticError):
    """The design matrix is (numerically) rank deficient."""

    def __init__(self, column: str):
        super().__init__(f"design matrix is rank deficient; column {column!r} is linearly dependent")
        self.column = column


def _design(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(X.shape[0]), X])


def _qr_solve(A, y, names=None, rtol: float = 1e-10):
    """Least squares via column-pivoted QR; returns (beta, R, perm)."""
    Q, R, perm = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        bad = perm[0] if diag.size else 0
        raise SingularMatrixError(names[bad] if names else str(bad))
    small = np.flatnonzero(diag <= rtol * diag[0] * max(A.shape))
    if small.size:
        bad = perm[small[0]]
        raise SingularMatrixError(names[bad] if names else str(bad))
    z = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty_like(z)
    beta[perm] = z
    return beta, R, perm


def lstsq(X, y) -> np.ndarray:
    """Intercept-augmented least-squares coefficients (no inference)."""
    return _qr_solve(_design(X), np.asarray(y, dtype=float))[0]


def t_pvalue(t, dof) -> np.ndarray:
    """Two-sided Student-t p-value; infinite |t| gives 0."""
    return 2.0 * stats.t.sf(np.abs(np.asarray(t, dtype=float)), dof)


@dataclass(frozen=True)
class RegressionFit:
    """OLS fit of ``y = b0 + sum b_i x_i + e``.

    ``coef``, ``se``, ``t`` and ``p`` are ordered as ``names``: the
    intercept first, then the features. ``k`` counts every estimated
    coefficient including the intercept; ``sigma2 = rss / (n - k)``.
    """

    feature_names: tuple[str, ...]
    coef: np.ndarray
    se: np.ndarray
    t: np.ndarray
    p: np.ndarray
    rss: float
    tss: float
    n: int
    k: int

    @property
    def names(self) -> tuple[str, ...]:
        return (INTERCEPT,) + self.feature_names

    @property
    def dof(self) -> int:
        return self.n - self.k

    @property
    def sigma2(self) -> float:
        return self.rss / self.dof

    @property
    def r2(self) -> float:
        return 1.0 - self.rss / self.tss if self.tss > 0 else 1.0

    @property
    def adj_r2(self) -> float:
        return adjusted_r2(self.r2, self.n, self.k - 1)

    @property
    def intercept(self) -> float:
        return float(self.coef[0])

    @property
    def slopes(self) -> np.ndarray:
        return self.coef[1:]

    def feature_pvalues(self) -> dict:
        return dict(zip(self.feature_names, self.p[1:]))

    def predict(self, X) -> np.ndarray:
        return _design(X) @ self.coef


def fit_ols(X, y, feature_names=None) -> RegressionFit:
    """Fit OLS with an intercept; solve by QR, SE from ``sigma2 * diag((X'X)^-1)``.

    Raises :class:`SingularMatrixError` naming a dependent column when the
    design is rank deficient, and :class:`DataError` when ``n < d + 2``.
    """
    A = _design(X)
    y = np.asarray(y, dtype=float).ravel()
    n, k = A.shape
    if y.shape[0] != n:
        raise DataError(f"X has {n} rows, y has {y.shape[0]}")
    if n < k + 1:
        raise DataError(f"need n >= d + 2 observations, got n={n} for d={k - 1}")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(k - 1))
    if len(names) != k - 1:
        raise ValueError("feature_names length does not match X")
    beta, R, perm = _qr_solve(A, y, (INTERCEPT,) + names)
    resid = y - A @ beta
    rss = float(resid @ resid)
    # exact fits leave only rounding residue; snap it to zero
    if rss <= n * (1e-13 * max(1.0, float(np.max(np.abs(y))))) ** 2:
        rss = 0.0
    tss = float(np.sum((y - y.mean()) ** 2))
    rinv = scipy.linalg.solve_triangular(R, np.eye(k))
    xtx_inv_diag = np.empty(k)
    xtx_inv_diag[perm] = np.sum(rinv ** 2, axis=1)
    se = np.sqrt(rss / (n - k) * xtx_inv_diag)
    t, p = _t_and_p(beta, se, n - k)
    return RegressionFit(names, beta, se, t, p, rss, tss, n, k)


def _t_and_p(coef, se, dof):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / np.where(se > 0, se, 1.0), np.inf)
    p = np.where(np.isinf(t), 0.0, t_pvalue(t, dof))
    return t, np.clip(p, 0.0, 1.0)


def t_and_p(fit: RegressionFit) -> tuple[np.ndarray, np.ndarray]:
    """t = coef / SE and two-sided p-values with ``n - k`` dof.

    A zero standard error (perfect fit) yields ``t = +inf`` and ``p = 0``.
    """
    return _t_and_p(fit.coef, fit.se, fit.dof)


def log_likelihood(rss: float, n: int) -> float:
    """Maximized Gaussian log-likelihood; ``+inf`` when ``rss == 0``."""
    if rss <= 0:
        return math.inf
    return -0.5 * n * (math.log(2 * math.pi) + math.log(rss / n) + 1.0)


def aic(loglik: float, k: int) -> float:
    return 2 * k - 2 * loglik


def bic(loglik: float, k: int, n: int) -> float:
    return k * math.log(n) - 2 * loglik


def mallows_cp(rss: float, sigma2: float, n: int, k: int) -> float:
    return rss / sigma2 - (n - 2 * k)


def adjusted_r2(r2: float, n: int, p: int) -> float:
    """Adjusted R^2 for ``p`` predictors (intercept excluded)."""
    return 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)


@dataclass(frozen=True)
class Metrics:
    aic: float
    bic: float
    cp: float
    adj_r2: float


def metrics(fit: RegressionFit, sigma2_full: float | None = None) -> Metrics:
    """AIC, BIC, Mallows' Cp and adjusted R^2 of ``fit``.

    The likelihood parameter count is ``fit.k + 1`` (coefficients plus the
    error variance). Cp uses ``sigma2_full``, the error-variance estimate of
    the full model (the fit's own estimate when omitted). A perfect fit
    gives ``-inf`` for AIC and BIC.
    """
    ll = log_likelihood(fit.rss, fit.n)
    kl = fit.k + 1
    s2 = fit.sigma2 if sigma2_full is None else sigma2_full
    cp = mallows_cp(fit.rss, s2, fit.n, fit.k) if s2 > 0 else math.nan
    return Metrics(aic(ll, kl), bic(ll, kl, fit.n), cp, fit.adj_r2)


def kfold_cv(X, y, k: int = 5, seed=0) -> float:
    """Mean over folds of held-out OLS mean squared error."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n = len(y)
    if k > n:
        raise DataError(f"K={k} exceeds n={n}")
    errors = []
    for test in kfold_indices(n, k, seed):
        train = np.ones(n, dtype=bool)
        train[test] = False
        beta = lstsq(X[train], y[train])
        errors.append(np.mean((_design(X[test]) @ beta - y[test]) ** 2))
    return float(np.mean(errors))


@dataclass(frozen=True)
class StepRecord:
    """State after one stepwise iteration (``removed is None`` for the initial fit)."""

    features: tuple[str, ...]
    removed: str | None
    removed_p: float
    aic: float
    bic: float
    cp: float
    adj_r2: float
    cv_error: float
    rss: float


@dataclass
class StepwiseTrace:
    records: list
    alpha: float
    stop: str = "significance"
    final: tuple = field(default=())

    @property
    def removals(self) -> list:
        return [r for r in self.records if r.removed is not None]

    @property
    def removed_order(self) -> list[str]:
        return [r.removed for r in self.removals]

    def best_cv_record(self) -> StepRecord:
        return min(self.records, key=lambda r: (r.cv_error, len(r.features)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "n_features", "removed_feature", "p", "AIC", "BIC",
                        "Cp", "adjR2", "CV"])
            for i, r in enumerate(self.records):
                w.writerow([i, len(r.features), r.removed or "",
                            "" if r.removed is None else f"{r.removed_p:.17g}",
                            *(f"{v:.17g}" for v in (r.aic, r.bic, r.cp, r.adj_r2, r.cv_error))])


def backward_stepwise(X, y, alpha: float = 0.05, k: int = 5, seed=0, feature_names=None,
                      stop: str = "significance") -> StepwiseTrace:
    """Backward elimination by p-value.

    Each iteration refits OLS on the surviving features and removes the
    single feature with the largest p-value above ``alpha`` (ties: lowest
    original column index). The intercept is never removed. Every
    iteration's AIC, BIC, Cp (against the initial model's error variance),
    adjusted R^2 and K-fold CV error are recorded.

    With ``stop="significance"`` the loop ends once every p-value is at most
    ``alpha`` or one feature remains. With ``stop="min_cv"`` elimination runs
    down to a single feature and ``final`` is the record with the smallest
    CV error.
    """
    if stop not in ("significance", "min_cv"):
        raise ValueError(f"unknown stop rule {stop!r}")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    d = X.shape[1]
    if d < 1:
        raise DataError("backward stepwise needs at least one feature")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(d))
    active = list(range(d))
    records = []
    sigma2_full = None
    removed, removed_p = None, math.nan
    while True:
        cols = [names[j] for j in active]
        fit = fit_ols(X[:, active], y, cols)
        if sigma2_full is None:
            sigma2_full = fit.sigma2
        mt = metrics(fit, sigma2_full)
        cv = kfold_cv(X[:, active], y, k, seed)
        records.append(StepRecord(tuple(cols), removed, removed_p, mt.aic, mt.bic, mt.cp,
                                  mt.adj_r2, cv, fit.rss))
        if len(active) == 1:
            break
        p = fit.p[1:]
        worst = int(np.argmax(p))  # argmax returns the first (lowest index) maximum
        if stop == "significance" and p[worst] <= alpha:
            break
        removed, removed_p = cols[worst], float(p[worst])
        del active[worst]
    trace = StepwiseTrace(records, alpha, stop)
    chosen = trace.best_cv_record() if stop == "min_cv" else records[-1]
    trace.final = chosen.features
    return trace


def best_subset(X, y, k: int = 5, seed=0, feature_names=None) -> tuple[tuple[str, ...], float]:
    """Exhaustive search over all non-empty subsets for the lowest K-fold CV error."""
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(d))
    best = (None, math.inf)
    for size in range(1, d + 1):
        for cols in combinations(range(d), size):
            err = kfold_cv(X[:, list(cols)], y, k, seed)
            if err < best[1]:
                best = (tuple(names[c] for c in cols), err)
    return best


def independent_columns(X, feature_names=None, rtol: float = 1e-8) -> tuple[list[int], list[int]]:
    """Greedy pre-deduplication: keep columns (in the given order) that add rank.

    The intercept is always implied, so constant columns are dropped.
    Returns (kept, dropped) column indices.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    basis = np.ones((n, 1)) / np.sqrt(n)
    kept, dropped = [], []
    for j in range(d):
        v = X[:, j] - basis @ (basis.T @ X[:, j])
        v = v - basis @ (basis.T @ v)
        scale = np.linalg.norm(X[:, j] - X[:, j].mean())
        norm = np.linalg.norm(v)
        if scale == 0 or norm <= rtol * max(scale, 1e-300):
            dropped.append(j)
            continue
        basis = np.column_stack([basis, v / norm])
        kept.append(j)
    return kept, dropped
