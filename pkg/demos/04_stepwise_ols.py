"""
Backward stepwise OLS
=====================

The wrapper stage: fit OLS, drop the least significant feature, refit, and
repeat until every p-value clears the threshold. AIC, BIC, Mallows' Cp,
adjusted R^2 and K-fold CV error are recorded along the way.
"""
import numpy as np

from coresel.ols import backward_stepwise, best_subset, fit_ols

rng = np.random.default_rng(1)
X = rng.standard_normal((200, 6))
y = 1.5 * X[:, 0] - X[:, 1] + 0.5 * X[:, 2] + rng.standard_normal(200)

###############################################################################
# A single fit reports coefficients with standard errors, t statistics and
# two-sided p-values.

fit = fit_ols(X, y)
for name, b, se, p in zip(fit.names, fit.coef, fit.se, fit.p):
    print(f"{name:12s} {b:8.3f} +- {se:.3f}  p={p:.3g}")

###############################################################################
# The elimination trace.

trace = backward_stepwise(X, y, alpha=0.05)
print("iter  n  removed   AIC      BIC      Cp     adjR2   CV")
for i, r in enumerate(trace.records):
    print(f"{i:4d} {len(r.features):2d}  {r.removed or '-':7s} {r.aic:8.2f} {r.bic:8.2f} "
          f"{r.cp:6.2f} {r.adj_r2:.4f} {r.cv_error:.4f}")
print("final:", trace.final)

###############################################################################
# With six features the exhaustive search is cheap, which gives a reference
# point for the greedy elimination.

names, err = best_subset(X, y)
print("best subset:", names, f"cv {err:.4f} vs stepwise {trace.records[-1].cv_error:.4f}")
