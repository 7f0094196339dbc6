"""
Environment model with selected features
========================================

A fully connected network predicts run energy from simulator features. We
compare the full input set, the forest-selected subset, and the subset with
bootstrap-augmented training data.
"""
import numpy as np

from coresel.fcn import TrainConfig, evaluate, init, train, train_bootstrap
from coresel.forest import fit_forest, select_top_k
from coresel.thermal import SimConfig, generate_dataset
from coresel.trace import Scaler, SplitSpec, split

###############################################################################
# Simulated runs on a six-core machine, one row per run.

fm = generate_dataset(SimConfig.clustered((3, 3)), 250, seed=0).features
fm = fm.select([c for c in fm.feature_names if c != "run"])
print(fm.n_rows, "runs,", len(fm.feature_names), "features")

train_set, test = split(fm, SplitSpec(0.8, 0))
fit, val = split(train_set, SplitSpec(0.8, 1))
sx, sy = Scaler.fit(fit.X), Scaler.fit(fit.y)
Xf, yf = sx.transform(fit.X), sy.transform(fit.y)
Xv, yv = sx.transform(val.X), sy.transform(val.y)
Xt, yt = sx.transform(test.X), sy.transform(test.y)

###############################################################################
# Forest selection on the training split only.

forest = fit_forest(Xf, yf, n_trees=100, seed=0)
d = Xf.shape[1]
top = select_top_k(Xf, forest.importance, [2, 4, 8, 16, d], cv_folds=3, seed=0, n_trees=30, y=yf,
                   feature_names=fm.feature_names)
cols = [fm.feature_names.index(n) for n in top.features]
print("selected:", top.features)

###############################################################################
# Train the three models with the same optimizer settings. MSE is on the
# standardized target.

cfg = TrainConfig(epochs=50, batch_size=32, learning_rate=0.005, seed=0)
models = {
    "FCN": (train(init((d, 64, 1), 0), Xf, yf, Xv, yv, cfg).model, slice(None)),
    "FCN+RF": (train(init((len(cols), 64, 1), 0), Xf[:, cols], yf, Xv[:, cols], yv, cfg).model, cols),
    "FCN+RF+BS": (train_bootstrap((64,), Xf[:, cols], yf, Xv[:, cols], yv, cfg,
                                  n_resamples=100, seed=0, init_seed=0).model, cols),
}
for name, (model, c) in models.items():
    err, n_params = evaluate(model, Xt[:, c], yt)
    print(f"{name:10s} test mse {err:.4f}  params {n_params}")
