"""coresel: statistical feature selection and correlation-aware task-to-core allocation."""

__version__ = "0.1.0"

from .config import ConfigError, load_flat, parse_flat
from .correlation import (AllocationError, AllocationPlan, CorrelationMatrix, allocate,
                          allocate_random, correlation_matrix, correlation_plan,
                          correlation_scores, pearson, rank_cores, update_and_reallocate)
from .fcn import (DivergenceError, Ensemble, FcnModel, TrainConfig, TrainResult, evaluate,
                  init, train, train_bootstrap)
from .forest import (ForestModel, RegressionTree, TreeParams, bootstrap_sample, fit_forest,
                     fit_tree, select_top_k)
from .ols import (RegressionFit, SingularMatrixError, backward_stepwise, best_subset, fit_ols,
                  kfold_cv, metrics)
from .thermal import (SimConfig, SimTrace, TaskSpec, WorkloadSampler, generate_dataset,
                      run_workload, steady_state)
from .trace import (DataError, FeatureMatrix, Scaler, SplitSpec, TemperatureBuffer, load_trace,
                    split, standardize)
