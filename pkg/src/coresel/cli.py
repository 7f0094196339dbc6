"""Command-line pipeline: simulate -> select -> allocate -> train -> evaluate -> report.

Every stage reads and writes files under ``--out-dir`` and leaves a
``manifest_<stage>.json`` recording the seed, package version, parameters and
the SHA-256 of each input file. Exit codes: 0 success, 1 usage error, 2 data
error, 3 numeric failure.

Output files::

    simulate   features.csv, temperatures.csv
    select     importance.csv, cv_curve.csv, stepwise.csv, forest.json, selection.json
    allocate   plan.json, correlation.csv, correlation_long.csv, comparison.csv, comparison.json
    train      models/{fcn,fcn_rf,fcn_rf_bs}.txt, models/preprocess.json, loss_<model>.csv
    evaluate   metrics.csv
    report     report.json
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import zlib
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .config import ConfigError, load_flat
from .correlation import (AllocationError, allocate_random, correlation_matrix,
                          correlation_plan, correlation_scores)
from .fcn import DivergenceError, FcnModel, TrainConfig, evaluate, init, train, train_bootstrap
from .forest import TreeParams, fit_forest, select_top_k
from .ols import SingularMatrixError, backward_stepwise, independent_columns
from .thermal import (SimConfig, WorkloadSampler, default_task_count, generate_dataset,
                      load_sim_config, run_workload, spans_clusters)
from .trace import DataError, Scaler, SplitSpec, TemperatureBuffer, load_trace, split_indices, write_csv

log = logging.getLogger("coresel")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
MODELS = ("fcn", "fcn_rf", "fcn_rf_bs")

DEFAULTS = {
    "seed": 0,
    "out_dir": "out",
    "sim_config": None,
    "runs": 200,
    "policy": "random",
    "tasks": None,
    "reserved": [0],
    "probe_samples": 200,
    "trace": None,
    "temperatures": None,
    "target": "energy",
    "exclude": ["run"],
    "n_trees": 100,
    "k_grid": None,
    "folds": 5,
    "alpha": 0.05,
    "tolerance": 0.05,
    "full_stepwise": False,
    "trials": 200,
    "hidden": [64],
    "epochs": 50,
    "batch_size": 32,
    "learning_rate": 0.005,
    "patience": None,
    "resamples": 100,
    "bootstrap_mode": "augment",
    "train_fraction": 0.8,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _str_list(text: str) -> list[str]:
    return [v for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coresel", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="flat key = value pipeline config file")
        p.add_argument("--out-dir")
        p.add_argument("--seed", type=int)
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("simulate", help="generate synthetic traces")
    common(p)
    p.add_argument("--sim-config", help="simulator config (key = value)")
    p.add_argument("--runs", type=int)
    p.add_argument("--policy", choices=("random", "correlation"))
    p.add_argument("--tasks", type=int)
    p.add_argument("--reserved", type=_int_list)
    p.add_argument("--probe-samples", type=int)

    p = sub.add_parser("select", help="RF importance, top-k CV sweep, backward stepwise")
    common(p)
    p.add_argument("--trace")
    p.add_argument("--target")
    p.add_argument("--exclude", type=_str_list, help="identifier columns to ignore")
    p.add_argument("--n-trees", type=int)
    p.add_argument("--k-grid", type=_int_list)
    p.add_argument("--folds", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--full-stepwise", action="store_const", const=True)

    p = sub.add_parser("allocate", help="correlation-aware vs random core allocation")
    common(p)
    p.add_argument("--temperatures")
    p.add_argument("--sim-config")
    p.add_argument("--tasks", type=int)
    p.add_argument("--reserved", type=_int_list)
    p.add_argument("--policy", choices=("random", "correlation"))
    p.add_argument("--trials", type=int)

    for name, helptext in (("train", "train FCN, FCN+RF, FCN+RF+BS"),
                           ("evaluate", "test-set MSE and parameter counts")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--trace")
        p.add_argument("--target")
        p.add_argument("--exclude", type=_str_list, help="identifier columns to ignore")
        p.add_argument("--train-fraction", type=float)
        if name == "train":
            p.add_argument("--hidden", type=_int_list)
            p.add_argument("--epochs", type=int)
            p.add_argument("--batch-size", type=int)
            p.add_argument("--learning-rate", type=float)
            p.add_argument("--patience", type=int)
            p.add_argument("--resamples", type=int)
            p.add_argument("--bootstrap-mode", choices=("augment", "ensemble"))

    p = sub.add_parser("report", help="collect stage outputs into report.json")
    common(p)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, overridden by the config file, overridden by explicit flags."""
    opts = dict(DEFAULTS)
    if args.config:
        opts.update(load_flat(args.config, allowed=set(DEFAULTS)))
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            opts[key] = value
    opts["out_dir"] = Path(opts["out_dir"])
    return opts


def stage_seed(seed: int, stage: str) -> int:
    ss = np.random.SeedSequence([int(seed), zlib.crc32(stage.encode())])
    return int(ss.generate_state(1)[0])


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (set, frozenset)):
        return sorted(v)
    raise TypeError(f"not JSON serializable: {type(v)}")


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2, default=_jsonable) + "\n",
                          encoding="utf-8")


def _label(path, out_dir: Path) -> str:
    """Inputs inside the output directory are named relative to it, so reruns elsewhere match."""
    path = Path(path)
    try:
        return path.resolve().relative_to(out_dir.resolve()).as_posix()
    except ValueError:
        return str(path)


def write_manifest(opts, stage: str, inputs, outputs, params) -> None:
    out = opts["out_dir"]
    doc = {
        "stage": stage,
        "version": __version__,
        "seed": opts["seed"],
        "stage_seed": stage_seed(opts["seed"], stage),
        "params": params,
        "inputs": {_label(p, out): sha256(p) for p in inputs},
        "outputs": sorted(str(o) for o in outputs),
    }
    write_json(out / f"manifest_{stage}.json", doc)


def _sim_config(opts) -> SimConfig:
    if opts["sim_config"]:
        return load_sim_config(opts["sim_config"])
    return SimConfig.clustered((2, 3), seed=opts["seed"])


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise DataError(f"missing {what}: {path}")
    return path


def cmd_simulate(opts) -> None:
    out = opts["out_dir"]
    cfg = _sim_config(opts)
    seed = stage_seed(opts["seed"], "simulate")
    ds = generate_dataset(cfg, int(opts["runs"]), opts["policy"], opts["tasks"],
                          frozenset(opts["reserved"]), int(opts["probe_samples"]), seed=seed)
    ds.features.to_csv(out / "features.csv")
    ds.buffer.to_csv(out / "temperatures.csv")
    inputs = [opts["sim_config"]] if opts["sim_config"] else []
    params = {k: opts[k] for k in ("runs", "policy", "tasks", "reserved", "probe_samples", "sim_config")}
    params["sim"] = _describe_config(cfg)
    params["config_hash"] = hashlib.sha256(
        json.dumps(params["sim"], sort_keys=True, default=_jsonable).encode()).hexdigest()
    write_manifest(opts, "simulate", inputs, ["features.csv", "temperatures.csv"], params)
    log.info("wrote %d runs, %d temperature samples", ds.features.n_rows, len(ds.buffer))


def _describe_config(cfg: SimConfig) -> dict:
    return {k: _jsonable(v) if isinstance(v, np.ndarray) else v for k, v in vars(cfg).items()}


def _load_features(opts) -> tuple:
    path = Path(opts["trace"]) if opts["trace"] else opts["out_dir"] / "features.csv"
    fm = load_trace(_require(path, "trace"))
    target = opts["target"]
    if target not in fm.column_names:
        raise DataError(f"target column {target!r} not in {path}")
    keep = [c for c in fm.column_names if c not in set(opts["exclude"]) or c == target]
    return fm.select(keep).with_target(target), path


def _default_grid(d: int) -> list[int]:
    grid, k = [], 1
    while k < d:
        grid.append(k)
        k *= 2
    return grid + [d]


def cmd_select(opts) -> None:
    out = opts["out_dir"]
    fm, path = _load_features(opts)
    seed = stage_seed(opts["seed"], "select")
    X, y, names = fm.X, fm.y, fm.feature_names
    forest = fit_forest(fm, None, int(opts["n_trees"]), TreeParams(), seed)
    ranking = forest.ranking()
    grid = opts["k_grid"] or _default_grid(len(names))
    top = select_top_k(X, forest.importance, grid, int(opts["folds"]), seed,
                       int(opts["n_trees"]), y=y, feature_names=names,
                       tolerance=float(opts["tolerance"]))

    pool = list(names) if opts["full_stepwise"] else list(top.features)
    # stepwise needs a full-rank design: drop constant and dependent columns in rank order
    pool = [n for n in ranking if n in pool]
    cols = [names.index(n) for n in pool]
    kept, dropped = independent_columns(X[:, cols])
    pool_kept = [pool[i] for i in kept]
    trace = backward_stepwise(X[:, [names.index(n) for n in pool_kept]], y, float(opts["alpha"]),
                              int(opts["folds"]), seed, pool_kept)

    with open(out / "importance.csv", "w", encoding="utf-8") as fh:
        fh.write("rank,feature,importance\n")
        for r, n in enumerate(ranking, start=1):
            fh.write(f"{r},{n},{forest.importance[names.index(n)]:.17g}\n")
    write_csv(out / "cv_curve.csv", ["k", "cv_error"], top.curve())
    trace.to_csv(out / "stepwise.csv")
    (out / "forest.json").write_text(forest.to_json(), encoding="utf-8")
    best = trace.best_cv_record()
    doc = {
        "target": fm.target_name,
        "rf_ranking": ranking,
        "rf_best_k": top.best_k,
        "rf_features": list(top.features),
        "stepwise_pool": pool_kept,
        "stepwise_dropped_dependent": [pool[i] for i in dropped],
        "stepwise_removed": trace.removed_order,
        "stepwise_final": list(trace.final),
        "stepwise_min_cv_features": list(best.features),
        "alpha": float(opts["alpha"]),
    }
    write_json(out / "selection.json", doc)
    params = {k: opts[k] for k in ("target", "n_trees", "folds", "alpha", "tolerance", "full_stepwise")}
    params["k_grid"] = grid
    write_manifest(opts, "select", [path],
                   ["importance.csv", "cv_curve.csv", "stepwise.csv", "forest.json", "selection.json"],
                   params)
    log.info("RF kept %d of %d features; stepwise final: %s", top.best_k, len(names), trace.final)


def cmd_allocate(opts) -> None:
    out = opts["out_dir"]
    path = Path(opts["temperatures"]) if opts["temperatures"] else out / "temperatures.csv"
    buf = TemperatureBuffer.from_csv(_require(path, "temperature trace"))
    reserved = frozenset(opts["reserved"])
    n_tasks = opts["tasks"] or default_task_count(buf.m, reserved)
    seed = stage_seed(opts["seed"], "allocate")
    corr = correlation_matrix(buf)
    corr.to_csv(out / "correlation.csv")
    corr.to_long_csv(out / "correlation_long.csv")
    plan_c = correlation_plan(buf, n_tasks, reserved)
    plan_r = allocate_random(buf.m, n_tasks, reserved, seed)
    chosen = plan_c if opts["policy"] == "correlation" else plan_r
    doc = {
        "policy": opts["policy"],
        "chosen": chosen.to_dict(),
        "correlation": plan_c.to_dict(),
        "random": plan_r.to_dict(),
        "scores": correlation_scores(corr),
        "n_samples": corr.n_samples,
    }
    write_json(out / "plan.json", doc)
    outputs = ["plan.json", "correlation.csv", "correlation_long.csv"]
    inputs = [path]

    sim_path = opts["sim_config"]
    if sim_path or (out / "manifest_simulate.json").is_file():
        cfg = _sim_config(opts)
        if cfg.m != buf.m:
            raise DataError(f"simulator has {cfg.m} cores, temperature trace has {buf.m}")
        summary = _compare(cfg, plan_c, int(opts["trials"]), n_tasks, reserved, seed, out)
        write_json(out / "comparison.json", summary)
        outputs += ["comparison.csv", "comparison.json"]
        if sim_path:
            inputs.append(sim_path)
    params = {"tasks": n_tasks, "reserved": sorted(reserved), "policy": opts["policy"],
              "trials": opts["trials"], "sim_config": sim_path}
    write_manifest(opts, "allocate", inputs, outputs, params)


def _compare(cfg, plan_c, trials, n_tasks, reserved, seed, out) -> dict:
    """Paired simulated trials: the correlation plan vs a fresh random plan per trial."""
    rng = np.random.default_rng(seed)
    sampler = WorkloadSampler(intensity=(0.7, 1.0), duration=(20.0, 30.0))
    start = np.full(cfg.m, cfg.ambient)
    rows = []
    for trial in range(trials):
        plan_r = allocate_random(cfg.m, n_tasks, reserved, rng)
        tasks = sampler.draw(n_tasks, rng)
        noise_seed = int(rng.integers(2**63))
        a = run_workload(cfg, plan_c, tasks, initial=start, seed=noise_seed)
        b = run_workload(cfg, plan_r, tasks, initial=start, seed=noise_seed)
        rows.append([trial, a.total_energy, b.total_energy, a.peak_temperature, b.peak_temperature,
                     a.mean_temperature, b.mean_temperature,
                     float(spans_clusters(plan_c, cfg)), float(spans_clusters(plan_r, cfg))])
    header = ["trial", "energy_corr", "energy_rand", "peak_corr", "peak_rand",
              "avg_temp_corr", "avg_temp_rand", "cross_corr", "cross_rand"]
    write_csv(out / "comparison.csv", header, rows)
    arr = np.array(rows)
    summary = {"trials": trials}
    for name, i in (("energy", 1), ("peak_temp", 3), ("avg_temp", 5)):
        a, b = arr[:, i], arr[:, i + 1]
        diff = a - b
        if trials >= 2 and np.ptp(diff) > 0:
            res = stats.ttest_rel(a, b)
            t, p = float(res.statistic), float(res.pvalue)
        else:
            t, p = float("nan"), float("nan")
        summary[name] = {"mean_corr": float(a.mean()), "mean_rand": float(b.mean()),
                         "mean_diff": float(diff.mean()), "t": t, "p": p}
    summary["cross_cluster_rate"] = {"corr": float(arr[:, 7].mean()), "rand": float(arr[:, 8].mean())}
    return summary


def _train_setup(opts):
    fm, path = _load_features(opts)
    sel_path = _require(opts["out_dir"] / "selection.json", "selection report (run 'select' first)")
    selection = json.loads(sel_path.read_text(encoding="utf-8"))
    names = fm.feature_names
    rf_features = [n for n in names if n in set(selection["rf_features"])]
    seed = stage_seed(opts["seed"], "train")
    train_idx, test_idx = split_indices(fm.n_rows, SplitSpec(float(opts["train_fraction"]), seed))
    fit_idx, val_idx = (train_idx[i] for i in split_indices(len(train_idx), SplitSpec(0.8, seed + 1)))
    return fm, path, sel_path, rf_features, seed, fit_idx, val_idx, test_idx


def _standardized(fm, cols, fit_idx):
    X = fm.X[:, [fm.feature_names.index(c) for c in cols]]
    sx, sy = Scaler.fit(X[fit_idx]), Scaler.fit(fm.y[fit_idx])
    return sx.transform(X), sy.transform(fm.y), sx, sy


def cmd_train(opts) -> None:
    out = opts["out_dir"]
    fm, path, sel_path, rf_features, seed, fit_idx, val_idx, _ = _train_setup(opts)
    cfg = TrainConfig(int(opts["epochs"]), int(opts["batch_size"]), float(opts["learning_rate"]),
                      opts["patience"], seed)
    hidden = tuple(int(h) for h in opts["hidden"])
    (out / "models").mkdir(exist_ok=True)
    pre = {"target": fm.target_name, "fit_rows": fit_idx, "val_rows": val_idx,
           "train_fraction": float(opts["train_fraction"]), "models": {}}
    outputs = []
    for name in MODELS:
        cols = list(fm.feature_names) if name == "fcn" else rf_features
        X, y, sx, sy = _standardized(fm, cols, fit_idx)
        args = (X[fit_idx], y[fit_idx], X[val_idx], y[val_idx])
        if name == "fcn_rf_bs":
            res = train_bootstrap(hidden, *args, config=cfg, n_resamples=int(opts["resamples"]),
                                  mode="augment", seed=seed, init_seed=seed)
        else:
            res = train(init((len(cols), *hidden, 1), seed), *args, config=cfg)
        res.model.save(out / "models" / f"{name}.txt")
        res.to_csv(out / f"loss_{name}.csv")
        outputs += [f"models/{name}.txt", f"loss_{name}.csv"]
        pre["models"][name] = {"features": cols, "x_mean": sx.mean, "x_scale": sx.scale,
                               "y_mean": float(sy.mean[0]), "y_scale": float(sy.scale[0]),
                               "best_epoch": res.best_epoch}
    write_json(out / "models" / "preprocess.json", pre)
    params = {k: opts[k] for k in ("target", "hidden", "epochs", "batch_size", "learning_rate",
                                   "patience", "resamples", "train_fraction")}
    params["bootstrap_mode"] = "augment"
    write_manifest(opts, "train", [path, sel_path], outputs + ["models/preprocess.json"], params)


def cmd_evaluate(opts) -> None:
    out = opts["out_dir"]
    fm, path, _, _, seed, _, _, test_idx = _train_setup(opts)
    pre_path = _require(out / "models" / "preprocess.json", "trained models (run 'train' first)")
    pre = json.loads(pre_path.read_text(encoding="utf-8"))
    rows, inputs = [], [path, pre_path]
    for name in MODELS:
        mpath = _require(out / "models" / f"{name}.txt", f"model {name!r} (run 'train' first)")
        model = FcnModel.load(mpath)
        info = pre["models"][name]
        X = fm.X[:, [fm.feature_names.index(c) for c in info["features"]]]
        Xs = (X[test_idx] - np.asarray(info["x_mean"])) / np.asarray(info["x_scale"])
        ys = (fm.y[test_idx] - info["y_mean"]) / info["y_scale"]
        err, n_params = evaluate(model, Xs, ys)
        rows.append((name, err, n_params))
        inputs.append(mpath)
    with open(out / "metrics.csv", "w", encoding="utf-8") as fh:
        fh.write("model,mse,params\n")
        for name, err, n_params in rows:
            fh.write(f"{name},{err:.17g},{n_params}\n")
    write_manifest(opts, "evaluate", inputs, ["metrics.csv"],
                   {"mse_units": "standardized target (train-split mean/std)",
                    "test_rows": int(len(test_idx))})


def cmd_report(opts) -> None:
    out = opts["out_dir"]
    selection = json.loads(_require(out / "selection.json", "selection.json").read_text())
    plan = json.loads(_require(out / "plan.json", "plan.json").read_text())
    metrics_path = _require(out / "metrics.csv", "metrics.csv")
    metrics = []
    for line in metrics_path.read_text().splitlines()[1:]:
        name, err, n_params = line.split(",")
        metrics.append({"model": name, "mse": float(err), "params": int(n_params)})
    doc = {"selection": selection, "allocation": plan, "models": metrics}
    comp = out / "comparison.json"
    if comp.is_file():
        doc["comparison"] = json.loads(comp.read_text())
    write_json(out / "report.json", doc)
    inputs = [out / f for f in ("selection.json", "plan.json", "metrics.csv")]
    write_manifest(opts, "report", inputs + ([comp] if comp.is_file() else []), ["report.json"], {})


COMMANDS = {
    "simulate": cmd_simulate,
    "select": cmd_select,
    "allocate": cmd_allocate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve(args)
        opts["out_dir"].mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](opts)
    except UsageError as exc:
        print(f"coresel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularMatrixError, DivergenceError, FloatingPointError) as exc:
        print(f"coresel: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ConfigError, AllocationError, FileNotFoundError, ValueError) as exc:
        print(f"coresel: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
