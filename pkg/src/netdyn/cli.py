"""Command-line orchestration: dataset generation, training, imputation,
prediction, evaluation, and the benchmark grid.

Commands:
    netdyn generate | train-impute | impute | train-predict | train-baseline
           | evaluate | benchmark

Configuration is one JSON document; every flag overrides the matching key.
The built-in config name "paper8" selects the 8-node cubic benchmark system
(100 random grid points over 10 s, 100 trajectories, 70/30 split).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .baselines import BASELINE_KINDS, make_baseline, save_baseline_checkpoint
from .dynamics import (
    ExperimentConfig,
    dataset_to_doc,
    load_dataset,
    make_dataset,
    paper8_graph,
    save_dataset,
)
from .errors import ArgumentError, TrainingError
from .gnode import SolverConfig
from .impute import (
    ImputeModel,
    TrainConfig,
    impute_dense_grid,
    load_impute_checkpoint,
    save_checkpoint,
    save_imputed,
    train_impute,
)
from .predict import (
    PredictModel,
    PredictTrainConfig,
    load_predict_checkpoint,
    rollout,
    save_predict_checkpoint,
    train_predict,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAINING = 3

DEFAULT_CONFIG = {
    "p_obs": 0.5,
    "p_miss": 0.3,
    "n_traj": 100,
    "split": 0.7,
    "n_grid": 100,
    "t_train": 10.0,
    "t_extrap": 10.0,
    "seed": 0,
    "d_h": 16,
    "mlp_hidden": 32,
    "step_max": 0.5,
    "epochs": 150,
    "lr": 1e-2,
    "lr_end": 1e-2,
    "batch": 10,
    "clip": 5.0,
    "zeta": 1.0,
    "predict_epochs": 60,
    "predict_lr_end": 1e-3,
    "predict_step_max": 0.5,
    "fractions": [0.2, 0.3, 0.5],
    "methods": ["proposed", "rnn_dt", "gru_decay", "ode_rnn"],
    "seeds": [0, 1, 2, 3, 4],
}


def load_config(name_or_path):
    cfg = dict(DEFAULT_CONFIG)
    if name_or_path in (None, "paper8"):
        return cfg
    try:
        with open(name_or_path) as fh:
            user = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ArgumentError(f"cannot read config {name_or_path!r}: {exc}")
    cfg.update(user)
    return cfg


def apply_overrides(cfg, args):
    for key in (
        "seed", "epochs", "zeta", "p_obs", "p_miss", "n_grid",
        "fractions", "method", "jobs",
    ):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg[key] = val
    return cfg


def experiment_config(cfg, seed=None, p_obs=None):
    return ExperimentConfig(
        graph=paper8_graph(),
        p_obs=cfg["p_obs"] if p_obs is None else p_obs,
        p_miss=cfg["p_miss"],
        n_traj=cfg["n_traj"],
        split=cfg["split"],
        n_grid=cfg["n_grid"],
        t_train=cfg["t_train"],
        t_extrap=cfg["t_extrap"],
        seed=cfg["seed"] if seed is None else seed,
    )


# ---------------------------------------------------------------------------
# shared training / evaluation helpers


def build_imputer(method, graph, cfg, seed):
    if method == "proposed":
        return ImputeModel(
            graph,
            d=2,
            d_h=cfg["d_h"],
            mlp_hidden=cfg["mlp_hidden"],
            solver=SolverConfig(step_max=cfg["step_max"]),
            seed=seed,
        )
    if method in BASELINE_KINDS:
        kwargs = {}
        if method == "ode_rnn":
            kwargs["solver"] = SolverConfig(step_max=cfg["step_max"])
        return make_baseline(method, graph, d=2, seed=seed, **kwargs)
    raise ArgumentError(f"unknown method {method!r}")


def train_method(method, graph, train_series, cfg, seed):
    model = build_imputer(method, graph, cfg, seed)
    tc = TrainConfig(
        epochs=cfg["epochs"],
        lr=cfg["lr"],
        lr_end=cfg.get("lr_end", cfg["lr"]),
        seed=seed,
        clip=cfg["clip"],
        batch=cfg["batch"],
    )
    history = train_impute(model, train_series, tc)
    return model, history


def dense_impute_set(imputer, series_list, truths, t_train):
    out = []
    for series, truth in zip(series_list, truths):
        grid = truth.times[truth.times <= t_train + 1e-9]
        out.append(impute_dense_grid(imputer, series, grid))
    return out


def train_predictor(imputer, imputed_train, cfg, seed):
    predictor = PredictModel(
        imputer.graph,
        d=2,
        mlp_hidden=cfg["mlp_hidden"],
        solver=SolverConfig(step_max=cfg["predict_step_max"]),
        seed=seed,
        standardizer=imputer.standardizer,
    )
    pc = PredictTrainConfig(
        epochs=cfg["predict_epochs"],
        lr=cfg["lr"],
        lr_end=cfg.get("predict_lr_end", 1e-3),
        zeta=cfg["zeta"],
        seed=seed,
        clip=cfg["clip"],
    )
    history = train_predict(predictor, imputed_train, pc)
    return predictor, history


def evaluate_pair(imputer, predictor, test_series, test_truths, t_train):
    """Per-trajectory interpolation and extrapolation MSE in original units."""
    interp, extrap = [], []
    for series, truth in zip(test_series, test_truths):
        inside = truth.times <= t_train + 1e-9
        grid = truth.times[inside]
        imp = impute_dense_grid(imputer, series, grid)
        interp.append(float(np.mean((imp.values - truth.states[inside]) ** 2)))
        if predictor is not None:
            t_last = series.times[-1]
            k = int(np.searchsorted(grid, t_last))
            x_start = imp.values[k]
            beyond = truth.times > t_train + 1e-9
            egrid = truth.times[beyond]
            if len(egrid):
                _, states = rollout(predictor, x_start, t_last, egrid[-1], egrid)
                extrap.append(float(np.mean((states - truth.states[beyond]) ** 2)))
    return interp, extrap


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args):
    cfg = apply_overrides(load_config(args.config), args)
    econf = experiment_config(cfg)
    train, test, truths = make_dataset(econf)
    save_dataset(args.out, econf, train, test, truths)
    print(f"wrote {args.out}: {len(train)} train / {len(test)} test trajectories")
    return EXIT_OK


def _load_data_or_exit(path):
    if not os.path.exists(path):
        raise ArgumentError(f"dataset {path!r} does not exist")
    return load_dataset(path)


def cmd_train_impute(args):
    cfg = apply_overrides(load_config(args.config), args)
    data = _load_data_or_exit(args.data)
    model, history = train_method("proposed", data["graph"], data["train"], cfg, cfg["seed"])
    save_checkpoint(args.out, model, extra={"loss_history": history})
    if args.history:
        with open(args.history, "w") as fh:
            json.dump({"loss": history}, fh)
    print(f"trained impute model, final loss {history[-1]:.6f}")
    return EXIT_OK


def cmd_train_baseline(args):
    cfg = apply_overrides(load_config(args.config), args)
    kind = args.kind
    if kind not in BASELINE_KINDS:
        raise ArgumentError(f"baseline kind must be one of {BASELINE_KINDS}")
    data = _load_data_or_exit(args.data)
    model, history = train_method(kind, data["graph"], data["train"], cfg, cfg["seed"])
    save_baseline_checkpoint(args.out, model, extra={"loss_history": history})
    if args.history:
        with open(args.history, "w") as fh:
            json.dump({"loss": history}, fh)
    print(f"trained {kind} baseline, final loss {history[-1]:.6f}")
    return EXIT_OK


def _load_any_imputer(path, graph):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("config", {}).get("model") == "proposed":
        model, _ = load_impute_checkpoint(path, graph)
    else:
        from .baselines import load_baseline_checkpoint

        model, _ = load_baseline_checkpoint(path, graph)
    return model


def cmd_impute(args):
    data = _load_data_or_exit(args.data)
    model = _load_any_imputer(args.ckpt, data["graph"])
    which = data["test"] if args.split == "test" else data["train"]
    offset = len(data["train"]) if args.split == "test" else 0
    truths = data["truth"][offset : offset + len(which)]
    imputed = dense_impute_set(model, which, truths, data["t_train"])
    save_imputed(args.out, imputed)
    print(f"wrote {args.out}: {len(imputed)} imputed trajectories")
    return EXIT_OK


def cmd_train_predict(args):
    cfg = apply_overrides(load_config(args.config), args)
    data = _load_data_or_exit(args.data)
    imputer = _load_any_imputer(args.impute_ckpt, data["graph"])
    truths = data["truth"][: len(data["train"])]
    imputed_train = dense_impute_set(imputer, data["train"], truths, data["t_train"])
    predictor, history = train_predictor(imputer, imputed_train, cfg, cfg["seed"])
    save_predict_checkpoint(args.out, predictor, extra={"loss_history": history})
    if args.history:
        with open(args.history, "w") as fh:
            json.dump({"loss": history}, fh)
    print(f"trained predict model, final loss {history[-1]:.6f}")
    return EXIT_OK


def cmd_evaluate(args):
    data = _load_data_or_exit(args.data)
    imputer = _load_any_imputer(args.impute_ckpt, data["graph"])
    predictor = None
    if args.predict_ckpt:
        predictor, _ = load_predict_checkpoint(args.predict_ckpt, data["graph"])
    n_train = len(data["train"])
    truths = data["truth"][n_train:]
    interp, extrap = evaluate_pair(imputer, predictor, data["test"], truths, data["t_train"])
    report = {
        "note": "MSE in original units",
        "interpolation": {
            "per_trajectory": interp,
            "mean": float(np.mean(interp)),
            "std": float(np.std(interp)),
        },
    }
    if extrap:
        report["extrapolation"] = {
            "per_trajectory": extrap,
            "mean": float(np.mean(extrap)),
            "std": float(np.std(extrap)),
        }
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
    print(f"interpolation MSE {report['interpolation']['mean']:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# benchmark grid


def _dataset_hash(doc):
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def run_cell(cfg, method, fraction, seed):
    """One benchmark cell: train on one dataset, return its metrics."""
    t0 = time.time()
    econf = experiment_config(cfg, seed=seed, p_obs=fraction)
    train, test, truths = make_dataset(econf)
    data_hash = _dataset_hash(dataset_to_doc(econf, train, test, truths))
    n_train = len(train)
    imputer, history = train_method(method, econf.graph, train, cfg, seed)
    imputed_train = dense_impute_set(imputer, train, truths[:n_train], cfg["t_train"])
    predictor, _ = train_predictor(imputer, imputed_train, cfg, seed)
    interp, extrap = evaluate_pair(imputer, predictor, test, truths[n_train:], cfg["t_train"])
    from .serialize import count_params

    return {
        "method": method,
        "fraction": fraction,
        "seed": seed,
        "interpolation_mse": float(np.mean(interp)),
        "extrapolation_mse": float(np.mean(extrap)),
        "seconds": time.time() - t0,
        "n_params": count_params(imputer.named_parameters()),
        "final_train_loss": history[-1],
        "data_hash": data_hash,
    }


def _cell_wrapper(payload):
    cfg, method, fraction, seed = payload
    try:
        return run_cell(cfg, method, fraction, seed)
    except Exception as exc:  # recorded per-cell, benchmark continues
        return {
            "method": method,
            "fraction": fraction,
            "seed": seed,
            "failed": True,
            "error": f"{type(exc).__name__}: {exc}",
        }


def run_benchmark(cfg, methods=None, fractions=None, seeds=None, jobs=1):
    methods = methods or cfg["methods"]
    fractions = fractions or cfg["fractions"]
    seeds = seeds if seeds is not None else cfg["seeds"]
    payloads = [
        (cfg, m, f, s) for m in methods for f in fractions for s in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_cell_wrapper, payloads))
    else:
        cells = [_cell_wrapper(p) for p in payloads]

    aggregates = []
    for m in methods:
        for f in fractions:
            ok = [
                c for c in cells
                if c["method"] == m and c["fraction"] == f and not c.get("failed")
            ]
            for metric in ("interpolation_mse", "extrapolation_mse"):
                vals = [c[metric] for c in ok]
                aggregates.append(
                    {
                        "method": m,
                        "fraction": f,
                        "metric": metric,
                        "mean": float(np.mean(vals)) if vals else None,
                        "std": float(np.std(vals)) if vals else None,
                        "seconds": float(np.mean([c["seconds"] for c in ok])) if ok else None,
                        "n_cells": len(vals),
                    }
                )
    report = {
        "note": "MSE in original units",
        "config": cfg,
        "methods": list(methods),
        "fractions": list(fractions),
        "seeds": list(seeds),
        "cells": cells,
        "aggregates": aggregates,
    }
    return report


def write_benchmark_csv(path, report):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "fraction", "split", "metric", "mean", "std", "seconds"])
        for agg in report["aggregates"]:
            writer.writerow(
                [
                    agg["method"],
                    agg["fraction"],
                    report["config"]["split"],
                    agg["metric"],
                    agg["mean"],
                    agg["std"],
                    agg["seconds"],
                ]
            )


def cmd_benchmark(args):
    cfg = apply_overrides(load_config(args.config), args)
    jobs = args.jobs or int(os.environ.get("NETDYN_JOBS", "1"))
    methods = args.methods.split(",") if args.methods else None
    fractions = [float(x) for x in args.fractions.split(",")] if args.fractions else None
    seeds = [int(x) for x in args.seeds.split(",")] if args.seeds else None
    report = run_benchmark(cfg, methods=methods, fractions=fractions, seeds=seeds, jobs=jobs)
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
    write_benchmark_csv(os.path.splitext(args.out)[0] + ".csv", report)
    n_ok = sum(1 for c in report["cells"] if not c.get("failed"))
    print(f"benchmark complete: {n_ok}/{len(report['cells'])} cells succeeded")
    return EXIT_OK if n_ok > 0 else EXIT_TRAINING


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(prog="netdyn")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default="paper8")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--zeta", type=float, default=None)
        p.add_argument("--p-obs", dest="p_obs", type=float, default=None)
        p.add_argument("--p-miss", dest="p_miss", type=float, default=None)
        p.add_argument("--grid", dest="n_grid", type=int, default=None)

    p = sub.add_parser("generate", help="simulate and write a dataset file")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-impute", help="train the proposed impute model")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None)
    p.set_defaults(func=cmd_train_impute)

    p = sub.add_parser("train-baseline", help="train a baseline imputer")
    common(p)
    p.add_argument("--kind", required=True, choices=BASELINE_KINDS)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None)
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("impute", help="write dense-grid imputations")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("train-predict", help="train the prediction network")
    common(p)
    p.add_argument("--impute-ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None)
    p.set_defaults(func=cmd_train_predict)

    p = sub.add_parser("evaluate", help="interpolation/extrapolation metrics")
    common(p)
    p.add_argument("--impute-ckpt", required=True)
    p.add_argument("--predict-ckpt", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="full method x fraction x seed grid")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--methods", default=None)
    p.add_argument("--fractions", default=None)
    p.add_argument("--seeds", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ArgumentError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
