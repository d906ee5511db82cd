"""Prediction network: a graph neural ODE over observable state space,
trained on imputed trajectories with exponential-decay sample weights,
plus free-running extrapolation rollout.

Each one-step training sample carries weight
    w = beta * e^{-zeta * (t_point - t_obs)}
where t_obs is the nearest preceding observation time of the target point
and beta is that observation's feature completeness. Imputed points far
from any observation therefore contribute less to the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ArgumentError, DivergenceError, TrainingError
from .gnode import GnodeDynamics, SolverConfig, ode_solve_rows
from .serialize import PARAMS_VERSION, load_params, params_to_dict, restore_into
from .tensor import Tape, Tensor, backward


class PredictModel:
    """GNODE over the d-dimensional observable state (standardized units)."""

    def __init__(self, graph, d=2, mlp_hidden=32, solver=None, seed=0, standardizer=None):
        rng = np.random.default_rng([seed, 202])
        self.graph = graph
        self.d = d
        self.mlp_hidden = mlp_hidden
        self.solver = solver if solver is not None else SolverConfig()
        self.dynamics = GnodeDynamics(graph, d, hidden=mlp_hidden, rng=rng)
        self.standardizer = standardizer

    def parameters(self):
        return self.dynamics.parameters()

    def named_parameters(self):
        return self.dynamics.named_parameters("pred")

    def config_dict(self):
        return {
            "model": "predict",
            "d": self.d,
            "mlp_hidden": self.mlp_hidden,
            "step_max": self.solver.step_max,
        }


def sample_weight(t_obs, t_point, beta, zeta):
    """beta * e^{-zeta * gap}; decays with distance from the observation."""
    if t_point < t_obs:
        raise ArgumentError(f"t_point={t_point} precedes t_obs={t_obs}")
    if not (0.0 <= beta <= 1.0):
        raise ArgumentError(f"beta={beta} outside [0, 1]")
    if zeta < 0:
        raise ArgumentError(f"zeta={zeta} must be nonnegative")
    return float(beta * np.exp(-zeta * (t_point - t_obs)))


@dataclass
class WeightedSample:
    t_from: float
    t_to: float
    x_from: np.ndarray  # (N, d), original units
    x_target: np.ndarray  # (N, d), original units
    weight: float

    def __post_init__(self):
        if self.t_to <= self.t_from:
            raise ArgumentError("t_to must exceed t_from")
        if not (0.0 < self.weight <= 1.0):
            raise ArgumentError(f"weight {self.weight} outside (0, 1]")


def build_weighted_samples(imputed, zeta):
    """One sample per consecutive grid pair; weight taken at the target point."""
    times = imputed.times
    if len(times) < 2:
        raise ArgumentError("imputed trajectory needs at least 2 grid points")
    samples = []
    for k in range(len(times) - 1):
        t_to = times[k + 1]
        w = sample_weight(imputed.nearest_obs[k + 1], t_to, imputed.beta[k + 1], zeta)
        samples.append(
            WeightedSample(
                t_from=float(times[k]),
                t_to=float(t_to),
                x_from=imputed.values[k],
                x_target=imputed.values[k + 1],
                weight=w,
            )
        )
    return samples


def _batched_prediction_loss(model, samples):
    """Weighted one-step loss over a stacked sample batch."""
    n = model.graph.n_nodes
    std = model.standardizer
    x_from = np.concatenate([std.transform(s.x_from) for s in samples])
    x_to = np.concatenate([std.transform(s.x_target) for s in samples])
    gaps = np.array([s.t_to - s.t_from for s in samples])
    weights = np.array([s.weight for s in samples])
    w_sum = weights.sum()
    if w_sum == 0:
        raise ArgumentError("all sample weights are zero; loss undefined")
    dt_col = np.repeat(gaps, n).reshape(-1, 1)
    w_col = np.repeat(weights, n).reshape(-1, 1)
    pred = ode_solve_rows(
        model.dynamics, Tensor(x_from), dt_col, float(gaps.max()), model.solver, len(samples)
    )
    diff = T.sub(pred, Tensor(x_to))
    weighted = T.mul_const(T.hadamard(diff, diff), w_col)
    return T.scale(T.sum_all(weighted), 1.0 / w_sum)


def weighted_mse_loss(model, samples):
    """sum_s w_s * ||prediction_s - target_s||^2 / sum_s w_s."""
    if not samples:
        raise ArgumentError("empty sample list")
    return _batched_prediction_loss(model, samples)


@dataclass
class PredictTrainConfig:
    epochs: int = 80
    lr: float = 1e-2
    lr_end: float = 1e-3
    zeta: float = 1.0
    seed: int = 0
    clip: float = 5.0
    batch: int = 512


def train_predict(model, imputed_list, cfg=None):
    """One-step teacher-forced training over weighted samples."""
    if not imputed_list:
        raise ArgumentError("empty imputed set")
    cfg = cfg if cfg is not None else PredictTrainConfig()
    if model.standardizer is None or not model.standardizer.fitted:
        raise ArgumentError("predict model needs a fitted standardizer")
    samples = []
    for imp in imputed_list:
        samples.extend(build_weighted_samples(imp, cfg.zeta))
    params = model.parameters()
    opt = T.Adam(params, lr=cfg.lr)
    rng = np.random.default_rng([cfg.seed, 303])
    from .impute import cosine_lr

    history = []
    for epoch in range(cfg.epochs):
        opt.lr = cosine_lr(cfg.lr, cfg.lr_end, epoch, cfg.epochs)
        order = rng.permutation(len(samples))
        losses, batch_w = [], []
        for start in range(0, len(samples), cfg.batch):
            batch = [samples[j] for j in order[start : start + cfg.batch]]
            with Tape() as tape:
                loss = _batched_prediction_loss(model, batch)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingError(f"non-finite loss at epoch {epoch}")
                backward(loss, tape)
            T.clip_grad_norm(params, cfg.clip)
            opt.step()
            losses.append(value)
            batch_w.append(len(batch))
        history.append(float(np.average(losses, weights=batch_w)))
    return history


def rollout(model, x_start, t_start, t_end, grid):
    """Free-running integration of the trained dynamics, original units."""
    grid = np.asarray(grid, dtype=np.float64)
    if len(grid) == 0:
        raise ArgumentError("empty rollout grid")
    if np.any(np.diff(grid) <= 0):
        raise ArgumentError("rollout grid must be strictly increasing")
    if grid[0] < t_start - 1e-12 or grid[-1] > t_end + 1e-12:
        raise ArgumentError("rollout grid outside [t_start, t_end]")
    std = model.standardizer
    x = Tensor(std.transform(np.asarray(x_start, dtype=np.float64)))
    states = []
    t = t_start
    n = model.graph.n_nodes
    for tg in grid:
        dt = tg - t
        if dt > 0:
            x = ode_solve_rows(model.dynamics, x, np.full((n, 1), dt), dt, model.solver, 1)
            t = tg
        if not np.all(np.isfinite(x.data)):
            raise DivergenceError(f"rollout diverged by t={tg}")
        states.append(std.inverse(x.data))
    return grid.copy(), np.stack(states)


def save_predict_checkpoint(path, model, extra=None):
    import json

    doc = {
        "version": PARAMS_VERSION,
        "tensors": params_to_dict(model.named_parameters()),
        "config": model.config_dict(),
        "standardizer": {
            "mean": model.standardizer.mean.tolist(),
            "std": model.standardizer.std.tolist(),
        },
        "edges": [[s, d] for s, d in model.graph.edges],
        "n_nodes": model.graph.n_nodes,
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_predict_checkpoint(path, graph=None):
    from .dynamics import NetworkGraph
    from .impute import Standardizer

    doc = load_params(path)
    if graph is None:
        graph = NetworkGraph(doc["n_nodes"], doc["edges"])
    cfgd = doc["config"]
    std = Standardizer(
        mean=np.asarray(doc["standardizer"]["mean"]),
        std=np.asarray(doc["standardizer"]["std"]),
    )
    model = PredictModel(
        graph,
        d=cfgd["d"],
        mlp_hidden=cfgd["mlp_hidden"],
        solver=SolverConfig(step_max=cfgd["step_max"]),
        standardizer=std,
    )
    restore_into(model.named_parameters(), doc)
    return model, doc
