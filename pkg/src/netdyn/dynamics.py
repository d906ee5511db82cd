"""Ground-truth simulation of coupled ODE systems on graphs.

Covers the cubic 2-D node dynamics used in the experiments, a fixed-step
RK4 integrator, irregular-time sampling, feature masking, and dataset
assembly with deterministic per-trajectory RNG streams.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DivergenceError, ShapeError

DATA_VERSION = "netdyn-data-v1"


class NetworkGraph:
    """Undirected graph with dense 0/1 adjacency, no self-loops."""

    def __init__(self, n_nodes, edges):
        adjacency = np.zeros((n_nodes, n_nodes))
        for s, d in edges:
            if not (0 <= s < n_nodes and 0 <= d < n_nodes):
                raise ArgumentError(f"edge ({s},{d}) outside [0,{n_nodes})")
            if s == d:
                raise ArgumentError(f"self-loop at node {s}")
            adjacency[s, d] = 1.0
            adjacency[d, s] = 1.0
        self.n_nodes = n_nodes
        self.edges = [(int(s), int(d)) for s, d in edges]
        self.adjacency = adjacency

    def degree(self):
        return self.adjacency.sum(axis=1)

    def directed_pairs(self):
        """(recv, send) index arrays over all ordered pairs with a_ij = 1."""
        recv, send = np.nonzero(self.adjacency)
        return recv, send


# 8-node topology used throughout the benchmark.
PAPER8_SRC = [0, 1, 2, 3, 0, 0, 5, 6]
PAPER8_DST = [1, 2, 3, 4, 5, 3, 6, 7]


def paper8_graph():
    return NetworkGraph(8, list(zip(PAPER8_SRC, PAPER8_DST)))


def rhs_2d_cubic(X, graph):
    """Cubic 2-D node dynamics with diffusive coupling on the first component.

    f1 = -0.1*x1^3 - 2*x2 + sum_{j in N_i} (x1_i - x1_j)
    f2 = x1 - 0.1*x2
    The coupling sum lands on the first component only (it is a function of
    first components).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape != (graph.n_nodes, 2):
        raise ShapeError(f"rhs_2d_cubic: expected ({graph.n_nodes}, 2), got {X.shape}")
    x1, x2 = X[:, 0], X[:, 1]
    coupling = graph.degree() * x1 - graph.adjacency @ x1
    f1 = -0.1 * x1**3 - 2.0 * x2 + coupling
    f2 = x1 - 0.1 * x2
    return np.stack([f1, f2], axis=1)


@dataclass
class GroundTruthTrajectory:
    times: np.ndarray  # (T,)
    states: np.ndarray  # (T, N, d)
    rhs_id: str = "cubic2d"


@dataclass
class ObservationSeries:
    times: np.ndarray  # (T,)
    states: np.ndarray  # (T, N, d)
    masks: np.ndarray  # (T, N, d), 0/1

    def __post_init__(self):
        if self.states.shape != self.masks.shape:
            raise ShapeError("states and masks shapes differ")
        if np.any(np.diff(self.times) <= 0):
            raise ArgumentError("observation times must be strictly increasing")
        if not np.all((self.masks == 0) | (self.masks == 1)):
            raise ArgumentError("masks must be binary")


def _rk4_span(rhs, x, t0, t1, step_max):
    n = max(1, int(np.ceil((t1 - t0) / step_max)))
    h = (t1 - t0) / n
    for _ in range(n):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def integrate(rhs, x0, t_grid, step_max):
    """Classic RK4 with substeps of size <= step_max between grid points."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if np.any(np.diff(t_grid) <= 0):
        raise ArgumentError("t_grid must be strictly increasing")
    if step_max <= 0:
        raise ArgumentError("step_max must be positive")
    x = np.asarray(x0, dtype=np.float64).copy()
    states = [x.copy()]
    for t0, t1 in zip(t_grid[:-1], t_grid[1:]):
        x = _rk4_span(rhs, x, t0, t1, step_max)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"state became non-finite by t={t1}")
        states.append(x.copy())
    return GroundTruthTrajectory(times=t_grid.copy(), states=np.stack(states))


def sample_observation_times(t_grid, p_obs, mode="uniform-subset", seed=0):
    """Pick round(p_obs * |grid|) timestamps, always keeping t_grid[0]."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if not (0 < p_obs <= 1):
        raise ArgumentError("p_obs must be in (0, 1]")
    k = int(round(p_obs * len(t_grid)))
    if k < 2:
        raise ArgumentError(f"p_obs={p_obs} keeps only {k} points; need at least 2")
    rng = np.random.default_rng(seed)
    if mode == "uniform-subset":
        rest = rng.choice(np.arange(1, len(t_grid)), size=k - 1, replace=False)
        idx = np.concatenate([[0], np.sort(rest)])
    elif mode == "exponential-gaps":
        gaps = rng.exponential(size=k - 1)
        arrivals = np.cumsum(gaps)
        span = t_grid[-1] - t_grid[0]
        targets = t_grid[0] + arrivals / arrivals[-1] * span
        snapped = {0}
        for t in targets[:-1]:
            snapped.add(int(np.argmin(np.abs(t_grid - t))))
        snapped.add(len(t_grid) - 1)
        # top up to the exact count with unused grid indices
        unused = [i for i in range(1, len(t_grid)) if i not in snapped]
        while len(snapped) < k:
            snapped.add(unused.pop(rng.integers(len(unused))))
        idx = np.sort(np.fromiter(snapped, dtype=np.intp))[:k]
        idx[0] = 0
    else:
        raise ArgumentError(f"unknown sampling mode {mode!r}")
    if len(idx) < 2:
        raise ArgumentError("fewer than 2 observation times")
    return t_grid[idx]


def apply_feature_mask(states, p_miss, seed=0):
    """Per timestep, zero exactly floor(p_miss * N * d) mask entries."""
    states = np.asarray(states)
    if not (0 <= p_miss < 1):
        raise ArgumentError("p_miss must be in [0, 1)")
    n_t, n, d = states.shape
    n_zero = int(np.floor(p_miss * n * d))
    rng = np.random.default_rng(seed)
    masks = np.ones((n_t, n, d))
    for t in range(n_t):
        flat = rng.choice(n * d, size=n_zero, replace=False)
        masks[t].ravel()[flat] = 0.0
    return masks


@dataclass
class ExperimentConfig:
    graph: NetworkGraph = field(default_factory=paper8_graph)
    state_dim: int = 2
    t_train: float = 10.0
    t_extrap: float = 10.0
    n_grid: int = 100
    p_obs: float = 0.5
    p_miss: float = 0.3
    n_traj: int = 100
    split: float = 0.7
    seed: int = 0
    sampling_mode: str = "uniform-subset"
    gen_step_max: float = 0.01

    def __post_init__(self):
        if not (0 < self.p_obs <= 1):
            raise ArgumentError("p_obs must be in (0, 1]")
        if not (0 <= self.p_miss < 1):
            raise ArgumentError("p_miss must be in [0, 1)")
        if not (0 < self.split <= 1):
            raise ArgumentError("split must be in (0, 1]")
        if self.n_grid < 2:
            raise ArgumentError("n_grid must be >= 2")


def _simulate_one(config, index):
    rng = np.random.default_rng([config.seed, index])
    x0 = rng.uniform(-2.0, 2.0, size=(config.graph.n_nodes, config.state_dim))
    grid = np.sort(rng.uniform(0.0, config.t_train, size=config.n_grid))
    grid[0] = 0.0
    n_ext = config.n_grid
    extrap = np.linspace(
        config.t_train + config.t_extrap / n_ext,
        config.t_train + config.t_extrap,
        n_ext,
    )
    full = np.concatenate([grid, extrap])
    truth = integrate(lambda x: rhs_2d_cubic(x, config.graph), x0, full, config.gen_step_max)

    obs_times = sample_observation_times(
        grid, config.p_obs, mode=config.sampling_mode, seed=[config.seed, index, 1]
    )
    obs_idx = np.searchsorted(grid, obs_times)
    obs_states = truth.states[obs_idx]
    masks = apply_feature_mask(obs_states, config.p_miss, seed=[config.seed, index, 2])
    series = ObservationSeries(times=obs_times, states=obs_states.copy(), masks=masks)
    return series, truth


def make_dataset(config):
    """Simulate, sample, mask and split; returns (train, test, truth)."""
    series, truths = [], []
    for i in range(config.n_traj):
        s, t = _simulate_one(config, i)
        series.append(s)
        truths.append(t)
    k = int(round(config.split * config.n_traj))
    if k == config.n_traj and config.split < 1.0:
        k = config.n_traj - 1
    train, test = series[:k], series[k:]
    if not test:
        warnings.warn("split leaves an empty test set")
    return train, test, truths


# ---------------------------------------------------------------------------
# dataset file format


def dataset_to_doc(config, train, test, truths):
    def ser(s):
        return {
            "times": s.times.tolist(),
            "states": s.states.tolist(),
            "masks": s.masks.tolist(),
        }

    return {
        "version": DATA_VERSION,
        "n_nodes": config.graph.n_nodes,
        "state_dim": config.state_dim,
        "edges": [[s, d] for s, d in config.graph.edges],
        "grid_horizon": config.t_train,
        "extrap_horizon": config.t_extrap,
        "p_obs": config.p_obs,
        "p_miss": config.p_miss,
        "seed": config.seed,
        "n_train": len(train),
        "trajectories": [ser(s) for s in train + test],
        "truth": [
            {"times": t.times.tolist(), "states": t.states.tolist()} for t in truths
        ],
    }


def save_dataset(path, config, train, test, truths):
    with open(path, "w") as fh:
        json.dump(dataset_to_doc(config, train, test, truths), fh)


def load_dataset(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != DATA_VERSION:
        raise ArgumentError(f"unexpected dataset version {doc.get('version')!r}")
    graph = NetworkGraph(doc["n_nodes"], doc["edges"])
    series = [
        ObservationSeries(
            times=np.asarray(t["times"]),
            states=np.asarray(t["states"]),
            masks=np.asarray(t["masks"]),
        )
        for t in doc["trajectories"]
    ]
    truths = [
        GroundTruthTrajectory(times=np.asarray(t["times"]), states=np.asarray(t["states"]))
        for t in doc.get("truth", [])
    ]
    k = doc["n_train"]
    return {
        "graph": graph,
        "state_dim": doc["state_dim"],
        "t_train": doc["grid_horizon"],
        "t_extrap": doc.get("extrap_horizon", 0.0),
        "train": series[:k],
        "test": series[k:],
        "truth": truths,
        "doc": doc,
    }
