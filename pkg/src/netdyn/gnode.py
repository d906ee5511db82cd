"""Graph Neural ODE: learnable graph-structured dynamics and their
differentiable fixed-step RK4 integration (backprop-through-solver).

The right-hand side of the hidden dynamics decomposes into a per-node
self term and a sum of pairwise coupling terms over graph neighbours:
    dh_i/dt = gamma(h_i) + sum_{j in N_i} phi(h_i || h_j)
Both gamma and phi are small MLPs.

All entry points accept block-stacked states: B independent copies of the
graph stacked vertically as a (B*N, width) matrix, which lets training
batch whole trajectories through one tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ArgumentError, ShapeError
from .nn import MLP


@dataclass
class SolverConfig:
    step_max: float = 0.05
    method: str = "rk4"

    def __post_init__(self):
        if self.step_max <= 0:
            raise ArgumentError("step_max must be positive")
        if self.method != "rk4":
            raise ArgumentError(f"unsupported method {self.method!r}")


class GnodeDynamics:
    """Self-dynamics MLP + pairwise coupling MLP over a fixed graph."""

    def __init__(self, graph, width, hidden=32, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.graph = graph
        self.width = width
        self.gamma = MLP([width, hidden, width], rng)
        self.phi = MLP([2 * width, hidden, width], rng)
        recv, send = graph.directed_pairs()
        self._recv = recv
        self._send = send

    def edge_arrays(self, blocks):
        """Directed (recv, send) pairs for `blocks` stacked graph copies."""
        n = self.graph.n_nodes
        if blocks == 1:
            return self._recv, self._send
        offs = np.repeat(np.arange(blocks) * n, len(self._recv))
        return np.tile(self._recv, blocks) + offs, np.tile(self._send, blocks) + offs

    def rhs(self, H, blocks=1):
        if H.data.shape[1] != self.width:
            raise ShapeError(f"rhs: width {H.data.shape[1]} != {self.width}")
        rows = H.data.shape[0]
        if rows != blocks * self.graph.n_nodes:
            raise ShapeError(f"rhs: {rows} rows != {blocks} x {self.graph.n_nodes}")
        out = self.gamma(H)
        recv, send = self.edge_arrays(blocks)
        if len(recv):
            pair = T.concat_cols([T.gather_rows(H, recv), T.gather_rows(H, send)])
            out = T.add(out, T.scatter_rows(self.phi(pair), recv, rows))
        return out

    def parameters(self):
        return self.gamma.parameters() + self.phi.parameters()

    def named_parameters(self, prefix="gnode"):
        named = self.gamma.named_parameters(f"{prefix}.gamma")
        named.update(self.phi.named_parameters(f"{prefix}.phi"))
        return named


def hidden_rhs(H, dyn, blocks=1):
    """dh_i/dt = gamma(h_i) + sum over neighbours of phi(h_i || h_j)."""
    return dyn.rhs(H, blocks=blocks)


def rk4_steps(rhs_fn, H0, h, n_steps):
    """n_steps classic RK4 steps; h is a scalar or a per-row (rows,1) array."""
    scalar = np.isscalar(h)
    half = h * 0.5
    sixth = h / 6.0
    H = H0
    for _ in range(n_steps):
        k1 = rhs_fn(H)
        k2 = rhs_fn(T.add(H, T.scale(k1, half) if scalar else T.mul_const(k1, half)))
        k3 = rhs_fn(T.add(H, T.scale(k2, half) if scalar else T.mul_const(k2, half)))
        k4 = rhs_fn(T.add(H, T.scale(k3, h) if scalar else T.mul_const(k3, h)))
        acc = T.add(T.add(k1, T.scale(T.add(k2, k3), 2.0)), k4)
        H = T.add(H, T.scale(acc, sixth) if scalar else T.mul_const(acc, sixth))
    return H


def ode_solve(dyn, H0, t0, t1, cfg, blocks=1):
    """Integrate the dynamics from t0 to t1 with equal RK4 substeps."""
    if t1 < t0:
        raise ArgumentError(f"ode_solve: t1={t1} < t0={t0}")
    if t1 == t0:
        return H0
    n = max(1, int(np.ceil((t1 - t0) / cfg.step_max)))
    h = (t1 - t0) / n
    return rk4_steps(lambda H: dyn.rhs(H, blocks=blocks), H0, h, n)


def ode_solve_rows(dyn, H0, dt_col, max_dt, cfg, blocks):
    """Per-block-variable-gap integration.

    dt_col is a (rows, 1) array, constant within each block; every block is
    advanced by its own gap using a shared substep count derived from the
    largest gap.
    """
    if np.any(dt_col < 0):
        raise ArgumentError("negative time gap")
    if max_dt == 0.0:
        return H0
    n = max(1, int(np.ceil(max_dt / cfg.step_max)))
    return rk4_steps(lambda H: dyn.rhs(H, blocks=blocks), H0, dt_col / n, n)
