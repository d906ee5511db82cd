"""Graph GRU cell with reliability and time-aware mechanisms.

Gate pre-activations come from single-hop message passing
    MPNN(H, W) = H W1 + A H W2
over the concatenation  X_tilde || U || H.  The update gate is shrunk by
e^{-max(0, w_k * dt)} so stale hidden states carry less weight after long
observation gaps.  U is the reliability matrix: 1 on observed entries and
1/(1+|alpha|) on imputed ones, where alpha is the masked reconstruction
error of the current step (carried forward when a step has no
observations).
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ArgumentError, ContractError, ShapeError
from .nn import xavier
from .tensor import Tensor


class ReliabilityMatrix:
    def __init__(self, U, alpha):
        self.U = U
        self.alpha = alpha


class GgruParams:
    """All learnables of the graph GRU, its readout and the initial maps."""

    def __init__(self, graph, d, d_h, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.graph = graph
        self.d = d
        self.d_h = d_h
        c_in = 2 * d + d_h  # state || reliability || hidden
        self.w_r1 = Tensor(xavier(rng, c_in, d_h), requires_grad=True)
        self.w_r2 = Tensor(xavier(rng, c_in, d_h), requires_grad=True)
        self.w_z1 = Tensor(xavier(rng, c_in, d_h), requires_grad=True)
        self.w_z2 = Tensor(xavier(rng, c_in, d_h), requires_grad=True)
        self.w_c1 = Tensor(xavier(rng, c_in, d_h), requires_grad=True)
        self.w_c2 = Tensor(xavier(rng, c_in, d_h), requires_grad=True)
        self.v_s = Tensor(xavier(rng, d_h, d), requires_grad=True)
        self.b_s = Tensor(np.zeros((1, d)), requires_grad=True)
        self.v_0 = Tensor(xavier(rng, d_h, d), requires_grad=True)
        self.b_0 = Tensor(np.zeros((1, d)), requires_grad=True)
        self.w_dec = Tensor(np.full((1, d_h), 0.1), requires_grad=True)
        self._adj_cache = {}

    def adjacency_tensor(self, blocks=1):
        """Constant (block-diagonal) adjacency for `blocks` stacked copies."""
        if blocks not in self._adj_cache:
            a = self.graph.adjacency
            if blocks > 1:
                a = np.kron(np.eye(blocks), a)
            self._adj_cache[blocks] = Tensor(a)
        return self._adj_cache[blocks]

    def parameters(self):
        return [
            self.w_r1, self.w_r2, self.w_z1, self.w_z2, self.w_c1, self.w_c2,
            self.v_s, self.b_s, self.v_0, self.b_0, self.w_dec,
        ]

    def named_parameters(self, prefix="ggru"):
        return {
            f"{prefix}.r.w1": self.w_r1, f"{prefix}.r.w2": self.w_r2,
            f"{prefix}.z.w1": self.w_z1, f"{prefix}.z.w2": self.w_z2,
            f"{prefix}.c.w1": self.w_c1, f"{prefix}.c.w2": self.w_c2,
            f"{prefix}.readout.v": self.v_s, f"{prefix}.readout.b": self.b_s,
            f"{prefix}.init.v": self.v_0, f"{prefix}.init.b": self.b_0,
            f"{prefix}.wdec": self.w_dec,
        }


def mpnn_apply(H_in, A, W1, W2):
    """Single-hop message passing: H W1 + A H W2 (row-per-node layout)."""
    if H_in.data.shape[0] != A.data.shape[1]:
        raise ShapeError(
            f"mpnn_apply: adjacency {A.data.shape} incompatible with {H_in.data.shape}"
        )
    return T.add(T.matmul(H_in, W1), T.matmul(T.matmul(A, H_in), W2))


def compute_reliability(X_obs, X_hat, M, alpha_prev=0.0):
    """Masked mean squared discrepancy -> per-entry reliability in (0, 1]."""
    X_obs = np.asarray(X_obs, dtype=np.float64)
    X_hat = np.asarray(X_hat, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if not (X_obs.shape == X_hat.shape == M.shape):
        raise ShapeError("compute_reliability: shape mismatch")
    count = M.sum()
    if count == 0:
        alpha = alpha_prev
    else:
        alpha = float((M * (X_hat - X_obs) ** 2).sum() / count)
    U = np.where(M == 1.0, 1.0, 1.0 / (1.0 + abs(alpha)))
    return ReliabilityMatrix(U=U, alpha=alpha)


def decay_factor(w_dec, dt_col, rows):
    """e^{-max(0, w_k * dt)} per row/column; dt_col is a constant (rows,1)."""
    scaled = T.mul_const(T.tile_rows(w_dec, rows), dt_col)
    return T.exp(T.neg(T.relu(scaled)))


def time_decay_gate(Z, dt, w_dec):
    """Shrink the update gate by e^{-max(0, w_k * dt)} columnwise."""
    if dt < 0:
        raise ArgumentError(f"time_decay_gate: negative dt {dt}")
    rows = Z.data.shape[0]
    dt_col = np.full((rows, 1), float(dt))
    return T.hadamard(Z, decay_factor(w_dec, dt_col, rows))


def ggru_update(X_tilde, U, H_prev, dt, params, blocks=1, dt_col=None, _force_z=None):
    """Reliability-augmented gated update of the hidden state.

    dt may be a scalar, or dt_col a constant per-row column for block-stacked
    inputs with differing gaps. _force_z bypasses the update gate (tests only).
    """
    rows = H_prev.data.shape[0]
    if X_tilde.data.shape != U.data.shape or X_tilde.data.shape[0] != rows:
        raise ShapeError("ggru_update: shape mismatch")
    if dt_col is None:
        if dt < 0:
            raise ArgumentError(f"ggru_update: negative dt {dt}")
        dt_col = np.full((rows, 1), float(dt))
    A = params.adjacency_tensor(blocks)
    cat = T.concat_cols([X_tilde, U, H_prev])
    R = T.sigmoid(mpnn_apply(cat, A, params.w_r1, params.w_r2))
    if _force_z is not None:
        Z = Tensor(np.asarray(_force_z, dtype=np.float64))
    else:
        Z = T.sigmoid(mpnn_apply(cat, A, params.w_z1, params.w_z2))
        Z = T.hadamard(Z, decay_factor(params.w_dec, dt_col, rows))
    cat_c = T.concat_cols([X_tilde, U, T.hadamard(R, H_prev)])
    C = T.tanh(mpnn_apply(cat_c, A, params.w_c1, params.w_c2))
    keep = T.hadamard(Z, H_prev)
    ones = Tensor(np.ones_like(Z.data))
    blend = T.hadamard(T.sub(ones, Z), C)
    return T.add(keep, blend)


def readout_state(H, params):
    """Affine map from hidden to observable state (linear readout)."""
    rows = H.data.shape[0]
    return T.add(T.matmul(H, params.v_s), T.tile_rows(params.b_s, rows))


def combine_imputation(X_obs, M, X_hat):
    """Observed entries pass through; missing entries come from X_hat."""
    M = np.asarray(M, dtype=np.float64)
    if X_obs.data.shape != X_hat.data.shape or M.shape != X_obs.data.shape:
        raise ShapeError("combine_imputation: shape mismatch")
    if not np.all((M == 0) | (M == 1)):
        raise ContractError("combine_imputation: mask must be binary")
    return T.add(T.mul_const(X_obs, M), T.mul_const(X_hat, 1.0 - M))


def initial_impute(X0, M0, params):
    """Zero initial hidden state; fill missing entries with the affine initial map."""
    rows = X0.data.shape[0]
    H0 = Tensor(np.zeros((rows, params.d_h)))
    fill = T.add(T.matmul(H0, params.v_0), T.tile_rows(params.b_0, rows))
    return combine_imputation(X0, M0, fill), H0, fill
