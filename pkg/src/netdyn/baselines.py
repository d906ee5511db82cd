"""Comparison sequence imputers: RNN(dt), GRU-Decay, and ODE-RNN.

All three run through the same driver, loss and evaluation protocol as the
proposed model (see impute.py); they differ only in how the hidden state
evolves between observations and in their gate inputs:

  rnn_dt     hidden constant between observations; the gap is appended to
             the gate input as an extra feature.
  gru_decay  hidden decays elementwise by e^{-max(0, w_k * dt)} between
             observations, then a plain GRU update.
  ode_rnn    hidden evolves under a per-node MLP ODE (no graph structure),
             then a plain GRU update (no reliability, no decay gate).

Gates are dense (per-node weight sharing, no message passing) in all three.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .dynamics import NetworkGraph
from .errors import ArgumentError
from .ggru import combine_imputation, decay_factor
from .gnode import SolverConfig, ode_solve_rows
from .impute import Standardizer, TrainConfig, train_impute
from .nn import MLP, xavier
from .serialize import PARAMS_VERSION, load_params, params_to_dict, restore_into
from .tensor import Tensor

BASELINE_KINDS = ("rnn_dt", "gru_decay", "ode_rnn")


class _DenseGru:
    """Plain GRU gates over [features || hidden], shared across nodes."""

    def __init__(self, feat_width, d_h, rng):
        c_in = feat_width + d_h
        self.w_r = Tensor(xavier(rng, c_in, d_h), requires_grad=True)
        self.w_z = Tensor(xavier(rng, c_in, d_h), requires_grad=True)
        self.w_c = Tensor(xavier(rng, c_in, d_h), requires_grad=True)

    def __call__(self, feats, H_prev):
        cat = T.concat_cols(feats + [H_prev])
        R = T.sigmoid(T.matmul(cat, self.w_r))
        Z = T.sigmoid(T.matmul(cat, self.w_z))
        cat_c = T.concat_cols(feats + [T.hadamard(R, H_prev)])
        C = T.tanh(T.matmul(cat_c, self.w_c))
        ones = Tensor(np.ones_like(Z.data))
        return T.add(T.hadamard(Z, H_prev), T.hadamard(T.sub(ones, Z), C))

    def parameters(self):
        return [self.w_r, self.w_z, self.w_c]

    def named_parameters(self, prefix):
        return {f"{prefix}.r.w": self.w_r, f"{prefix}.z.w": self.w_z, f"{prefix}.c.w": self.w_c}


class _BaselineCommon:
    """Shared readout / initial imputation and driver protocol pieces."""

    def __init__(self, graph, d, d_h, rng):
        self.graph = graph
        self.d = d
        self.d_h = d_h
        self.v_s = Tensor(xavier(rng, d_h, d), requires_grad=True)
        self.b_s = Tensor(np.zeros((1, d)), requires_grad=True)
        self.b_0 = Tensor(np.zeros((1, d)), requires_grad=True)
        self.standardizer = Standardizer()

    def readout(self, H):
        return T.add(T.matmul(H, self.v_s), T.tile_rows(self.b_s, H.data.shape[0]))

    def initial_state(self, X0, M0):
        rows = X0.data.shape[0]
        H0 = Tensor(np.zeros((rows, self.d_h)))
        fill = T.tile_rows(self.b_0, rows)
        return combine_imputation(X0, M0, fill), H0, fill

    def _common_params(self):
        return [self.v_s, self.b_s, self.b_0]

    def _common_named(self, prefix):
        return {
            f"{prefix}.readout.v": self.v_s,
            f"{prefix}.readout.b": self.b_s,
            f"{prefix}.init.b": self.b_0,
        }


class RnnDtBaseline(_BaselineCommon):
    kind = "rnn_dt"

    def __init__(self, graph, d=2, d_h=36, seed=0):
        rng = np.random.default_rng([seed, 401])
        super().__init__(graph, d, d_h, rng)
        self.gru = _DenseGru(2 * d + 1, d_h, rng)

    def evolve(self, H, dt_col, max_dt, blocks):
        return H  # hidden constant between observations

    def step_update(self, X_tilde, M_arr, U_arr, H_prev, dt_col, blocks):
        feats = [X_tilde, Tensor(M_arr), Tensor(dt_col)]
        return self.gru(feats, H_prev)

    def parameters(self):
        return self.gru.parameters() + self._common_params()

    def named_parameters(self):
        named = self.gru.named_parameters("baseline.rnn_dt")
        named.update(self._common_named("baseline.rnn_dt"))
        return named

    def config_dict(self):
        return {"model": "rnn_dt", "d": self.d, "d_h": self.d_h}


class GruDecayBaseline(_BaselineCommon):
    kind = "gru_decay"

    def __init__(self, graph, d=2, d_h=36, seed=0):
        rng = np.random.default_rng([seed, 402])
        super().__init__(graph, d, d_h, rng)
        self.gru = _DenseGru(2 * d, d_h, rng)
        self.w_dec = Tensor(np.full((1, d_h), 0.1), requires_grad=True)

    def evolve(self, H, dt_col, max_dt, blocks):
        if max_dt == 0.0:
            return H
        return T.hadamard(H, decay_factor(self.w_dec, dt_col, H.data.shape[0]))

    def step_update(self, X_tilde, M_arr, U_arr, H_prev, dt_col, blocks):
        return self.gru([X_tilde, Tensor(M_arr)], H_prev)

    def parameters(self):
        return self.gru.parameters() + [self.w_dec] + self._common_params()

    def named_parameters(self):
        named = self.gru.named_parameters("baseline.gru_decay")
        named["baseline.gru_decay.wdec"] = self.w_dec
        named.update(self._common_named("baseline.gru_decay"))
        return named

    def config_dict(self):
        return {"model": "gru_decay", "d": self.d, "d_h": self.d_h}


class _NodeMlpDynamics:
    """Per-node hidden dynamics dh/dt = f(h); no coupling between nodes."""

    def __init__(self, d_h, hidden, rng):
        self.mlp = MLP([d_h, hidden, d_h], rng)

    def rhs(self, H, blocks=1):
        return self.mlp(H)

    def parameters(self):
        return self.mlp.parameters()

    def named_parameters(self, prefix):
        return self.mlp.named_parameters(prefix)


class OdeRnnBaseline(_BaselineCommon):
    kind = "ode_rnn"

    def __init__(self, graph, d=2, d_h=22, mlp_hidden=48, solver=None, seed=0):
        rng = np.random.default_rng([seed, 403])
        super().__init__(graph, d, d_h, rng)
        self.mlp_hidden = mlp_hidden
        self.solver = solver if solver is not None else SolverConfig()
        self.dynamics = _NodeMlpDynamics(d_h, mlp_hidden, rng)
        self.gru = _DenseGru(2 * d, d_h, rng)

    def evolve(self, H, dt_col, max_dt, blocks):
        return ode_solve_rows(self.dynamics, H, dt_col, max_dt, self.solver, blocks)

    def step_update(self, X_tilde, M_arr, U_arr, H_prev, dt_col, blocks):
        return self.gru([X_tilde, Tensor(M_arr)], H_prev)

    def parameters(self):
        return self.dynamics.parameters() + self.gru.parameters() + self._common_params()

    def named_parameters(self):
        named = self.dynamics.named_parameters("baseline.ode_rnn.f")
        named.update(self.gru.named_parameters("baseline.ode_rnn"))
        named.update(self._common_named("baseline.ode_rnn"))
        return named

    def config_dict(self):
        return {
            "model": "ode_rnn",
            "d": self.d,
            "d_h": self.d_h,
            "mlp_hidden": self.mlp_hidden,
            "step_max": self.solver.step_max,
        }


def make_baseline(kind, graph, d=2, seed=0, **kwargs):
    if kind == "rnn_dt":
        return RnnDtBaseline(graph, d=d, seed=seed, **kwargs)
    if kind == "gru_decay":
        return GruDecayBaseline(graph, d=d, seed=seed, **kwargs)
    if kind == "ode_rnn":
        return OdeRnnBaseline(graph, d=d, seed=seed, **kwargs)
    raise ArgumentError(f"unknown baseline kind {kind!r}")


def train_baseline(kind, train_series, cfg=None, graph=None, d=2, seed=0, **kwargs):
    """Construct and train a baseline under the shared pipeline and loss."""
    if graph is None:
        raise ArgumentError("train_baseline needs the data graph")
    model = make_baseline(kind, graph, d=d, seed=seed, **kwargs)
    cfg = cfg if cfg is not None else TrainConfig(seed=seed)
    history = train_impute(model, train_series, cfg)
    return model, history


def save_baseline_checkpoint(path, model, extra=None):
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


def load_baseline_checkpoint(path, graph=None):
    doc = load_params(path)
    if graph is None:
        graph = NetworkGraph(doc["n_nodes"], doc["edges"])
    cfgd = doc["config"]
    kind = cfgd["model"]
    kwargs = {"d_h": cfgd["d_h"]}
    if kind == "ode_rnn":
        kwargs["mlp_hidden"] = cfgd["mlp_hidden"]
        kwargs["solver"] = SolverConfig(step_max=cfgd["step_max"])
    model = make_baseline(kind, graph, d=cfgd["d"], **kwargs)
    restore_into(model.named_parameters(), doc)
    model.standardizer.mean = np.asarray(doc["standardizer"]["mean"])
    model.standardizer.std = np.asarray(doc["standardizer"]["std"])
    return model, doc
