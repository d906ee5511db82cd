import numpy as np
import pytest

from netdyn.baselines import (
    BASELINE_KINDS,
    load_baseline_checkpoint,
    make_baseline,
    save_baseline_checkpoint,
    train_baseline,
)
from netdyn.dynamics import NetworkGraph, ObservationSeries, paper8_graph
from netdyn.errors import ArgumentError
from netdyn.impute import ImputeModel, TrainConfig, forward_series, train_impute
from netdyn.serialize import count_params
from netdyn.tensor import Tape, backward


def _series(rng, n=3, steps=5, p_miss=0.25, t_max=2.0):
    times = np.sort(rng.uniform(0, t_max, size=steps))
    times[0] = 0.0
    states = rng.normal(size=(steps, n, 2))
    masks = np.ones((steps, n, 2))
    for t in range(steps):
        drop = rng.choice(n * 2, size=int(p_miss * n * 2), replace=False)
        masks[t].ravel()[drop] = 0.0
    return ObservationSeries(times=times, states=states, masks=masks)


def _prepared(kind, graph, seed=0):
    model = make_baseline(kind, graph, seed=seed)
    model.standardizer.mean = np.zeros(2)
    model.standardizer.std = np.ones(2)
    return model


def test_unknown_kind_rejected():
    with pytest.raises(ArgumentError):
        make_baseline("transformer", paper8_graph())


@pytest.mark.parametrize("kind", BASELINE_KINDS)
def test_forward_shapes_and_finite(kind):
    rng = np.random.default_rng(0)
    g = NetworkGraph(3, [(0, 1), (1, 2)])
    model = _prepared(kind, g)
    s = _series(rng)
    xhat, xtilde, H, _ = forward_series(model, s)
    assert len(xhat) == len(s.times)
    for x in xhat:
        assert x.data.shape == (3, 2)
        assert np.all(np.isfinite(x.data))
    assert H.data.shape == (3, model.d_h)


@pytest.mark.parametrize("kind", BASELINE_KINDS)
def test_capacity_parity_with_proposed(kind):
    g = paper8_graph()
    proposed = count_params(ImputeModel(g).named_parameters())
    ours = count_params(make_baseline(kind, g).named_parameters())
    assert abs(ours - proposed) / proposed <= 0.20


@pytest.mark.parametrize("kind", BASELINE_KINDS)
def test_training_descends_and_is_deterministic(kind):
    rng = np.random.default_rng(1)
    g = NetworkGraph(3, [(0, 1), (1, 2)])
    series = [_series(rng, steps=6) for _ in range(4)]
    cfg = TrainConfig(epochs=15, batch=2, seed=3)

    def run():
        model, history = train_baseline(kind, series, cfg=cfg, graph=g, seed=2)
        return history

    h1 = run()
    h2 = run()
    assert h1 == h2
    assert all(np.isfinite(v) for v in h1)
    assert h1[-1] < h1[0]


def test_rnn_dt_hidden_constant_between_observations():
    g = NetworkGraph(3, [(0, 1), (1, 2)])
    model = _prepared("rnn_dt", g)
    rng = np.random.default_rng(2)
    from netdyn.tensor import Tensor

    H = Tensor(rng.normal(size=(3, model.d_h)))
    out = model.evolve(H, np.full((3, 1), 0.7), 0.7, 1)
    np.testing.assert_array_equal(out.data, H.data)


def test_gru_decay_hidden_shrinks_over_time():
    g = NetworkGraph(3, [(0, 1), (1, 2)])
    model = _prepared("gru_decay", g)
    from netdyn.tensor import Tensor

    H = Tensor(np.ones((3, model.d_h)))
    short = model.evolve(H, np.full((3, 1), 0.1), 0.1, 1)
    long = model.evolve(H, np.full((3, 1), 2.0), 2.0, 1)
    assert np.all(np.abs(long.data) <= np.abs(short.data))
    assert np.all(np.abs(short.data) <= 1.0)


def test_ode_rnn_no_cross_node_coupling():
    # hidden dynamics are per-node: changing one node's state must not
    # affect another node's evolved hidden state
    g = NetworkGraph(3, [(0, 1), (1, 2)])
    model = _prepared("ode_rnn", g)
    from netdyn.tensor import Tensor

    rng = np.random.default_rng(3)
    base = rng.normal(size=(3, model.d_h))
    bumped = base.copy()
    bumped[0] += 1.0
    a = model.evolve(Tensor(base), np.full((3, 1), 0.5), 0.5, 1)
    b = model.evolve(Tensor(bumped), np.full((3, 1), 0.5), 0.5, 1)
    np.testing.assert_array_equal(a.data[1:], b.data[1:])
    assert np.abs(a.data[0] - b.data[0]).max() > 0


def test_rnn_dt_permutation_equivariance():
    rng = np.random.default_rng(4)
    g = paper8_graph()
    s = _series(rng, n=8, steps=4)
    perm = rng.permutation(8)
    inv = np.argsort(perm)
    g_p = NetworkGraph(8, [(int(inv[a]), int(inv[b])) for a, b in g.edges])
    s_p = ObservationSeries(times=s.times, states=s.states[:, perm], masks=s.masks[:, perm])
    xa, _, _, _ = forward_series(_prepared("rnn_dt", g, seed=5), s)
    xb, _, _, _ = forward_series(_prepared("rnn_dt", g_p, seed=5), s_p)
    for a, b in zip(xa, xb):
        assert np.abs(a.data[perm] - b.data).max() < 1e-10


def test_ode_rnn_gradients_match_finite_differences():
    from conftest import finite_diff_grad
    from netdyn.impute import series_loss

    g = NetworkGraph(2, [(0, 1)])
    model = _prepared("ode_rnn", g, seed=6)
    rng = np.random.default_rng(7)
    s = _series(rng, n=2, steps=3)
    params = model.parameters()

    with Tape() as tape:
        loss = series_loss(model, [s])
    backward(loss, tape)
    for p in params[:3]:
        analytic = p.grad.copy()

        def loss_at(arr, p=p):
            p.data[...] = arr
            return series_loss(model, [s]).item()

        original = p.data.copy()
        numeric = finite_diff_grad(loss_at, p.data.copy())
        p.data[...] = original
        denom = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
        assert np.abs(analytic - numeric).max() / denom < 1e-5


@pytest.mark.parametrize("kind", BASELINE_KINDS)
def test_checkpoint_roundtrip(tmp_path, kind):
    g = NetworkGraph(3, [(0, 1), (1, 2)])
    model = _prepared(kind, g, seed=8)
    rng = np.random.default_rng(8)
    s = _series(rng)
    path = tmp_path / f"{kind}.json"
    save_baseline_checkpoint(path, model)
    loaded, _ = load_baseline_checkpoint(path)
    a, _, _, _ = forward_series(model, s)
    b, _, _, _ = forward_series(loaded, s)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.data, y.data)
