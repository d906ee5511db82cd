import json

import numpy as np
import pytest

from netdyn.dynamics import (
    ExperimentConfig,
    NetworkGraph,
    ObservationSeries,
    apply_feature_mask,
    integrate,
    load_dataset,
    make_dataset,
    paper8_graph,
    rhs_2d_cubic,
    sample_observation_times,
    save_dataset,
)
from netdyn.errors import ArgumentError, DivergenceError, ShapeError


def test_paper8_adjacency():
    g = paper8_graph()
    assert g.n_nodes == 8
    assert g.adjacency.sum() == 16  # 8 undirected edges
    np.testing.assert_array_equal(g.adjacency, g.adjacency.T)
    assert np.all(np.diag(g.adjacency) == 0)


def test_graph_rejects_bad_edges():
    with pytest.raises(ArgumentError):
        NetworkGraph(3, [(0, 3)])
    with pytest.raises(ArgumentError):
        NetworkGraph(3, [(1, 1)])


def test_rhs_zero_fixed_point(graph8):
    np.testing.assert_array_equal(rhs_2d_cubic(np.zeros((8, 2)), graph8), np.zeros((8, 2)))


def test_rhs_isolated_node():
    g = NetworkGraph(1, [])
    out = rhs_2d_cubic(np.array([[1.0, 0.0]]), g)
    np.testing.assert_allclose(out, [[-0.1, 1.0]])


def test_rhs_two_connected_nodes():
    g = NetworkGraph(2, [(0, 1)])
    out = rhs_2d_cubic(np.array([[1.0, 0.0], [0.0, 0.0]]), g)
    # node 0: f1 = -0.1 + (1 - 0) = 0.9
    assert out[0, 0] == pytest.approx(0.9)
    assert out[1, 0] == pytest.approx(-1.0)  # coupling (0 - 1)


def test_rhs_shape_error(graph8):
    with pytest.raises(ShapeError):
        rhs_2d_cubic(np.zeros((8, 3)), graph8)


def test_integrate_zero_field():
    x0 = np.array([[1.0, 2.0]])
    tr = integrate(lambda x: np.zeros_like(x), x0, [0.0, 0.5, 1.0], 0.1)
    for s in tr.states:
        np.testing.assert_array_equal(s, x0)


def test_integrate_exponential_decay():
    tr = integrate(lambda x: -x, np.array([[1.0]]), [0.0, 1.0], 0.01)
    assert abs(tr.states[-1][0, 0] - np.exp(-1.0)) < 1e-8


def test_integrate_order4_convergence():
    errs = []
    steps = [0.1, 0.05, 0.025, 0.0125]
    for h in steps:
        tr = integrate(lambda x: -x, np.array([[1.0]]), [0.0, 1.0], h)
        errs.append(abs(tr.states[-1][0, 0] - np.exp(-1.0)))
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    assert abs(slope - 4.0) < 0.3


def test_integrate_nonmonotone_grid():
    with pytest.raises(ArgumentError):
        integrate(lambda x: -x, np.array([[1.0]]), [0.0, 1.0, 0.5], 0.1)


def test_integrate_divergence_reports_time():
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError):
            integrate(lambda x: x**3, np.array([[2.0]]), [0.0, 1.0, 2.0, 5.0], 0.5)


def test_sampling_full_grid():
    grid = np.linspace(0, 10, 100)
    np.testing.assert_array_equal(sample_observation_times(grid, 1.0, seed=0), grid)


def test_sampling_count_and_first_point():
    grid = np.linspace(0, 10, 100)
    for mode in ("uniform-subset", "exponential-gaps"):
        sub = sample_observation_times(grid, 0.5, mode=mode, seed=1)
        assert len(sub) == 50
        assert sub[0] == grid[0]
        assert np.all(np.diff(sub) > 0)


def test_sampling_deterministic():
    grid = np.linspace(0, 10, 100)
    a = sample_observation_times(grid, 0.3, seed=7)
    b = sample_observation_times(grid, 0.3, seed=7)
    np.testing.assert_array_equal(a, b)


def test_sampling_too_few_points():
    with pytest.raises(ArgumentError):
        sample_observation_times(np.linspace(0, 1, 10), 0.1, seed=0)


def test_mask_no_deletion():
    masks = apply_feature_mask(np.zeros((5, 2, 2)), 0.0, seed=0)
    assert masks.min() == 1.0


def test_mask_exact_count():
    masks = apply_feature_mask(np.zeros((10, 2, 2)), 0.75, seed=0)
    for t in range(10):
        assert (masks[t] == 0).sum() == 3  # floor(0.75 * 4)


def test_mask_deterministic():
    a = apply_feature_mask(np.zeros((5, 8, 2)), 0.3, seed=9)
    b = apply_feature_mask(np.zeros((5, 8, 2)), 0.3, seed=9)
    np.testing.assert_array_equal(a, b)


def test_make_dataset_split_counts():
    cfg = ExperimentConfig(n_traj=10, split=0.7, p_obs=0.5, seed=0)
    train, test, truths = make_dataset(cfg)
    assert len(train) == 7 and len(test) == 3 and len(truths) == 10


def test_make_dataset_full_split_warns():
    cfg = ExperimentConfig(n_traj=4, split=1.0, p_obs=0.5, seed=0)
    with pytest.warns(UserWarning):
        train, test, _ = make_dataset(cfg)
    assert test == []


def test_dataset_roundtrip_and_determinism(tmp_path):
    cfg = ExperimentConfig(n_traj=3, split=0.7, p_obs=0.4, seed=5)
    paths = []
    for name in ("a.json", "b.json"):
        train, test, truths = make_dataset(cfg)
        p = tmp_path / name
        save_dataset(p, cfg, train, test, truths)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    data = load_dataset(paths[0])
    assert data["graph"].n_nodes == 8
    assert len(data["train"]) == 2 and len(data["test"]) == 1
    assert len(data["truth"]) == 3


def test_refinement_consistency(graph8):
    rng = np.random.default_rng(0)
    x0 = rng.uniform(-2, 2, size=(8, 2))
    grid = [0.0, 10.0]
    a = integrate(lambda x: rhs_2d_cubic(x, graph8), x0, grid, 1e-3).states[-1]
    b = integrate(lambda x: rhs_2d_cubic(x, graph8), x0, grid, 1e-4).states[-1]
    assert np.abs(a - b).max() < 1e-4


def test_series_validation():
    with pytest.raises(ArgumentError):
        ObservationSeries(
            times=np.array([0.0, 0.0]),
            states=np.zeros((2, 2, 2)),
            masks=np.ones((2, 2, 2)),
        )
    with pytest.raises(ArgumentError):
        ObservationSeries(
            times=np.array([0.0, 1.0]),
            states=np.zeros((2, 2, 2)),
            masks=np.full((2, 2, 2), 0.5),
        )
