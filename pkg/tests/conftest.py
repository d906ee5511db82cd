import numpy as np
import pytest

from netdyn.dynamics import ExperimentConfig, paper8_graph


@pytest.fixture(scope="session")
def graph8():
    return paper8_graph()


@pytest.fixture(scope="session")
def small_dataset():
    """4 trajectories on the 8-node system, 50% observed, 30% missing."""
    cfg = ExperimentConfig(p_obs=0.5, p_miss=0.3, n_traj=4, split=0.5, seed=42)
    from netdyn.dynamics import make_dataset

    train, test, truths = make_dataset(cfg)
    return cfg, train, test, truths


def finite_diff_grad(fn, x, h=1e-5):
    """Central finite differences of scalar fn(ndarray) -> float."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = fn(x)
        x[idx] = orig - h
        fm = fn(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g
