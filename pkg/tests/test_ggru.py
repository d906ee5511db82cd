import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netdyn import tensor as T
from netdyn.dynamics import NetworkGraph
from netdyn.errors import ArgumentError, ContractError, ShapeError
from netdyn.ggru import (
    GgruParams,
    combine_imputation,
    compute_reliability,
    ggru_update,
    initial_impute,
    mpnn_apply,
    readout_state,
    time_decay_gate,
)
from netdyn.tensor import Tensor


@pytest.fixture
def params2():
    g = NetworkGraph(2, [(0, 1)])
    return GgruParams(g, d=1, d_h=2, rng=np.random.default_rng(0))


def test_mpnn_direct_arithmetic():
    A = Tensor([[0.0, 1.0], [1.0, 0.0]])
    out = mpnn_apply(Tensor([[1.0], [2.0]]), A, Tensor([[1.0]]), Tensor([[1.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [3.0]])


def test_mpnn_zero_w2_decouples():
    rng = np.random.default_rng(1)
    H = Tensor(rng.normal(size=(3, 2)))
    A = Tensor(np.ones((3, 3)) - np.eye(3))
    W1 = Tensor(rng.normal(size=(2, 4)))
    out = mpnn_apply(H, A, W1, Tensor(np.zeros((2, 4))))
    np.testing.assert_allclose(out.data, H.data @ W1.data)


def test_mpnn_empty_graph():
    rng = np.random.default_rng(2)
    H = Tensor(rng.normal(size=(3, 2)))
    W1 = Tensor(rng.normal(size=(2, 4)))
    W2 = Tensor(rng.normal(size=(2, 4)))
    out = mpnn_apply(H, Tensor(np.zeros((3, 3))), W1, W2)
    np.testing.assert_allclose(out.data, H.data @ W1.data)


def test_reliability_perfect_reconstruction():
    X = np.ones((2, 2))
    M = np.array([[1.0, 0.0], [1.0, 1.0]])
    rel = compute_reliability(X, X.copy(), M)
    assert rel.alpha == 0.0
    np.testing.assert_array_equal(rel.U, np.ones((2, 2)))


def test_reliability_single_error():
    X = np.zeros((1, 2))
    X_hat = np.array([[2.0, 123.0]])
    M = np.array([[1.0, 0.0]])
    rel = compute_reliability(X, X_hat, M)
    assert rel.alpha == 4.0
    assert rel.U[0, 0] == 1.0  # observed entries always 1
    assert rel.U[0, 1] == pytest.approx(0.2, abs=1e-12)  # 1/(1+4)


def test_reliability_carry_forward():
    X = np.zeros((1, 2))
    rel = compute_reliability(X, X + 1.0, np.zeros((1, 2)), alpha_prev=3.0)
    assert rel.alpha == 3.0
    np.testing.assert_allclose(rel.U, 0.25)


@given(st.floats(min_value=0.0, max_value=100.0, allow_nan=False))
@settings(max_examples=30, deadline=None)
def test_reliability_bounds(alpha_seed):
    X = np.zeros((2, 2))
    X_hat = np.full((2, 2), np.sqrt(alpha_seed))
    M = np.array([[1.0, 0.0], [0.0, 1.0]])
    rel = compute_reliability(X, X_hat, M)
    assert np.all(rel.U > 0) and np.all(rel.U <= 1.0)
    if rel.alpha == 0:
        np.testing.assert_array_equal(rel.U, 1.0)


def test_time_decay_values(params2):
    Z = Tensor(np.ones((2, 2)))
    w = Tensor(np.array([[0.5, 0.0]]))
    out = time_decay_gate(Z, 2.0, w)
    assert out.data[0, 0] == pytest.approx(np.exp(-1.0), abs=1e-12)
    assert out.data[0, 1] == 1.0  # w=0 -> no decay
    same = time_decay_gate(Z, 0.0, w)
    np.testing.assert_array_equal(same.data, Z.data)  # dt = 0


def test_time_decay_negative_product_clamped():
    Z = Tensor(np.ones((1, 1)))
    out = time_decay_gate(Z, 3.0, Tensor([[-2.0]]))
    assert out.data[0, 0] == 1.0


def test_time_decay_rejects_negative_dt():
    with pytest.raises(ArgumentError):
        time_decay_gate(Tensor(np.ones((1, 1))), -0.5, Tensor([[0.1]]))


def test_time_decay_monotone_in_dt():
    Z = Tensor(np.full((1, 3), 0.8))
    w = Tensor(np.array([[0.2, 0.5, 1.0]]))
    prev = None
    for dt in (0.1, 0.5, 1.0, 2.0):
        cur = time_decay_gate(Z, dt, w).data
        if prev is not None:
            assert np.all(cur < prev)
        prev = cur


def test_ggru_all_zero_weights(params2):
    for p in params2.parameters():
        p.data[:] = 0.0
    H_prev = Tensor(np.random.default_rng(3).normal(size=(2, 2)))
    X = Tensor(np.zeros((2, 1)))
    U = Tensor(np.ones((2, 1)))
    out = ggru_update(X, U, H_prev, 0.0, params2)
    np.testing.assert_allclose(out.data, 0.5 * H_prev.data, atol=1e-15)


def test_ggru_gate_endpoints(params2):
    rng = np.random.default_rng(4)
    H_prev = Tensor(rng.normal(size=(2, 2)))
    X = Tensor(rng.normal(size=(2, 1)))
    U = Tensor(np.ones((2, 1)))
    keep = ggru_update(X, U, H_prev, 0.3, params2, _force_z=np.ones((2, 2)))
    np.testing.assert_array_equal(keep.data, H_prev.data)  # Z = 1 keeps H
    fresh = ggru_update(X, U, H_prev, 0.3, params2, _force_z=np.zeros((2, 2)))
    assert np.all(np.abs(fresh.data) < 1.0)  # Z = 0 yields C = tanh(...)


def test_ggru_convex_combination_bound(params2):
    rng = np.random.default_rng(5)
    H_prev = Tensor(rng.normal(size=(2, 2)))
    X = Tensor(rng.normal(size=(2, 1)))
    U = Tensor(np.full((2, 1), 0.7))
    out = ggru_update(X, U, H_prev, 0.2, params2).data
    # C in (-1,1) from tanh; H_new between H_prev and C elementwise
    lo = np.minimum(H_prev.data, -1.0)
    hi = np.maximum(H_prev.data, 1.0)
    assert np.all(out > lo) and np.all(out < hi)


def test_readout_constant_map(params2):
    params2.v_s.data[:] = 0.0
    params2.b_s.data[:] = 7.0
    out = readout_state(Tensor(np.random.default_rng(6).normal(size=(2, 2))), params2)
    np.testing.assert_array_equal(out.data, np.full((2, 1), 7.0))


def test_readout_direct():
    g = NetworkGraph(1, [])
    p = GgruParams(g, d=1, d_h=1, rng=np.random.default_rng(0))
    p.v_s.data[:] = 2.0
    p.b_s.data[:] = 1.0
    assert readout_state(Tensor([[3.0]]), p).item() == 7.0


def test_combine_full_and_empty_masks():
    rng = np.random.default_rng(7)
    X = Tensor(rng.normal(size=(2, 2)))
    X_hat = Tensor(rng.normal(size=(2, 2)))
    np.testing.assert_array_equal(
        combine_imputation(X, np.ones((2, 2)), X_hat).data, X.data
    )
    np.testing.assert_array_equal(
        combine_imputation(X, np.zeros((2, 2)), X_hat).data, X_hat.data
    )


def test_combine_mixed_mask():
    X = Tensor([[1.0, 2.0], [3.0, 4.0]])
    X_hat = Tensor([[9.0, 8.0], [7.0, 6.0]])
    M = np.array([[1.0, 0.0], [0.0, 1.0]])
    out = combine_imputation(X, M, X_hat).data
    np.testing.assert_array_equal(out, [[1.0, 8.0], [7.0, 4.0]])


def test_combine_rejects_non_binary_mask():
    X = Tensor(np.ones((1, 1)))
    with pytest.raises(ContractError):
        combine_imputation(X, np.array([[0.5]]), X)


def test_initial_impute(params2):
    params2.b_0.data[:] = 1.5
    X0 = Tensor(np.array([[2.0], [3.0]]))
    x_tilde, H0, fill = initial_impute(X0, np.ones((2, 1)), params2)
    np.testing.assert_array_equal(x_tilde.data, X0.data)  # full observation
    np.testing.assert_array_equal(H0.data, np.zeros((2, 2)))  # zero hidden
    x_tilde2, _, _ = initial_impute(X0, np.zeros((2, 1)), params2)
    np.testing.assert_array_equal(x_tilde2.data, np.full((2, 1), 1.5))


def test_gate_ranges(params2):
    rng = np.random.default_rng(8)
    A = params2.adjacency_tensor(1)
    cat = T.concat_cols(
        [Tensor(rng.normal(size=(2, 1))), Tensor(np.ones((2, 1))), Tensor(rng.normal(size=(2, 2)))]
    )
    R = T.sigmoid(mpnn_apply(cat, A, params2.w_r1, params2.w_r2)).data
    assert np.all((R > 0) & (R < 1))


def test_mpnn_shape_error(params2):
    with pytest.raises(ShapeError):
        mpnn_apply(Tensor(np.ones((3, 4))), params2.adjacency_tensor(1),
                   Tensor(np.ones((4, 2))), Tensor(np.ones((4, 2))))
