import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikestereo import autodiff as ad
from spikestereo.autodiff import ShapeError, Tensor
from spikestereo.neuron import LIFNode, LifParams, TdBatchNorm, lif_forward, tdbn_forward

from oracles import batchnorm_two_pass, lif_scalar, lif_scalar_grad


def test_lif_params_validation():
    with pytest.raises(ValueError):
        LifParams(tau=1.0)
    with pytest.raises(ValueError):
        LifParams(u_th=0.0, u_rest=0.0)


def test_constant_drive_fires_every_other_step():
    # x = 0.3, tau 2, th 0.2: U1 = 0.15 (silent), U2 = 0.225 (spike, reset), repeat
    s, _ = lif_forward(Tensor(np.full((4, 1), 0.3)), LifParams(2.0, 0.2, 0.0))
    np.testing.assert_array_equal(s.data[:, 0], [0, 1, 0, 1])


def test_threshold_equality_fires():
    # U = x / tau exactly equals the threshold at t=0
    s, v = lif_forward(Tensor(np.array([[0.4]])), LifParams(2.0, 0.2, 0.0))
    assert s.data[0, 0] == 1.0
    assert v[0] == 0.0


def test_zero_input_never_fires():
    s, v = lif_forward(Tensor(np.zeros((5, 3, 2))))
    assert s.data.sum() == 0
    np.testing.assert_array_equal(v, 0.0)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_vectorized_lif_matches_scalar_loop(dtype):
    rng = np.random.default_rng(7)
    params = LifParams(2.0, 0.2, 0.0)
    x = rng.normal(0.2, 0.5, size=(6, 40)).astype(dtype)
    s, v = lif_forward(Tensor(x), params)
    for i in range(x.shape[1]):
        ref_s, ref_v = lif_scalar(x[:, i], params.tau, params.u_th, params.u_rest)
        np.testing.assert_array_equal(s.data[:, i], ref_s)
        assert v[i] == ref_v


def test_lif_backward_matches_scalar_bptt():
    rng = np.random.default_rng(2)
    params = LifParams(2.0, 0.2, 0.0)
    spec = ad.SurrogateSpec("arctan", 2.0)
    x = rng.normal(0.2, 0.5, size=(5, 6))
    g = rng.normal(size=x.shape)
    t = Tensor(x, requires_grad=True)
    s, _ = lif_forward(t, params, spec)
    (s * Tensor(g)).sum().backward()
    for i in range(x.shape[1]):
        ref = lif_scalar_grad(x[:, i], g[:, i], 2.0, 0.2, 0.0, spec.derivative)
        np.testing.assert_allclose(t.grad[:, i], ref, rtol=1e-12, atol=1e-14)


def test_reset_path_is_detached():
    # a spike at t=0 must not pass gradient to t=1 through the reset gate
    params = LifParams(2.0, 0.2, 0.0)
    spec = ad.SurrogateSpec("arctan", 2.0)
    x = Tensor(np.array([[1.0], [0.0]]), requires_grad=True)
    s, _ = lif_forward(x, params, spec)
    assert s.data[0, 0] == 1.0
    (s[1]).sum().backward()
    # dS1/dx0 flows only via (1 - S0) * U0 which is zero after a spike
    assert x.grad[0, 0] == 0.0
    assert x.grad[1, 0] == pytest.approx(0.5 * spec.derivative(np.array(0.0 - 0.2)))


def test_lif_node_state_persists_until_reset():
    node = LIFNode(LifParams(2.0, 0.2, 0.0))
    x = Tensor(np.full((1, 1), 0.3))
    assert node(x).data[0, 0] == 0.0  # U = 0.15
    assert node(x).data[0, 0] == 1.0  # carries 0.15: U = 0.225
    node.reset_state()
    assert node(x).data[0, 0] == 0.0


def test_lif_nan_input_rejected():
    with pytest.raises(ValueError, match="NaN"):
        lif_forward(Tensor(np.array([[np.nan]])))


def test_lif_empty_time_axis_rejected():
    with pytest.raises(ValueError):
        lif_forward(Tensor(np.zeros((0, 3))))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 50), st.integers(0, 10_000))
def test_lif_spikes_are_binary_and_membrane_below_threshold(T, n, seed):
    x = np.random.default_rng(seed).normal(0.1, 1.0, size=(T, n))
    s, v = lif_forward(Tensor(x), LifParams(2.0, 0.2, 0.0))
    assert set(np.unique(s.data)).issubset({0.0, 1.0})
    # after reset the membrane never sits at or above threshold
    assert np.all(v < 0.2)


def test_tdbn_matches_two_pass_oracle():
    rng = np.random.default_rng(4)
    x = rng.normal(2.0, 3.0, size=(2, 3, 4, 5, 5))
    gamma, beta = rng.uniform(0.5, 1.5, 4), rng.normal(size=4)
    rm, rv = np.zeros(4), np.ones(4)
    out = tdbn_forward(Tensor(x), Tensor(gamma), Tensor(beta), rm, rv, training=True, momentum=0.1, eps=1e-5)
    ref, means, variances = batchnorm_two_pass(x, gamma, beta, 1e-5)
    np.testing.assert_allclose(out.data, ref, rtol=1e-10, atol=1e-10)
    n = x.size // 4
    np.testing.assert_allclose(rm, 0.1 * means, rtol=1e-12)
    np.testing.assert_allclose(rv, 0.9 + 0.1 * variances * n / (n - 1), rtol=1e-12)


def test_tdbn_eval_uses_running_stats():
    bn = TdBatchNorm(2, dtype=np.float64)
    bn.running_mean[:] = [1.0, -1.0]
    bn.running_var[:] = [4.0, 0.25]
    bn.eval()
    x = np.ones((1, 1, 2, 1, 1))
    out = bn(Tensor(x)).data.ravel()
    np.testing.assert_allclose(out, [0.0, 2.0 / np.sqrt(0.25 + 1e-5)], rtol=1e-12)


def test_tdbn_channel_mismatch():
    bn = TdBatchNorm(3)
    with pytest.raises(ShapeError):
        bn(Tensor(np.ones((1, 1, 4, 2, 2), dtype=np.float32)))


def test_tdbn_normalizes_each_channel():
    rng = np.random.default_rng(0)
    bn = TdBatchNorm(3, dtype=np.float64)
    y = bn(Tensor(rng.normal(5, 2, size=(4, 2, 3, 6, 6)))).data
    np.testing.assert_allclose(y.mean(axis=(0, 1, 3, 4)), 0.0, atol=1e-10)
    np.testing.assert_allclose(y.var(axis=(0, 1, 3, 4)), 1.0, rtol=1e-4)
