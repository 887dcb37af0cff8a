import numpy as np
import pytest

from spikestereo import autodiff as ad
from spikestereo.autodiff import ShapeError, Tensor
from spikestereo.blocks import (
    FEB,
    SRBB,
    SSCA,
    SSCM,
    SSRB,
    Downsample,
    SpikeConvUnit,
    StereoPair,
    Upsample,
    reset_states,
)
from spikestereo.profiler import EnergyLedger

F64 = dict(dtype=np.float64)


def zero_params(module):
    for p in module.parameters():
        p.data[...] = 0.0


def features(T=2, N=1, C=4, H=6, W=6, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(0.3, 1.0, size=(T, N, C, H, W))


def pair_of(seed=0, **kw):
    left, right = features(seed=seed, **kw), features(seed=seed + 1, **kw)
    return StereoPair.from_views(Tensor(left), Tensor(right))


def test_stereo_pair_views_and_swap():
    p = pair_of()
    np.testing.assert_array_equal(p.swapped().left.data, p.right.data)
    assert p.shape == (2, 1, 4, 6, 6)
    with pytest.raises(ShapeError):
        StereoPair.from_views(Tensor(np.zeros((1, 1, 2, 2, 2))), Tensor(np.zeros((1, 1, 2, 3, 2))))


def test_scu_shapes_and_stride():
    scu = SpikeConvUnit(4, 6, 3, stride=2, rng=np.random.default_rng(0), **F64)
    y = scu(Tensor(features(H=7, W=5)))
    assert y.shape == (2, 1, 6, 4, 3)


def test_scu_conv_sees_only_spikes():
    scu = SpikeConvUnit(4, 4, 3, rng=np.random.default_rng(0), **F64)
    ledger = EnergyLedger()
    with ledger.active():
        scu(Tensor(features()))
    (rec,) = ledger.spike_layers()
    assert rec.binary_verified
    assert 0 < rec.spikes_in < rec.elements_in


def test_srbb_zero_init_is_identity():
    blk = SRBB(4, rng=np.random.default_rng(0), **F64)
    zero_params(blk)
    x = features()
    np.testing.assert_array_equal(blk(Tensor(x)).data, x)


def test_sew_shortcut_adds_spikes():
    blk = SRBB(4, shortcut="sew", rng=np.random.default_rng(0), **F64)
    zero_params(blk)
    x = features()
    y = blk(Tensor(x)).data
    assert set(np.unique(y)).issubset({0.0, 1.0})
    assert y.sum() > 0


def test_unknown_shortcut():
    with pytest.raises(ValueError):
        SRBB(4, shortcut="dense")


def test_feb_runs_both_views_with_shared_weights():
    feb = FEB(4, 2, rng=np.random.default_rng(0), **F64)
    x = features(N=1)
    stacked = np.concatenate([x, x], axis=1)
    y = feb(Tensor(stacked)).data
    # identical views give identical outputs because the weights are shared
    np.testing.assert_allclose(y[:, 0], y[:, 1], atol=1e-12)


def test_sscm_zero_init_is_identity():
    m = SSCM(4, rng=np.random.default_rng(0), **F64)
    zero_params(m)
    p = pair_of()
    out = m(p)
    np.testing.assert_array_equal(out.left.data, p.left.data)
    np.testing.assert_array_equal(out.right.data, p.right.data)


def test_sscm_is_not_additive():
    m = SSCM(4, init_scale=1.0, rng=np.random.default_rng(1), **F64)
    x, y = pair_of(0), pair_of(5)
    reset_states(m)
    fx = m(x).both.data
    reset_states(m)
    fy = m(y).both.data
    reset_states(m)
    fxy = m(StereoPair(x.both + y.both)).both.data
    assert np.max(np.abs(fxy - fx - fy)) > 1e-3


def test_sscm_swap_equivariance_with_view_symmetric_weights():
    rng = np.random.default_rng(3)
    m = SSCM(4, init_scale=1.0, rng=rng, **F64)
    h = m.hidden
    a = rng.normal(size=(h, 4))
    b = rng.normal(size=(4, h))
    m.w_down.data = np.concatenate([a, a], axis=1)
    m.w_up.data = np.concatenate([b, b], axis=0)
    p = pair_of(2)
    out = m(p)
    reset_states(m)
    out_swapped = m(p.swapped())
    np.testing.assert_allclose(out_swapped.left.data, out.right.data, atol=1e-10)
    np.testing.assert_allclose(out_swapped.right.data, out.left.data, atol=1e-10)


def test_sscm_sigmoid_variant_differs():
    rng = np.random.default_rng(0)
    mult = SSCM(4, activation="multiplication", rng=np.random.default_rng(0), **F64)
    sig = SSCM(4, activation="sigmoid", rng=np.random.default_rng(0), **F64)
    p = pair_of()
    assert not np.allclose(mult(p).both.data, sig(p).both.data)
    with pytest.raises(ValueError):
        SSCM(4, activation="tanh", rng=rng)


def test_ssca_zero_init_is_identity():
    m = SSCA(4, rng=np.random.default_rng(0), **F64)
    zero_params(m)
    p = pair_of()
    np.testing.assert_array_equal(m(p).both.data, p.both.data)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ssca_tied_swap_symmetry(seed):
    m = SSCA(4, tied=True, rng=np.random.default_rng(seed), **F64)
    p = pair_of(seed * 3)
    out = m(p)
    reset_states(m)
    out_s = m(p.swapped())
    np.testing.assert_allclose(out_s.left.data, out.right.data, rtol=0, atol=1e-10)
    np.testing.assert_allclose(out_s.right.data, out.left.data, rtol=0, atol=1e-10)


def test_ssca_tied_has_half_the_parameters():
    tied = SSCA(4, tied=True, rng=np.random.default_rng(0))
    untied = SSCA(4, tied=False, rng=np.random.default_rng(0))
    assert 2 * tied.num_parameters() == untied.num_parameters()


def test_ssca_exchanges_information_across_views():
    m = SSCA(4, rng=np.random.default_rng(0), **F64)
    p = pair_of(0)
    out = m(p).left.data
    reset_states(m)
    q = StereoPair.from_views(p.left, Tensor(p.right.data + 1.0))
    out2 = m(q).left.data
    assert not np.allclose(out, out2)


def test_ssrb_zero_init_is_identity():
    m = SSRB(4, rng=np.random.default_rng(0), **F64)
    zero_params(m)
    p = pair_of()
    np.testing.assert_array_equal(m(p).both.data, p.both.data)


def test_ssrb_shapes():
    m = SSRB(4, expansion=2, rng=np.random.default_rng(0), **F64)
    out = m(pair_of())
    assert out.shape == (2, 1, 4, 6, 6)


def test_down_and_up_shapes():
    rng = np.random.default_rng(0)
    down = Downsample(4, 8, rng=rng, **F64)
    up = Upsample(8, 4, rng=rng, **F64)
    x = Tensor(features(H=7, W=6))
    d = down(x)
    assert d.shape == (2, 1, 8, 4, 3)
    u = up(d, size=(7, 6))
    assert u.shape == (2, 1, 4, 7, 6)
    assert up(d).shape == (2, 1, 4, 8, 6)


def test_block_gradients_reach_inputs():
    m = SSCA(4, rng=np.random.default_rng(0), **F64)
    x = Tensor(features(), requires_grad=True)
    y = Tensor(features(seed=4), requires_grad=True)
    out = m(StereoPair.from_views(x, y))
    ad.sum(out.both).backward()
    assert np.any(x.grad != 0) and np.any(y.grad != 0)
