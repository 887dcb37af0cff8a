import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikestereo import autodiff as ad
from spikestereo.autodiff import Parameter, Tensor
from spikestereo.network import NetworkConfig, StereoRestorer
from spikestereo.training import (
    AdamW,
    AdamWConfig,
    DivergenceError,
    FeaturePyramid,
    LossConfig,
    PairDataset,
    TrainConfig,
    adamw_step,
    evaluate,
    l1_loss,
    perceptual_loss,
    psnr,
    resume,
    ssim,
    stereo_scores,
    train,
)

from oracles import psnr_direct, ssim_direct

TINY = dict(channels=(8, 16, 24, 32, 40), T=2, refine_channels=16)


def toy_data(n=6, size=32, seed=0):
    rng = np.random.default_rng(seed)
    clean = rng.uniform(0.2, 0.8, size=(2, n, 3, size, size)).astype(np.float32)
    noisy = np.clip(clean + rng.normal(0, 0.1, size=clean.shape), 0, 1).astype(np.float32)
    return PairDataset(noisy[0], noisy[1], clean[0], clean[1])


# -- losses ------------------------------------------------------------------


def test_l1_sums_view_means():
    pl, pr = np.zeros((1, 3, 2, 2)), np.zeros((1, 3, 2, 2))
    tl, tr = np.full_like(pl, 0.5), np.full_like(pr, -0.25)
    assert float(l1_loss((pl, pr), (tl, tr)).data) == pytest.approx(0.75)
    with pytest.raises(ad.ShapeError):
        l1_loss((pl, pr), (np.zeros((1, 3, 3, 2)), tr))


def test_perceptual_with_identity_tap_equals_l1():
    rng = np.random.default_rng(0)
    views = [rng.uniform(size=(2, 3, 5, 5)) for _ in range(4)]
    cfg = LossConfig(lambda_k=(1.0,), perceptual_layers=(0,))
    lp = perceptual_loss((views[0], views[1]), (views[2], views[3]), cfg, FeaturePyramid.identity())
    # relu on [0, 1] images is the identity
    assert float(lp.data) == pytest.approx(float(l1_loss((views[0], views[1]), (views[2], views[3])).data), rel=1e-12)


def test_perceptual_zero_at_target_and_positive_elsewhere():
    rng = np.random.default_rng(1)
    a, b = rng.uniform(size=(1, 3, 16, 16)), rng.uniform(size=(1, 3, 16, 16))
    ext = FeaturePyramid(dtype=np.float64)
    assert float(perceptual_loss((a, b), (a, b), extractor=ext).data) == 0.0
    assert float(perceptual_loss((a, b), (b, a), extractor=ext).data) > 0.0


def test_perceptual_weights_scale_terms():
    rng = np.random.default_rng(2)
    a, b, c, d = (rng.uniform(size=(1, 3, 8, 8)) for _ in range(4))
    ext = FeaturePyramid(dtype=np.float64)
    one = float(perceptual_loss((a, b), (c, d), LossConfig((1.0,), (1,)), ext).data)
    two = float(perceptual_loss((a, b), (c, d), LossConfig((2.0,), (1,)), ext).data)
    assert two == pytest.approx(2 * one)
    with pytest.raises(ValueError):
        LossConfig(lambda_k=(-1.0,))


def test_perceptual_gradient_only_reaches_prediction():
    rng = np.random.default_rng(3)
    p = Tensor(rng.uniform(size=(1, 3, 8, 8)), requires_grad=True)
    t = Tensor(rng.uniform(size=(1, 3, 8, 8)), requires_grad=True)
    perceptual_loss((p, p), (t, t), extractor=FeaturePyramid(dtype=np.float64)).backward()
    assert np.any(p.grad != 0)
    assert t.grad is None


# -- optimizer ---------------------------------------------------------------


def adamw_reference(x, grads, lr, b1, b2, wd, eps):
    """Scalar-by-scalar AdamW with bias correction and decoupled decay."""
    x = list(x)
    m = [0.0] * len(x)
    v = [0.0] * len(x)
    for t, g in enumerate(grads, start=1):
        for i in range(len(x)):
            x[i] -= lr * wd * x[i]
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] ** 2
            mhat = m[i] / (1 - b1**t)
            vhat = v[i] / (1 - b2**t)
            x[i] -= lr * mhat / (math.sqrt(vhat) + eps)
    return x


def test_adamw_matches_scalar_reference():
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=5)
    grads = [rng.normal(scale=0.1, size=5) for _ in range(7)]
    p = Parameter(x0.copy())
    cfg = AdamWConfig(lr=0.01, weight_decay=0.1, clip_norm=None)
    opt = AdamW([p], cfg)
    for g in grads:
        adamw_step([p], [g], opt)
    ref = adamw_reference(x0, grads, 0.01, 0.9, 0.99, 0.1, 1e-8)
    np.testing.assert_allclose(p.data, ref, rtol=1e-12, atol=1e-15)


def test_adamw_zero_gradient_only_decays():
    p = Parameter(np.array([1.0, -2.0]))
    opt = AdamW([p], AdamWConfig(lr=0.1, weight_decay=0.5))
    adamw_step([p], [np.zeros(2)], opt)
    np.testing.assert_allclose(p.data, [0.95, -1.9])
    q = Parameter(np.array([1.0, -2.0]))
    adamw_step([q], [np.zeros(2)], AdamW([q], AdamWConfig(lr=0.1, weight_decay=0.0)))
    np.testing.assert_array_equal(q.data, [1.0, -2.0])


def test_adamw_clips_global_norm():
    p = Parameter(np.zeros(2))
    opt = AdamW([p], AdamWConfig(clip_norm=1.0))
    p.grad = np.array([30.0, 40.0])
    assert opt.step() == pytest.approx(50.0)
    np.testing.assert_allclose(opt.m[0], 0.1 * np.array([0.6, 0.8]))


def test_adamw_converges_on_quadratic():
    target = np.array([0.3, -1.2, 2.0])
    p = Parameter(np.zeros(3))
    opt = AdamW([p], AdamWConfig(lr=0.05, weight_decay=0.0, clip_norm=None))
    for _ in range(200):
        opt.zero_grad()
        ad.sum(ad.square(p - Tensor(target))).backward()
        opt.step()
    np.testing.assert_allclose(p.data, target, atol=1e-3)


def test_adamw_rejects_nonfinite_gradient():
    p = Parameter(np.ones(2))
    p.grad = np.array([1.0, np.nan])
    with pytest.raises(DivergenceError, match="non-finite"):
        AdamW([p]).step()
    np.testing.assert_array_equal(p.data, [1.0, 1.0])


def test_adamw_config_validation():
    with pytest.raises(ValueError):
        AdamWConfig(beta1=1.0)
    with pytest.raises(ValueError):
        AdamWConfig(lr=-1.0)


# -- metrics -----------------------------------------------------------------


def test_psnr_known_value_and_cap():
    a = np.zeros((3, 4, 4))
    assert psnr(a, a + 0.1) == pytest.approx(20.0)
    assert psnr(a, a) == 100.0
    with pytest.raises(ValueError):
        psnr(a, np.zeros((3, 4, 5)))


@pytest.mark.parametrize("seed", range(5))
def test_metrics_match_direct_formulas(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(3, 16, 18))
    b = np.clip(a + rng.normal(0, 0.05 * (seed + 1), size=a.shape), 0, 1)
    assert abs(psnr(a, b) - psnr_direct(a, b)) < 1e-6
    assert abs(ssim(a, b) - ssim_direct(a, b)) < 1e-6


def test_ssim_identity_and_small_image():
    a = np.random.default_rng(0).uniform(size=(3, 12, 12))
    assert ssim(a, a) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ssim(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.3))
def test_ssim_is_symmetric_and_bounded(seed, noise):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(1, 14, 14))
    b = np.clip(a + rng.normal(0, noise, size=a.shape), 0, 1)
    s = ssim(a, b)
    assert -1.0 <= s <= 1.0
    assert s == pytest.approx(ssim(b, a), abs=1e-12)


def test_stereo_scores_average_views():
    rng = np.random.default_rng(0)
    gl, gr = rng.uniform(size=(2, 3, 16, 16))
    s = stereo_scores(gl + 0.1, gr, gl, gr)
    assert s["psnr_right"] == 100.0
    assert s["psnr"] == pytest.approx((s["psnr_left"] + s["psnr_right"]) / 2)


# -- loop ----------------------------------------------------------------------


def test_pair_dataset_crops_same_window():
    # every pixel encodes (image, y, x); the four arrays differ only by an offset
    n, size = 3, 16
    coords = np.arange(n)[:, None, None, None] * 1000 + np.arange(size)[:, None] * 32 + np.arange(size)
    base = np.broadcast_to(coords, (n, 3, size, size)).astype(np.float64)
    data = PairDataset(base, base + 0.25, base + 0.5, base + 0.75)
    dl, dr, cl, cr = data.batch(np.random.default_rng(0), 5, 8)
    assert dl.shape == cr.shape == (5, 3, 8, 8)
    np.testing.assert_array_equal(dr - 0.25, dl)
    np.testing.assert_array_equal(cl - 0.5, dl)
    np.testing.assert_array_equal(cr - 0.75, dl)
    # each crop is a contiguous window of one image
    for crop in dl[:, 0]:
        np.testing.assert_array_equal(np.diff(crop, axis=1), 1)
        np.testing.assert_array_equal(np.diff(crop, axis=0), 32)
    with pytest.raises(ValueError):
        PairDataset(np.zeros((0, 3, 4, 4)), np.zeros((0, 3, 4, 4)), np.zeros((0, 3, 4, 4)), np.zeros((0, 3, 4, 4)))


def test_zero_learning_rate_keeps_weights():
    model = StereoRestorer(NetworkConfig(**TINY))
    before = [p.data.copy() for p in model.parameters()]
    cfg = TrainConfig(steps=3, batch_size=2, val_every=0, optim={"lr": 0.0})
    train(toy_data(), model, cfg)
    for b, p in zip(before, model.parameters()):
        np.testing.assert_array_equal(b, p.data)


def test_training_reduces_loss():
    model = StereoRestorer(NetworkConfig(**TINY))
    res = train(toy_data(n=1), model, TrainConfig(steps=40, batch_size=1, val_every=0, optim={"lr": 2e-3}))
    first = np.mean([r["loss_l1"] for r in res.records[:5]])
    last = np.mean([r["loss_l1"] for r in res.records[-5:]])
    assert last < first


def test_twin_runs_are_bitwise_identical(tmp_path):
    logs = []
    for name in ("a", "b"):
        model = StereoRestorer(NetworkConfig(**TINY))
        train(toy_data(), model, TrainConfig(steps=4, batch_size=2, val_every=2), val=toy_data(2, seed=9),
              out_dir=str(tmp_path / name))
        logs.append((tmp_path / name / "train_log.jsonl").read_bytes())
    assert logs[0] == logs[1]
    records = [json.loads(line) for line in logs[0].splitlines()]
    assert [r["step"] for r in records] == [1, 2, 3, 4]
    assert records[1]["psnr_val"] is not None and records[0]["psnr_val"] is None
    assert set(records[0]) == {"step", "loss_l1", "loss_p", "psnr_val"}


def test_resume_matches_uninterrupted_run(tmp_path):
    cfg4 = TrainConfig(steps=4, batch_size=2, val_every=0)
    full = train(toy_data(), StereoRestorer(NetworkConfig(**TINY)), cfg4)
    cfg2 = TrainConfig(steps=2, batch_size=2, val_every=0)
    train(toy_data(), StereoRestorer(NetworkConfig(**TINY)), cfg2, out_dir=str(tmp_path))
    model, opt, step = resume(str(tmp_path / "model.snir"), cfg2)
    assert step == 2
    rest = train(toy_data(), model, cfg2, out_dir=str(tmp_path), optimizer=opt, start_step=step)
    assert rest.step == 4
    # checkpoints store float32, as does the model, so the trajectories agree exactly
    assert [r["loss_l1"] for r in rest.records] == [r["loss_l1"] for r in full.records[2:]]
    lines = (tmp_path / "train_log.jsonl").read_text().splitlines()
    assert [json.loads(x)["step"] for x in lines] == [1, 2, 3, 4]


def test_nonfinite_loss_raises_and_saves_last_good(tmp_path):
    model = StereoRestorer(NetworkConfig(**TINY))
    cfg = TrainConfig(steps=1, batch_size=1, val_every=0, loss={"lambda_k": (float("inf"), 1.0, 1.0)})
    with pytest.raises(DivergenceError):
        train(toy_data(), model, cfg, out_dir=str(tmp_path))
    assert (tmp_path / "last_good.snir").exists()


def test_evaluate_reports_input_psnr():
    data = toy_data(n=2)
    model = StereoRestorer(NetworkConfig(**TINY))
    for p in model.parameters():
        p.data[...] = 0.0
    res = evaluate(model, data)
    # a zero network returns its input
    assert res["psnr"] == pytest.approx(res["psnr_input"], abs=1e-4)
    assert set(res) >= {"psnr", "ssim", "psnr_left", "ssim_right", "psnr_input"}
