import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import softmax

from meshforge.body_model import BodyPose, BodyShape, posed_joints, rodrigues
from meshforge.errors import DimensionError, TrainingError, ValidationError
from meshforge.recover_net import (BETA, PHI_DIM, SCALE, THETA, TRANS, ClipTargets, JointModel,
                                   ModelConfig, ModelParams, RecoveryVector, RecurrentState, ToyDataset,
                                   TrainConfig, attention, batch_objective, clip_forward, clip_loss,
                                   clip_loss_and_grad, _residual_signs, encode, frame_loss, grad_check, init_params,
                                   init_states, load_params, load_recovery, lstm_step, make_toy_sequences,
                                   mean_phi_from_sequences, phi_joints, recover_clip, regress_ief,
                                   rodrigues_batch, save_params, save_recovery, toy_dataset, train_toy)

TINY = ModelConfig(image_size=32, patch=8, channels=4, feature_dim=8, attention_dim=8, hidden=8,
                   init_hidden=(8, 8), regressor_hidden=(16, 16))


@pytest.fixture(scope="module")
def jm():
    from meshforge.body_model import procedural_template
    return JointModel(procedural_template("low"))


def tiny_params(seed=0, gain=0.3, mean_phi=None):
    if mean_phi is None:
        mean_phi = np.zeros(PHI_DIM)
        mean_phi[TRANS] = 16.0
        mean_phi[SCALE] = np.log(10.0)
    return init_params(TINY, mean_phi, seed=seed, regressor_gain=gain)


def zero_params(mean_phi=None):
    p = tiny_params(mean_phi=mean_phi)
    return ModelParams(TINY, p.zeros_like(), p.mean_phi)


def targets_for(phis, jm, vis=None, delta=None):
    """Ground truth that the given ``phis (B, T, 88)`` reproduce exactly."""
    B, T = phis.shape[:2]
    X = phi_joints(jm, phis)
    s = np.exp(phis[..., SCALE])
    kp = s[..., None, None] * X[..., :2] + phis[..., None, TRANS]
    vis = np.ones(kp.shape[:3]) if vis is None else vis
    return ClipTargets(kp, vis, X - X[:, :, :1], phis[..., THETA], phis[..., BETA],
                       np.ones(B) if delta is None else delta)


def random_phis(rng, B, T, sigma=0.3):
    phis = rng.normal(0, sigma, (B, T, PHI_DIM))
    phis[..., TRANS] = rng.normal(16, 2, (B, T, 2))
    phis[..., SCALE] = np.log(10.0) + rng.normal(0, 0.1, (B, T))
    return phis


# recovery vector and rotations

def test_recovery_vector_layout():
    rv = RecoveryVector(np.arange(72.0), np.arange(10.0), [0.1, 0.2, 0.3], [5, 6], 2.0)
    arr = rv.to_array()
    assert arr.shape == (88,) and arr[SCALE] == math.log(2.0)
    assert RecoveryVector.from_array(arr) == rv
    assert RecoveryVector.from_array(np.full(88, -50.0)).scale > 0
    with pytest.raises(DimensionError):
        RecoveryVector.from_array(np.zeros(87))
    with pytest.raises(ValidationError):
        RecoveryVector(np.zeros(72), np.zeros(10), np.zeros(3), np.zeros(2), 0.0)


def test_rodrigues_batch_matches_scalar(rng):
    r = np.concatenate([rng.normal(0, 1, (20, 3)), rng.normal(0, 1e-4, (5, 3)), np.zeros((1, 3))])
    R, dR = rodrigues_batch(r, jacobian=True)
    for k in range(len(r)):
        np.testing.assert_allclose(R[k], rodrigues(r[k]), atol=1e-14)
        for c in range(3):
            e = np.zeros(3)
            e[c] = 1e-6
            fd = (rodrigues(r[k] + e) - rodrigues(r[k] - e)) / 2e-6
            np.testing.assert_allclose(dR[k, :, :, c], fd, atol=1e-8)


def test_joint_model_matches_skinning_route(jm, template, rng):
    theta = rng.normal(0, 0.4, (3, 72))
    beta = rng.normal(0, 1, (3, 10))
    J, _ = jm.forward(theta, beta)
    for b in range(3):
        ref = posed_joints(template, BodyShape(beta[b]), BodyPose(theta[b]))
        np.testing.assert_allclose(J[b], ref, atol=1e-10)


def test_joint_model_backward_fd(jm, rng):
    theta = rng.normal(0, 0.4, (2, 72))
    beta = rng.normal(0, 1, (2, 10))
    G = rng.normal(size=(2, jm.K, 3))
    J, cache = jm.forward(theta, beta)
    gth, gbe = jm.backward(G, cache)
    dth, dbe = rng.normal(size=theta.shape), rng.normal(size=beta.shape)
    eps = 1e-6
    fp = (jm.forward(theta + eps * dth, beta + eps * dbe)[0] * G).sum()
    fm = (jm.forward(theta - eps * dth, beta - eps * dbe)[0] * G).sum()
    assert (gth * dth).sum() + (gbe * dbe).sum() == pytest.approx((fp - fm) / (2 * eps), rel=1e-7)


# encoder, attention, lstm, init, ief

def test_encode_zero_image_deterministic():
    p = tiny_params()
    a, b = encode(np.zeros((32, 32)), p), encode(np.zeros((32, 32)), p)
    assert np.all(np.isfinite(a.feature)) and np.array_equal(a.feature, b.feature)
    assert a.feature.shape == (8,) and a.low_level_map.shape == (4, 8)
    with pytest.raises(DimensionError):
        encode(np.zeros((64, 64)), p)


def test_encode_distinct_images(rng):
    p = tiny_params()
    imgs = (rng.random((5, 32, 32)) > 0.5).astype(float)
    feats = [encode(im, p).feature for im in imgs]
    for i in range(5):
        for j in range(i + 1, 5):
            assert not np.array_equal(feats[i], feats[j])


def test_attention_uniform_on_equal_vectors(rng):
    p = tiny_params()
    v = rng.normal(size=8)
    alpha, z = attention(np.repeat(v[None], 4, axis=0), rng.normal(size=8), p)
    np.testing.assert_allclose(alpha, 0.25, atol=1e-15)
    np.testing.assert_allclose(z, v, atol=1e-14)


@given(st.integers(0, 2 ** 31 - 1), st.floats(-50, 50))
@settings(max_examples=40, deadline=None)
def test_attention_softmax_properties(seed, shift):
    rng = np.random.default_rng(seed)
    p = tiny_params(seed=seed % 7)
    a, h = rng.normal(size=(4, 8)), rng.normal(size=8)
    alpha, z = attention(a, h, p)
    assert np.all(alpha >= 0) and abs(alpha.sum() - 1) <= 1e-12
    e = np.tanh(a @ p["att_wa"] + h @ p["att_wh"] + p["att_b"]) @ p["att_v"]
    np.testing.assert_allclose(alpha, softmax(e + shift), atol=1e-12)
    np.testing.assert_allclose(z, alpha @ a, atol=1e-12)


def test_lstm_zero_weights():
    p = zero_params()
    out = lstm_step(np.zeros(2 * 8 + PHI_DIM), RecurrentState(np.zeros(8), np.zeros(8)), p)
    assert np.array_equal(out.c, np.zeros(8)) and np.array_equal(out.h, np.zeros(8))


def scalar_lstm(x, h, c, W, U, b):
    H = len(h)
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    pre = [sum(x[k] * W[k][j] for k in range(len(x))) + sum(h[k] * U[k][j] for k in range(H)) + b[j]
           for j in range(4 * H)]
    c_new, h_new = [], []
    for j in range(H):
        i, f, o, g = sig(pre[j]), sig(pre[H + j]), sig(pre[2 * H + j]), math.tanh(pre[3 * H + j])
        c_new.append(f * c[j] + i * g)
        h_new.append(o * math.tanh(c_new[-1]))
    return c_new, h_new


def test_lstm_scalar_oracle(rng):
    p = tiny_params(seed=3)
    p.tensors["lstm_b"] = rng.normal(size=32)
    x, h, c = rng.normal(size=2 * 8 + PHI_DIM), rng.normal(size=8), rng.normal(size=8)
    out = lstm_step(x, RecurrentState(c, np.tanh(h)), p)
    c_ref, h_ref = scalar_lstm(x.tolist(), np.tanh(h).tolist(), c.tolist(), p["lstm_w"].tolist(),
                               p["lstm_u"].tolist(), p["lstm_b"].tolist())
    np.testing.assert_allclose(out.c, c_ref, atol=1e-12)
    np.testing.assert_allclose(out.h, h_ref, atol=1e-12)


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=30, deadline=None)
def test_lstm_hidden_bounded(seed):
    rng = np.random.default_rng(seed)
    p = tiny_params(seed=seed % 5)
    p.tensors["lstm_w"] *= 20
    out = lstm_step(rng.normal(0, 5, 2 * 8 + PHI_DIM), RecurrentState(rng.normal(0, 5, 8), rng.uniform(-1, 1, 8)), p)
    assert np.all(np.abs(out.h) <= 1)


def test_init_states():
    z = init_states(np.zeros(8), zero_params())
    assert np.array_equal(z.c, np.zeros(8)) and np.array_equal(z.h, np.zeros(8))
    p = tiny_params()
    a, b = init_states(np.ones(8), p), init_states(np.ones(8), p)
    assert np.array_equal(a.h, b.h) and np.array_equal(a.c, b.c)
    assert len(a.c) + len(a.h) == 2 * TINY.hidden


def test_ief_zero_regressor_fixed_point(rng):
    p = zero_params()
    phi0 = rng.normal(size=PHI_DIM)
    assert np.array_equal(regress_ief(rng.normal(size=8), phi0, p, 3), phi0)
    with pytest.raises(ValidationError):
        regress_ief(np.zeros(8), phi0, p, 0)


def test_ief_single_update_unrolled(rng):
    p = tiny_params(seed=2)
    h, phi0 = rng.normal(size=8), rng.normal(size=PHI_DIM)
    inp = np.concatenate([h, (phi0 - p.mean_phi) / p.phi_scale])
    q1 = np.tanh(inp @ p["reg_w1"] + p["reg_b1"])
    q2 = np.tanh(q1 @ p["reg_w2"] + p["reg_b2"])
    manual = phi0 + (q2 @ p["reg_w3"] + p["reg_b3"]) * p.phi_scale
    np.testing.assert_allclose(regress_ief(h, phi0, p, 1), manual, atol=1e-14)
    two = regress_ief(h, phi0, p, 2)
    np.testing.assert_allclose(two, regress_ief(h, manual, p, 1), atol=1e-13)


def test_ief_finite_smoke(rng):
    for seed in range(100):
        p = tiny_params(seed=seed, gain=1.0)
        assert np.all(np.isfinite(regress_ief(rng.normal(size=8), rng.normal(size=PHI_DIM), p, 3)))


# recover_clip

def test_recover_clip_base_case(rng):
    p = tiny_params()
    img = rng.random((32, 32))
    one = recover_clip(img[None], p)
    assert len(one) == 1
    phis, _ = clip_forward(p, img[None, None])
    assert one[0] == RecoveryVector.from_array(phis[0, 0])
    feat = encode(img, p)
    s0 = init_states(feat.feature, p)
    _, z = attention(feat.low_level_map, s0.h, p)
    x = np.concatenate([feat.feature, z, np.zeros(PHI_DIM)])
    s1 = lstm_step(x, s0, p)
    np.testing.assert_allclose(regress_ief(s1.h, p.mean_phi, p, 3), phis[0, 0], atol=1e-12)


def test_zero_weights_emit_mean_phi(rng):
    mean = rng.normal(size=PHI_DIM)
    phis, _ = clip_forward(zero_params(mean), rng.random((1, 5, 32, 32)))
    for phi in phis[0]:
        np.testing.assert_array_equal(phi, mean)


def test_stationary_under_trivial_recurrence(rng):
    p = tiny_params()
    for name in ("lstm_w", "lstm_u", "lstm_b", "reg_w3", "reg_b3"):
        p.tensors[name][:] = 0.0
    img = rng.random((32, 32))
    out = recover_clip(np.repeat(img[None], 4, axis=0), p)
    assert all(rv == out[0] for rv in out)


def test_frame_order_matters(rng):
    p = tiny_params(gain=1.0)
    imgs = rng.random((3, 32, 32))
    a = recover_clip(imgs, p)
    b = recover_clip(imgs[::-1], p)
    assert not np.array_equal(a[-1].to_array(), b[-1].to_array())


# losses

def test_losses_vanish_at_ground_truth(jm, rng):
    phis = random_phis(rng, 1, 3)
    phis[..., BETA] = phis[0, 0, BETA]
    tg = targets_for(phis, jm)
    loss, terms, g = clip_loss_and_grad(phis, tg, jm)
    assert loss < 1e-20 and all(v < 1e-20 for v in terms.values())
    assert np.abs(g).max() < 1e-8


def test_frame_loss_masks_and_gate(jm, rng):
    phis = random_phis(rng, 1, 1)
    tg = targets_for(phis, jm)

    class GT:
        keypoints2d = tg.keypoints2d[0, 0] + 3.0
        visibility = np.zeros(len(tg.visibility[0, 0]))
        joints3d = tg.joints3d[0, 0] + 0.1
        theta = tg.theta[0, 0]
        beta = tg.beta[0, 0] + 0.2

    total, terms = frame_loss(phis[0, 0], GT, jm, delta=True)
    assert terms["proj"] == 0.0
    assert terms["smpl"] == pytest.approx(10 * 0.04)
    GT.visibility = np.ones_like(GT.visibility)
    total, terms = frame_loss(phis[0, 0], GT, jm, delta=False)
    assert total == terms["proj"] == pytest.approx(3.0 * 2 * len(GT.visibility))


def test_l3d_is_pelvis_centred_camera_frame(jm, rng):
    phis = random_phis(rng, 1, 1)
    tg = targets_for(phis, jm)
    # translation and scale act in the image only; the 3D term ignores them
    moved = phis.copy()
    moved[..., TRANS] += 7.0
    moved[..., SCALE] += 0.3
    _, terms, _ = clip_loss_and_grad(moved, tg, jm)
    assert terms["joint3d"] < 1e-20 and terms["proj"] > 0


def test_clip_shape_term(jm, rng):
    phis = random_phis(rng, 1, 2)
    phis[0, 1, BETA] = phis[0, 0, BETA]
    tg = targets_for(phis, jm)
    assert clip_loss_and_grad(phis, tg, jm)[1]["shape"] == 0.0
    moved = phis.copy()
    moved[0, 1, BETA.start] += 1.0
    assert clip_loss_and_grad(moved, tg, jm)[1]["shape"] == pytest.approx(1.0, abs=1e-12)
    single = phis[:, :1]
    tg1 = targets_for(single + 0.01, jm)
    loss, terms, _ = clip_loss_and_grad(single, tg1, jm, lam=2.5)
    assert terms["shape"] == 0.0
    assert loss == pytest.approx(2.5 * (terms["proj"] + terms["joint3d"] + terms["smpl"]))


def test_clip_loss_wrapper(jm, rng):
    phis = random_phis(rng, 1, 2)
    tg = targets_for(phis + 0.05, jm)

    class F:
        def __init__(self, t):
            self.keypoints2d, self.visibility = tg.keypoints2d[0, t], tg.visibility[0, t]
            self.joints3d, self.theta, self.beta = tg.joints3d[0, t], tg.theta[0, t], tg.beta[0, t]

    ref = clip_loss_and_grad(phis, tg, jm, lam=0.5)[0]
    assert clip_loss(list(phis[0]), [F(0), F(1)], jm, lam=0.5) == pytest.approx(ref, rel=1e-12)


def test_loss_gradient_wrt_phi(jm, rng):
    phis = random_phis(rng, 2, 2)
    tg = targets_for(random_phis(rng, 2, 2), jm, delta=np.array([1.0, 0.0]))
    _, _, g = clip_loss_and_grad(phis, tg, jm, lam=0.7)
    d = rng.normal(size=phis.shape)
    eps = 1e-6
    fp = clip_loss_and_grad(phis + eps * d, tg, jm, 0.7, need_grad=False)[0]
    fm = clip_loss_and_grad(phis - eps * d, tg, jm, 0.7, need_grad=False)[0]
    assert (g * d).sum() == pytest.approx((fp - fm) / (2 * eps), rel=1e-6)


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=20, deadline=None)
def test_loss_terms_nonnegative(seed):
    rng = np.random.default_rng(seed)
    jm = _JM()
    _, terms, _ = clip_loss_and_grad(random_phis(rng, 1, 2), targets_for(random_phis(rng, 1, 2), jm), jm,
                                     need_grad=False)
    assert all(v >= 0 for v in terms.values())


_CACHE = {}


def _JM():
    if "jm" not in _CACHE:
        from meshforge.body_model import procedural_template
        _CACHE["jm"] = JointModel(procedural_template("low"))
    return _CACHE["jm"]


# gradient check

def small_batch(jm, rng, B=2, T=2, params=None):
    """Random batch whose 2D targets sit 20-60 px from the predictions.

    Central differences are only valid away from the kink of the L1 term.
    """
    images = (rng.random((B, T, 32, 32)) > 0.5).astype(float)
    pred = clip_forward(params or tiny_params(), images)[0]
    tg = targets_for(pred + rng.normal(0, 0.3, pred.shape), jm, delta=np.array([1.0, 0.0])[:B])
    X = phi_joints(jm, pred)
    kp = np.exp(pred[..., SCALE])[..., None, None] * X[..., :2] + pred[..., None, TRANS]
    kp += rng.choice([-1.0, 1.0], kp.shape) * rng.uniform(20, 60, kp.shape)
    return images, ClipTargets(kp, tg.visibility, tg.joints3d, tg.theta, tg.beta, tg.delta)


def test_grad_check_random_batch(jm, rng):
    p = tiny_params()
    assert p.parameter_count <= 10000
    report = grad_check(p, small_batch(jm, rng), jm=jm, max_entries=12)
    assert report.passed, report.lines()
    assert report.max_error < 1e-4


def test_grad_check_freezes_l1_kink(jm, rng):
    # put every visible residual of frame (0, 0) a hair from zero, inside the difference step
    p = tiny_params()
    images, tg = small_batch(jm, rng, params=p)
    pred = clip_forward(p, images)[0]
    X = phi_joints(jm, pred)
    kp = tg.keypoints2d.copy()
    kp[0, 0] = (np.exp(pred[0, 0, SCALE]) * X[0, 0, :, :2] + pred[0, 0, TRANS]
                + rng.choice([-1e-7, 1e-7], kp[0, 0].shape))
    tg = ClipTargets(kp, tg.visibility, tg.joints3d, tg.theta, tg.beta, tg.delta)
    signs = _residual_signs(pred, tg, jm)
    assert batch_objective(p, images, tg, jm, l1_signs=signs)[0] == pytest.approx(batch_objective(p, images, tg, jm)[0],
                                                                                  rel=1e-14)
    frozen = grad_check(p, (images, tg), jm=jm, max_entries=12)
    plain = grad_check(p, (images, tg), jm=jm, max_entries=12, freeze_l1_signs=False)
    assert frozen.max_error < 1e-4, frozen.lines()
    assert plain.max_error > 10 * frozen.max_error


def test_grad_check_zero_loss_batch(jm, rng):
    # single-frame clips so the shape term is empty; targets are the model's own output
    p = tiny_params()
    images = rng.random((2, 1, 32, 32))
    phis, _ = clip_forward(p, images)
    loss, _, grads = batch_objective(p, images, targets_for(phis, jm), jm)
    assert loss < 1e-20
    assert max(np.abs(g).max() for g in grads.values()) < 1e-8


def test_grad_check_detects_corruption(jm, rng):
    p = tiny_params()

    def corrupted(params, images, targets, jm):
        grads = batch_objective(params, images, targets, jm)[2]
        grads["lstm_u"] = grads["lstm_u"] * 1.5
        return grads

    report = grad_check(p, small_batch(jm, rng), jm=jm, max_entries=12, gradient_fn=corrupted)
    assert report.errors["lstm_u"] > 1e-2 and not report.passed


# training

def toy_data(jm, rng, C=3):
    images = (rng.random((C, 2, 32, 32)) > 0.5).astype(float)
    return ToyDataset(images, targets_for(random_phis(rng, C, 2), jm))


def test_zero_learning_rate_keeps_params(jm, rng):
    p = tiny_params()
    out, curve = train_toy(toy_data(jm, rng), p, jm, TrainConfig(learning_rate=0.0, max_steps=5, batch_size=2))
    assert len(curve) == 5
    for k in p.tensors:
        assert np.array_equal(out[k], p[k])


def test_training_deterministic_and_logs(jm, rng, tmp_path):
    data = toy_data(jm, rng)
    cfg = TrainConfig(max_steps=6, batch_size=2, seed=4)
    _, a = train_toy(data, tiny_params(), jm, cfg, log_path=tmp_path / "log.txt")
    _, b = train_toy(data, tiny_params(), jm, cfg)
    assert np.array_equal(a, b)
    lines = (tmp_path / "log.txt").read_text().splitlines()
    assert lines[0].startswith("# lr=") and lines[1] == "step total proj joint3d smpl shape"
    assert len(lines) == 8 and float(lines[2].split()[1]) == pytest.approx(a[0], rel=1e-8)


def test_training_reduces_loss(jm, rng):
    data = toy_data(jm, rng, C=2)
    _, curve = train_toy(data, tiny_params(), jm, TrainConfig(max_steps=60, batch_size=2, learning_rate=3e-3))
    assert curve[-1] < curve[0]


def test_divergence_reports_step(jm, rng):
    data = toy_data(jm, rng)
    bad = ToyDataset(data.images, ClipTargets(np.where(np.arange(3)[:, None, None, None] == 1, np.nan,
                                                       data.targets.keypoints2d),
                                              data.targets.visibility, data.targets.joints3d, data.targets.theta,
                                              data.targets.beta, data.targets.delta))
    with pytest.raises(TrainingError) as info:
        train_toy(bad, tiny_params(), jm, TrainConfig(max_steps=10, batch_size=1, seed=0))
    assert info.value.step is not None and str(info.value.step) in str(info.value)


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(learning_rate=-1)
    with pytest.raises(ValidationError):
        TrainConfig(clip_length=0)
    with pytest.raises(ValidationError):
        TrainConfig(adam_beta1=1.0)


# serialization and toy data

def test_params_round_trip(tmp_path):
    p = tiny_params(seed=9)
    save_params(p, tmp_path / "m.bin")
    q = load_params(tmp_path / "m.bin")
    assert q.config == p.config
    assert all(np.array_equal(q[k], p[k]) for k in p.tensors)
    assert np.array_equal(q.mean_phi, p.mean_phi) and np.array_equal(q.phi_scale, p.phi_scale)
    raw = (tmp_path / "m.bin").read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"XX" + raw[2:])
    with pytest.raises(ValidationError, match="magic"):
        load_params(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:len(raw) // 2])
    with pytest.raises(ValidationError):
        load_params(tmp_path / "short.bin")


def test_params_validation():
    p = tiny_params()
    t = dict(p.tensors)
    t["lstm_b"] = np.zeros(3)
    with pytest.raises(DimensionError):
        ModelParams(TINY, t, p.mean_phi)
    del t["lstm_b"]
    with pytest.raises(ValidationError):
        ModelParams(TINY, t, p.mean_phi)


def test_recovery_round_trip(tmp_path, rng):
    vecs = [RecoveryVector.from_array(rng.normal(size=PHI_DIM)) for _ in range(3)]
    save_recovery(vecs, tmp_path / "r.jsonl")
    back = load_recovery(tmp_path / "r.jsonl")
    for a, b in zip(vecs, back):
        np.testing.assert_allclose(a.to_array(), b.to_array(), rtol=1e-15, atol=1e-15)


def test_toy_sequences_and_mean_phi(template):
    seqs = make_toy_sequences(template, n_clips=2, clip_length=3, seed=1)
    data = toy_dataset(seqs, template, image_size=32, clip_length=3)
    assert data.images.shape == (2, 3, 32, 32)
    assert set(np.unique(data.images)) <= {0.0, 1.0} and data.images.sum() > 0
    phi = mean_phi_from_sequences(seqs)
    np.testing.assert_allclose(phi[TRANS], [32, 32], atol=0.5)
    f = seqs[0]["N"].frames[0]
    assert math.exp(phi[SCALE]) == pytest.approx(f.camera.focal_px / 24.0, rel=0.01)
