"""The ten acceptance criteria, one test each, at their stated tolerances.

Each test prints a single ``AC<n> PASS|FAIL`` line (visible with ``-s`` or in
the terminal summary) before asserting.
"""
import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from meshforge import cli
from meshforge import recover_net as rn
from meshforge.body_model import (METRIC_JOINT_MAP, BodyPose, BodyShape, matrix_to_axis_angle,
                                  procedural_template, rodrigues, skin)
from meshforge.cloth import (CapsuleSet, GarmentPattern, Panel, Pin, SimConfig, build_garment, drape,
                             explicit_euler_step, force_jacobians, internal_forces, max_speed, save_pattern,
                             skirt_pattern, step)
from meshforge.errors import MeshforgeError
from meshforge.metrics import mpvpe, mrsv, mrvpv, pa_mpjpe, procrustes_align
from meshforge.pose_sequence import (PoseSequence, distance_matrix, interpolate, save_sequence,
                                     select_contrast_pair)
from meshforge.scene_gen import SceneConfig, generate_sequence, import_dataset, transfer

RESULTS = {}


def report(request, n, ok, detail):
    line = f"AC{n:<2d} {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    with request.config.pluginmanager.getplugin("capturemanager").global_and_fixture_disabled():
        print("\n" + line, flush=True)
    assert ok, line


@pytest.fixture(scope="module")
def template():
    return procedural_template("low")


# 1 -------------------------------------------------------------------------

def test_ac1_procrustes_oracle(request):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    rots = Rotation.random(10000, random_state=rng).as_matrix()
    worst_gap = np.inf
    exact_err = 0.0
    for _ in range(200):
        X = rng.normal(size=(14, 3))
        s, R, t = rng.uniform(0.5, 2), Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3)
        Y = s * X @ R.T + t + rng.normal(0, 0.1, X.shape)
        ssd = float(((procrustes_align(X, Y)[3] - Y) ** 2).sum())
        # closed-form optimal scale (clamped at 0) and translation per sampled rotation
        Xc, Yc = X - X.mean(0), Y - Y.mean(0)
        XR = np.einsum("rab,pb->rpa", rots, Xc)
        sc = np.maximum(0.0, np.einsum("rpa,pa->r", XR, Yc) / (Xc * Xc).sum())
        cand = ((sc[:, None, None] * XR - Yc) ** 2).sum(axis=(1, 2))
        worst_gap = min(worst_gap, float(cand.min() - ssd))
        exact = s * X @ R.T + t
        exact_err = max(exact_err, pa_mpjpe(X[None], exact[None]))
    elapsed = time.perf_counter() - t0
    ok = worst_gap >= -1e-9 and exact_err < 1e-9 and elapsed < 120
    report(request, 1, ok, f"min(sampled SSD - closed form) = {worst_gap:.3e}, exact-similarity error "
                           f"{exact_err:.1e}, {elapsed:.1f}s")


# 2 -------------------------------------------------------------------------

def test_ac2_metric_micro_cases(request):
    rng = np.random.default_rng(102)
    g = rng.normal(size=(3, 20, 3))
    v = np.array([[[0.0, 0, 0]], [[1.0, 1.0, 0]]])
    b = np.zeros((2, 10))
    b[1, 0] = 1.0
    p = g + rng.normal(size=g.shape)
    cases = [
        (mpvpe(g + [1, 0, 0], g), 1.0),
        (mpvpe(p, g, normalized=False), 20 * mpvpe(p, g)),
        (mrvpv(v, 1), 1.0),
        (mrvpv(v, 2), math.sqrt(2) / 2),
        (mrsv(b, 1), 0.5),
        (mrsv(b, 2), 0.5),
    ]
    worst = max(abs(a - e) for a, e in cases)
    static_ok = True
    for _ in range(50):
        M = int(rng.integers(2, 8))
        vs = np.repeat(rng.normal(size=(1, 30, 3)), M, axis=0)
        bs = np.repeat(rng.normal(size=(1, 10)), M, axis=0)
        static_ok &= all(mrvpv(vs, q) == 0.0 and mrsv(bs, q) == 0.0 for q in (1, 2))
    report(request, 2, worst <= 1e-12 and static_ok,
           f"max micro-case deviation {worst:.1e}; static sequences exactly 0: {static_ok}")


# 3 -------------------------------------------------------------------------

def test_ac3_cloth_forces(request):
    rng = np.random.default_rng(103)
    base = build_garment(GarmentPattern((Panel(4, 5, 0.1),)))
    f_err = j_err = sum_err = 0.0
    for _ in range(50):
        c = replace(base, positions=base.positions + rng.normal(0, 0.02, base.positions.shape),
                    velocities=np.zeros_like(base.positions))
        f, _ = internal_forces(c)
        fd = np.zeros_like(f)
        for i in range(c.particle_count):
            for a in range(3):
                xp, xm = c.positions.copy(), c.positions.copy()
                xp[i, a] += 1e-6
                xm[i, a] -= 1e-6
                fd[i, a] = -(internal_forces(replace(c, positions=xp))[1]
                             - internal_forces(replace(c, positions=xm))[1]) / 2e-6
        f_err = max(f_err, np.linalg.norm(f - fd) / np.linalg.norm(f))
        K = force_jacobians(c).dF_dx()
        d = rng.normal(size=f.shape)
        dfd = (internal_forces(replace(c, positions=c.positions + 1e-6 * d))[0]
               - internal_forces(replace(c, positions=c.positions - 1e-6 * d))[0]).ravel() / 2e-6
        j_err = max(j_err, np.linalg.norm(K @ d.ravel() - dfd) / np.linalg.norm(dfd))
        moving = replace(c, velocities=rng.normal(size=f.shape))
        sum_err = max(sum_err, np.abs(internal_forces(moving)[0].sum(axis=0)).max())
    ok = f_err < 1e-5 and j_err < 1e-4 and sum_err <= 1e-9
    report(request, 3, ok, f"force FD rel {f_err:.1e}, Jacobian directional rel {j_err:.1e}, "
                           f"net force {sum_err:.1e}")


# 4 -------------------------------------------------------------------------

def _sheet(n, pins, z=0.0, spacing=0.05):
    panel = Panel(n, n, spacing, placement={"kind": "plane", "origin": [0, 0, z]})
    return build_garment(GarmentPattern((panel,), (), tuple(Pin(0, r % n, c % n) for r, c in pins)))


CORNERS = ((0, 0), (0, -1), (-1, 0), (-1, -1))


def test_ac4_cloth_stability(request):
    t0 = time.perf_counter()
    draped, converged = drape(_sheet(20, CORNERS), None, SimConfig(), max_seconds=10.0)
    speed = max_speed(draped)

    cfg30 = SimConfig(timestep=1 / 30)
    implicit = explicit = _sheet(20, CORNERS)
    diverged_at = None
    with np.errstate(all="ignore"):
        for i in range(300):
            implicit = step(implicit, None, cfg30)
            if diverged_at is None:
                try:
                    explicit = explicit_euler_step(explicit, cfg30)
                    if not np.all(np.isfinite(explicit.positions)) or np.abs(explicit.positions).max() > 1e3:
                        diverged_at = i
                except MeshforgeError:
                    diverged_at = i
    stable = bool(np.all(np.isfinite(implicit.positions)))

    cap = CapsuleSet([[-0.6, 0, 0]], [[0.6, 0, 0]], [0.15])
    cfg = SimConfig(friction=0.5)
    cloth = _sheet(20, (), z=0.3)
    cloth = replace(cloth, positions=cloth.positions - [0.475, 0.475, 0.0])
    worst = np.inf
    for _ in range(300):
        cloth = step(cloth, cap, cfg)
        worst = min(worst, float(cap.signed_distance(cloth.positions).min()))
    no_pen = worst >= -(cfg.collision_epsilon + 1e-9)
    elapsed = time.perf_counter() - t0
    ok = converged and speed < 1e-4 and stable and diverged_at is not None and no_pen and elapsed < 60
    report(request, 4, ok, f"drape speed {speed:.1e} m/s at t={draped.time:.2f}s; h=1/30 implicit stable "
                           f"{stable}, explicit diverged at step {diverged_at}; min capsule distance "
                           f"{worst:.2e} m; {elapsed:.1f}s")


# 5 -------------------------------------------------------------------------

def test_ac5_body_model(request, template):
    rng = np.random.default_rng(105)
    fixed = np.array_equal(skin(template, BodyShape(), BodyPose.zeros()).vertices, template.rest_vertices)
    equi = 0.0
    for _ in range(20):
        theta = rng.normal(0, 0.5, 72)
        shape = BodyShape(rng.normal(size=10))
        zero_root = BodyPose(np.concatenate([np.zeros(3), theta[3:]]))
        a = skin(template, shape, BodyPose(theta)).vertices
        b = skin(template, shape, zero_root).vertices @ rodrigues(theta[:3]).T
        equi = max(equi, float(np.abs(a - b).max()))
    ortho = 0.0
    for r in rng.normal(0, 2.0, (1000, 3)):
        R = rodrigues(r)
        ortho = max(ortho, float(np.abs(R.T @ R - np.eye(3)).max()), abs(np.linalg.det(R) - 1))
    ok = fixed and equi < 1e-9 and ortho < 1e-10
    report(request, 5, ok, f"rest fixed point bit-exact {fixed}; root equivariance {equi:.1e}; "
                           f"rodrigues orthonormality {ortho:.1e}")


# 6 -------------------------------------------------------------------------

def test_ac6_interpolation(request):
    rng = np.random.default_rng(106)
    ends_ok = mid_ok = True
    for _ in range(50):
        A, B = BodyPose(rng.normal(0, 0.3, 72)), BodyPose(rng.normal(0, 0.3, 72))
        k = int(rng.integers(2, 20))
        seq = interpolate(A, B, k)
        ends_ok &= np.array_equal(seq.frames[0][0].theta, A.theta) and np.array_equal(seq.frames[-1][0].theta,
                                                                                      B.theta)
        mid_ok &= np.array_equal(interpolate(A, B, 3).frames[1][0].theta, (A.theta + B.theta) / 2)
    scan_ok = True
    matrices = [rng.random((int(rng.integers(1, 12)), int(rng.integers(1, 12)))) for _ in range(40)]
    matrices += [np.round(rng.random((6, 7)) * 3) for _ in range(20)]  # many ties
    X = PoseSequence.from_arrays(rng.normal(size=(9, 72)))
    Y = PoseSequence.from_arrays(rng.normal(size=(7, 72)))
    matrices.append(distance_matrix(X, Y))
    for D in matrices:
        best = None
        for i in range(D.shape[0]):
            for j in range(D.shape[1]):
                if best is None or D[i, j] > best[2]:
                    best = (i, j, D[i, j])
        scan_ok &= select_contrast_pair(D) == best
    ok = ends_ok and mid_ok and scan_ok
    report(request, 6, ok, f"endpoints bit-exact {ends_ok}; argmax matches scan on {len(matrices)} matrices "
                           f"{scan_ok}; midpoint exact {mid_ok}")


# 7 -------------------------------------------------------------------------

GRAD_MODEL = rn.ModelConfig(channels=4, feature_dim=8, attention_dim=8, hidden=8, init_hidden=(8, 8),
                            regressor_hidden=(16, 16))


def test_ac7_gradient_contract(request, template):
    t0 = time.perf_counter()
    jm = rn.JointModel(template)
    worst, count = 0.0, None
    batches = []
    for seed in range(5, 10):
        seqs = rn.make_toy_sequences(template, n_clips=2, clip_length=3, seed=seed)
        data = rn.toy_dataset(seqs, template, image_size=GRAD_MODEL.image_size, clip_length=3,
                              deltas=[1.0, 0.0])
        params = rn.init_params(GRAD_MODEL, rn.mean_phi_from_sequences(seqs), seed=seed, regressor_gain=0.3)
        count = params.parameter_count
        rep = rn.grad_check(params, (data.images, data.targets), tolerance=1e-4, jm=jm)
        worst = max(worst, rep.max_error)
        batches.append((params, data))

    def corrupted(params, images, targets, jm):
        grads = rn.batch_objective(params, images, targets, jm)[2]
        grads["att_wa"] = grads["att_wa"] + 0.05 * np.abs(grads["att_wa"]).max() * np.sign(grads["att_wa"])
        return grads

    params, data = batches[0]
    neg = rn.grad_check(params, (data.images, data.targets), jm=jm, max_entries=16, gradient_fn=corrupted)
    elapsed = time.perf_counter() - t0
    ok = count <= 10000 and worst < 1e-4 and neg.errors["att_wa"] > 1e-2 and not neg.passed and elapsed < 300
    report(request, 7, ok, f"{count} parameters, max relative error over 5 batches {worst:.2e}; corrupted "
                           f"gradient error {neg.errors['att_wa']:.2e}; {elapsed:.0f}s")


# 8 -------------------------------------------------------------------------

def test_ac8_toy_convergence(request, template):
    t0 = time.perf_counter()
    seqs = rn.make_toy_sequences(template, n_clips=8, clip_length=4, seed=0)
    data = rn.toy_dataset(seqs, template, image_size=64, clip_length=4)
    params = rn.init_params(rn.ModelConfig(), rn.mean_phi_from_sequences(seqs), seed=0)
    jm = rn.JointModel(template)
    trained, curve = rn.train_toy(data, params, jm, rn.TrainConfig(max_steps=5000, seed=0))
    ratio = curve[-1] / curve[0]
    pred = rn.recovered_joints(trained, data.images, jm)
    m = list(METRIC_JOINT_MAP)
    pa = pa_mpjpe(pred[:, :, m].reshape(-1, 14, 3), data.targets.joints3d[:, :, m].reshape(-1, 14, 3))
    elapsed = time.perf_counter() - t0
    ok = ratio <= 0.05 and pa < 0.030 and elapsed < 1800
    report(request, 8, ok, f"final/initial loss {ratio:.2%} ({curve[0]:.4g} -> {curve[-1]:.4g}); "
                           f"training-set PA-MPJPE {pa * 1000:.1f} mm; {elapsed:.0f}s")


# 9 -------------------------------------------------------------------------

def test_ac9_pipeline_determinism(request, template, tmp_path):
    rng = np.random.default_rng(109)
    pose_files = []
    for i in range(2):
        th = rng.normal(0, 0.2, (5, 72))
        th[:, :3] = [0.0, 0.0, rng.uniform(-1, 1)]
        path = tmp_path / f"p{i}.seq"
        save_sequence(PoseSequence.from_arrays(th, np.repeat(rng.normal(0, 0.5, (1, 10)), 5, axis=0)), path)
        pose_files.append(str(path))
    garment = tmp_path / "skirt.json"
    save_pattern(skirt_pattern(), garment)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        rc = cli.dispatch(["generate", "--poses", *pose_files, "--garment", str(garment), "--seed", "9",
                           "--jobs", "1", "--out", str(out)])
        assert rc == 0
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    identical = bool(files) and all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    worst_proj = worst_pelvis = 0.0
    n = 0
    for views in import_dataset(outs[0]).values():
        for ann in views.values():
            for f in ann.frames:
                worst_proj = max(worst_proj, f.check_projection(1e-6))
                worst_pelvis = max(worst_pelvis, float(np.abs(f.keypoints2d[0] - 125.0).max()))
                n += 1
    ok = identical and worst_proj <= 1e-6 and worst_pelvis <= 0.5
    report(request, 9, ok, f"{len(files)} files byte-identical {identical}; {n} frames, max projection "
                           f"deviation {worst_proj:.1e} px, max pelvis offset {worst_pelvis:.1e} px")


# 10 ------------------------------------------------------------------------

def test_ac10_transfer_round_trip(request, template, tmp_path):
    rng = np.random.default_rng(110)
    th = rng.normal(0, 0.3, (6, 72))
    th[:, :3] = [0.0, 0.0, 0.4]
    beta = np.repeat(rng.normal(0, 0.7, (1, 10)), 6, axis=0)
    cfg = SceneConfig(viewpoints=("S",))
    src = generate_sequence(PoseSequence.from_arrays(th, beta), template, cfg=cfg)["S"]
    vectors = []
    for f in src.frames:
        depth = f.joints3d[0, 2]
        vectors.append(rn.RecoveryVector(f.theta, f.beta, matrix_to_axis_angle(f.camera.rotation),
                                         f.keypoints2d[0], f.camera.focal_px / depth))
    rn.save_recovery(vectors, tmp_path / "gt.jsonl")
    out = transfer(rn.load_recovery(tmp_path / "gt.jsonl"), template, cfg=cfg)["S"]
    a = np.stack([f.joints3d for f in src.frames])
    b = np.stack([f.joints3d for f in out.frames])
    pa = pa_mpjpe(b, a)
    report(request, 10, pa < 1e-6, f"transferred joints PA-MPJPE {pa:.2e} m")


def test_zz_summary(request):
    lines = [RESULTS.get(n, f"AC{n:<2d} FAIL  not run") for n in range(1, 11)]
    with request.config.pluginmanager.getplugin("capturemanager").global_and_fixture_disabled():
        print("\nacceptance summary\n" + "\n".join(lines), flush=True)
    assert all(" PASS " in l for l in lines)
