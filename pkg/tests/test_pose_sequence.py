import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from meshforge.body_model import BodyPose, BodyShape
from meshforge.errors import DimensionError, TemplateParseError, ValidationError
from meshforge.pose_sequence import (InterpConfig, PoseSequence, contrast_sequence, distance_matrix,
                                     frames_for_distance, interpolate, load_sequence, pose_distance,
                                     prepend_leadin, save_sequence, select_contrast_pair, t_pose)

small_theta = arrays(np.float64, 72, elements=st.floats(-1.0, 1.0))


def rand_seq(rng, n, sigma=0.5):
    return PoseSequence.from_arrays(rng.normal(0, sigma, (n, 72)))


def brute_argmax(D):
    best = (0, 0)
    for i in range(D.shape[0]):
        for j in range(D.shape[1]):
            if D[i, j] > D[best]:
                best = (i, j)
    return best[0], best[1], D[best]


# distances

def test_pose_distance_examples(rng):
    a = BodyPose(rng.normal(0, 0.3, 72))
    assert pose_distance(a, a) == 0
    theta = a.theta.copy()
    theta[10 * 3] += 0.3
    assert pose_distance(a, BodyPose(theta)) == pytest.approx(0.3, abs=1e-12)
    b = BodyPose(rng.normal(0, 0.3, 72))
    assert pose_distance(a, b) == pytest.approx(np.sqrt(((a.theta - b.theta) ** 2).sum()), abs=1e-12)


def test_pose_distance_mismatch():
    with pytest.raises(DimensionError):
        pose_distance(BodyPose.zeros(24), BodyPose.zeros(3))


def test_pose_distance_excluding_root(rng):
    a, b = BodyPose(rng.normal(0, 0.3, 72)), BodyPose(rng.normal(0, 0.3, 72))
    assert pose_distance(a, b, include_root=False) == pytest.approx(np.linalg.norm(a.theta[3:] - b.theta[3:]))


@settings(max_examples=100, deadline=None)
@given(small_theta, small_theta, small_theta)
def test_pose_distance_is_metric(x, y, z):
    a, b, c = BodyPose(x), BodyPose(y), BodyPose(z)
    assert pose_distance(a, b) >= 0
    assert pose_distance(a, b) == pose_distance(b, a)
    assert pose_distance(a, c) <= pose_distance(a, b) + pose_distance(b, c) + 1e-12


def test_distance_matrix_properties(rng):
    X, Y = rand_seq(rng, 7), rand_seq(rng, 5)
    D = distance_matrix(X, X)
    assert np.all(np.diag(D) == 0)
    np.testing.assert_array_equal(distance_matrix(X, Y), distance_matrix(Y, X).T)
    for i in range(7):
        for j in range(5):
            assert distance_matrix(X, Y)[i, j] == pytest.approx(pose_distance(X[i][0], Y[j][0]), abs=1e-12)


def test_distance_matrix_hand_2x2():
    def pose(v):
        t = np.zeros(72)
        t[3] = v
        return BodyPose(t)
    X = PoseSequence(((pose(0.0), BodyShape()), (pose(0.3), BodyShape())))
    Y = PoseSequence(((pose(0.1), BodyShape()), (pose(0.5), BodyShape())))
    np.testing.assert_allclose(distance_matrix(X, Y), [[0.1, 0.5], [0.2, 0.2]], atol=1e-15)


# contrast pair

def test_select_contrast_pair_examples():
    assert select_contrast_pair([[0, 1], [2, 0]]) == (1, 0, 2)
    assert select_contrast_pair(np.full((3, 4), 0.7)) == (0, 0, 0.7)
    with pytest.raises(ValidationError):
        select_contrast_pair(np.zeros((0, 3)))


def test_select_contrast_pair_matches_scan(rng):
    for shape in [(50, 40), (1, 9), (13, 1)]:
        D = rng.uniform(size=shape)
        assert select_contrast_pair(D) == brute_argmax(D)
    # integer-valued matrices produce ties
    for _ in range(20):
        D = rng.integers(0, 4, size=(6, 5)).astype(float)
        assert select_contrast_pair(D) == brute_argmax(D)


def test_contrast_pair_on_self_distance(rng):
    X = rand_seq(rng, 100)
    D = distance_matrix(X, X)
    i, j, d = select_contrast_pair(D)
    assert d == D.max() and (i, j, d) == brute_argmax(D)


# frame counts

def test_frames_for_distance():
    assert frames_for_distance(0.0) == 10
    assert frames_for_distance(1.0) == 20
    assert frames_for_distance(100.0) == 300
    assert frames_for_distance(1.0, InterpConfig(radians_per_frame=0.01)) == 100
    with pytest.raises(ValidationError):
        frames_for_distance(-1.0)


# interpolation

def test_interpolate_endpoints_and_midpoint(rng):
    A, B = BodyPose(rng.normal(0, 0.5, 72)), BodyPose(rng.normal(0, 0.5, 72))
    seq = interpolate(A, B, 2)
    assert len(seq) == 2 and seq[0][0] == A and seq[1][0] == B
    mid = interpolate(A, B, 3)[1][0]
    assert np.array_equal(mid.theta, (A.theta + B.theta) / 2)


def test_interpolate_monotone_distance(rng):
    A, B = BodyPose(rng.normal(0, 0.5, 72)), BodyPose(rng.normal(0, 0.5, 72))
    seq = interpolate(A, B, 25)
    d = [pose_distance(p, A) for p, _ in seq.frames]
    assert np.all(np.diff(d) >= -1e-12)
    for i, (p, _) in enumerate(seq.frames):
        t = i / 24
        np.testing.assert_allclose(p.theta, A.theta + t * (B.theta - A.theta), atol=1e-15)


def test_interpolate_holds_shape(rng):
    shape = BodyShape(rng.normal(size=10))
    seq = interpolate(BodyPose.zeros(), BodyPose(rng.normal(0, 0.5, 72)), 5, shape=shape)
    assert all(s == shape for _, s in seq.frames)


def test_interpolate_errors():
    with pytest.raises(ValidationError):
        interpolate(BodyPose.zeros(), BodyPose.zeros(), 1)
    with pytest.raises(DimensionError):
        interpolate(BodyPose.zeros(24), BodyPose.zeros(3), 4)


# lead-in

def test_leadin_lengths(rng):
    seq = rand_seq(rng, 6)
    assert prepend_leadin(seq, t_pose(), 0) is seq
    out = prepend_leadin(seq, t_pose(), 5)
    assert len(out) == len(seq) + 4
    assert out[0][0] == t_pose() and out[4][0] == seq[0][0]
    for k in range(1, len(seq)):
        assert out[4 + k][0] == seq[k][0]


def test_leadin_continuity(rng):
    seq = interpolate(BodyPose(rng.normal(0, 0.3, 72)), BodyPose(rng.normal(0, 0.3, 72)), 8)
    out = prepend_leadin(seq, t_pose(), 12)
    steps = [pose_distance(out[i][0], out[i + 1][0]) for i in range(len(out) - 1)]
    within = max(steps[:11])
    splice = steps[11]
    assert splice <= 1.5 * max(within, max(steps[11:]))


def test_contrast_sequence(rng):
    X, Y = rand_seq(rng, 12), rand_seq(rng, 9)
    i, j, d = select_contrast_pair(distance_matrix(X, Y))
    novel = contrast_sequence(X, Y)
    assert len(novel) == frames_for_distance(d)
    assert novel[0][0] == X[i][0] and novel[len(novel) - 1][0] == Y[j][0]


# files

def test_sequence_round_trip(tmp_path, rng):
    seq = PoseSequence.from_arrays(rng.normal(0, 0.5, (5, 72)), rng.normal(size=(5, 10)), fps=24)
    save_sequence(seq, tmp_path / "p.seq")
    back = load_sequence(tmp_path / "p.seq")
    assert back == seq and back.fps == 24


def test_sequence_bad_record(tmp_path):
    path = tmp_path / "bad.seq"
    path.write_text('{"fps": 30, "joint_count": 24}\n{"theta": [1, 2}\n')
    with pytest.raises(TemplateParseError, match=":2:"):
        load_sequence(path)


def test_sequence_validation():
    with pytest.raises(ValidationError):
        PoseSequence(())
    with pytest.raises(ValidationError):
        PoseSequence(((BodyPose.zeros(), BodyShape()),), fps=0)
    with pytest.raises(DimensionError):
        PoseSequence(((BodyPose.zeros(24), BodyShape()), (BodyPose.zeros(3), BodyShape())))
