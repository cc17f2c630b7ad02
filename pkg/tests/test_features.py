import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motion_grader.dataset import Label, MovementSample, SkeletonDefinition, default_skeleton
from motion_grader.errors import EmptyInput, PadTooShort
from motion_grader.features import (
    FeatureMatrix,
    FeatureMode,
    angles_feature,
    build_dataset_tensor,
    dump_features,
    pad_to_length,
    positions_feature,
)
from motion_grader.kinematics import convert_sequence


def _sample(frames, joints=22, seed=0, subject=1, label=Label.CORRECT):
    rng = np.random.default_rng(seed)
    return MovementSample(subject, 1, 1, label, rng.uniform(-90, 90, (frames, joints, 3)),
                          rng.normal(size=(frames, joints, 3)))


def test_positions_feature_shape():
    assert positions_feature(np.zeros((1, 22, 3))).data.shape == (1, 66)
    assert positions_feature(np.zeros((7, 22, 3))).data.shape == (7, 66)


def test_positions_feature_order():
    m = positions_feature([[[1, 2, 3], [4, 5, 6]]])
    np.testing.assert_array_equal(m.data, [[1, 2, 3, 4, 5, 6]])


def test_positions_feature_empty():
    with pytest.raises(EmptyInput):
        positions_feature(np.zeros((0, 22, 3)))


def test_angles_feature():
    s = _sample(1)
    m = angles_feature(s)
    assert m.data.shape == (1, 66)
    np.testing.assert_array_equal(m.data[0, 3:6], s.angles[0, 1])
    assert m.label == 1
    zero = MovementSample(1, 1, 1, Label.INCORRECT, np.zeros((1, 22, 3)), np.zeros((1, 22, 3)))
    assert not angles_feature(zero).data.any()
    assert angles_feature(zero).label == 0
    np.testing.assert_array_equal(angles_feature(s).data, angles_feature(s).data)


def test_pad():
    m = FeatureMatrix(np.ones((3, 66)), 1)
    p = pad_to_length(m, 5)
    assert p.data.shape == (5, 66)
    assert not p.data[3:].any()
    np.testing.assert_array_equal(p.data[:3], m.data)
    assert p.label == 1
    np.testing.assert_array_equal(pad_to_length(m, 3).data, m.data)
    with pytest.raises(PadTooShort):
        pad_to_length(m, 2)


def test_build_lengths_and_shape():
    skel = default_skeleton()
    samples = [_sample(3, seed=1), _sample(5, seed=2), _sample(4, seed=3)]
    for mode in FeatureMode:
        b = build_dataset_tensor(samples, mode, skel)
        assert b.data.shape == (3, 5, 66)
        assert b.lengths.tolist() == [3, 5, 4]
    single = build_dataset_tensor(samples[:1], "angles")
    assert single.data.shape == (1, 3, 66)


def test_build_positions_uses_kinematics():
    skel = default_skeleton()
    s = _sample(3)
    b = build_dataset_tensor([s], "positions", skel)
    np.testing.assert_array_equal(b.data[0], convert_sequence(s, skel).reshape(3, -1))


def test_build_empty():
    with pytest.raises(EmptyInput):
        build_dataset_tensor([], "angles")


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 12), min_size=1, max_size=6), st.integers(0, 1000))
def test_padding_and_label_properties(lengths, seed):
    skel = SkeletonDefinition.from_parents(["a", "b"], [-1, 0])
    samples = [_sample(t, joints=2, seed=seed + i, subject=1 + i % 10,
                       label=Label(i % 2)) for i, t in enumerate(lengths)]
    pos = build_dataset_tensor(samples, "positions", skel)
    ang = build_dataset_tensor(samples, "angles", skel)
    for b in (pos, ang):
        assert b.data.shape == (len(lengths), max(lengths), 6)
        for i, t in enumerate(lengths):
            assert np.abs(b.data[i, t:]).sum() == 0.0
    np.testing.assert_array_equal(pos.labels, ang.labels)
    assert pos.meta == ang.meta


def test_normalize_keeps_padding_zero():
    samples = [_sample(3, seed=1), _sample(6, seed=2)]
    b = build_dataset_tensor(samples, "angles", normalize=True)
    assert not b.data[0, 3:].any()
    rows = np.concatenate([b.data[0, :3], b.data[1]])
    np.testing.assert_allclose(rows.mean(axis=0), 0, atol=1e-12)


def test_dump(tmp_path):
    b = build_dataset_tensor([_sample(2), _sample(3, seed=4, label=Label.INCORRECT)], "angles")
    paths = dump_features(b, tmp_path)
    assert [p.name for p in paths] == ["m01_s01_e01_features.txt", "m01_s01_e01_inc_features.txt"]
    back = np.loadtxt(paths[1], delimiter=",")
    np.testing.assert_array_equal(back, b.data[1])
