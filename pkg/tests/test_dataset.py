import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import fmt_rows, write_recording_tree
from motion_grader.dataset import (
    Label,
    MovementSample,
    NamingConfig,
    default_skeleton,
    load_skeleton_definition,
    parse_movement_file,
    scan_dataset,
    serialize_sample,
)
from motion_grader.errors import (
    DuplicateSample,
    EmptyRecording,
    InvalidHierarchy,
    IoError,
    LengthMismatch,
    ParseError,
)

META = dict(subject=1, movement=1, episode=1, label=Label.CORRECT)


def test_parse_two_frames():
    rng = np.random.default_rng(0)
    ang = rng.normal(size=(2, 66))
    pos = rng.normal(size=(2, 66))
    s = parse_movement_file(fmt_rows(ang), fmt_rows(pos), **META)
    assert s.n_frames == 2
    assert all(len(f) == 22 for f in s.frames)
    # (Y, X, Z) of joint 1 in frame 0 are columns 3..5
    np.testing.assert_array_equal(s.frames[0].joint(1).euler_deg, ang[0, 3:6])
    np.testing.assert_array_equal(s.positions[1].ravel(), pos[1])


def test_parse_mixed_separators_and_scientific():
    row = ",".join(["1e-3"] * 33) + "\t" + " ".join(["2.5"] * 33)
    s = parse_movement_file(row + "\n", row + "\n", **META)
    assert s.angles[0, 0, 0] == 1e-3
    assert s.angles[0, 21, 2] == 2.5


def test_parse_wrong_column_count():
    rows = fmt_rows(np.zeros((1, 65)))
    with pytest.raises(ParseError) as err:
        parse_movement_file(rows, rows, **META)
    assert err.value.expected == 66
    assert err.value.found == 65
    assert err.value.line == 1


def test_parse_non_numeric():
    row = " ".join(["0"] * 65 + ["abc"])
    with pytest.raises(ParseError, match="abc"):
        parse_movement_file(row, row, **META)


def test_parse_empty():
    with pytest.raises(EmptyRecording):
        parse_movement_file("", "", **META)
    with pytest.raises(EmptyRecording):
        parse_movement_file("\n\n", "\n", **META)


def test_parse_length_mismatch():
    with pytest.raises(LengthMismatch):
        parse_movement_file(fmt_rows(np.zeros((2, 66))), fmt_rows(np.zeros((3, 66))), **META)


def test_combined_layout():
    rng = np.random.default_rng(1)
    rows = rng.normal(size=(3, 132))
    s = parse_movement_file(fmt_rows(rows), None, **META)
    np.testing.assert_array_equal(s.angles.reshape(3, -1), rows[:, :66])
    np.testing.assert_array_equal(s.positions.reshape(3, -1), rows[:, 66:])


def test_sample_is_immutable():
    s = parse_movement_file(fmt_rows(np.zeros((1, 66))), fmt_rows(np.zeros((1, 66))), **META)
    with pytest.raises(ValueError):
        s.angles[0, 0, 0] = 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_round_trip(frames, joints, seed):
    rng = np.random.default_rng(seed)
    scale = 10.0 ** rng.integers(-8, 8)
    ang = rng.normal(size=(frames, joints, 3)) * scale
    pos = rng.normal(size=(frames, joints, 3))
    s = MovementSample(3, 4, 5, Label.INCORRECT, ang, pos)
    a_text, p_text = serialize_sample(s)
    back = parse_movement_file(a_text, p_text, subject=3, movement=4, episode=5,
                               label=Label.INCORRECT, n_joints=joints)
    assert back == s


# ---------------------------------------------------------------- skeletons

def test_skeleton_chain():
    skel = load_skeleton_definition("# chain\n0 waist -1\n1 chest 0\n2 head 1\n")
    assert skel.names == ("waist", "chest", "head")
    assert skel.parent == (-1, 0, 1)
    assert skel.root == 0


@pytest.mark.parametrize("text", [
    "0 a -1\n1 b 0\n2 c 2\n",          # self cycle
    "0 a -1\n1 b 2\n2 c 1\n",          # two-joint cycle
    "0 a -1\n1 b -1\n",                # two roots
    "0 a 1\n1 b 0\n",                  # no root
    "0 a -1\n1 b 5\n",                 # out of range
    "0 a -1\n1 a 0\n",                 # duplicate name
    "0 a -1\n2 b 0\n",                 # non-contiguous
])
def test_skeleton_invalid(text):
    with pytest.raises(InvalidHierarchy):
        load_skeleton_definition(text)


def test_skeleton_forward_reference_allowed():
    skel = load_skeleton_definition("0 hand 1\n1 arm 2\n2 root -1\n")
    assert skel.root == 2
    assert skel.order == (2, 1, 0)


def _tree_check(parent):
    """Oracle: every joint reaches the single root by following parents."""
    n = len(parent)
    roots = [j for j in range(n) if parent[j] == -1]
    if len(roots) != 1:
        return False
    for j in range(n):
        seen = set()
        while parent[j] != -1:
            if j in seen:
                return False
            seen.add(j)
            j = parent[j]
    return True


def test_default_skeleton():
    skel = default_skeleton()
    assert len(skel) == 22
    assert sum(p == -1 for p in skel.parent) == 1
    assert skel.names[skel.root] == "waist"
    assert _tree_check(skel.parent)


# ---------------------------------------------------------------- scanning

@pytest.mark.parametrize("incorrect", ["folder", "suffix"])
def test_scan_counts(tmp_path, incorrect):
    rng = np.random.default_rng(2)
    write_recording_tree(tmp_path, [1], [1, 2], [1, 2], rng, incorrect=incorrect)
    samples = scan_dataset(tmp_path)
    assert len(samples) == 8
    keys = [s.key for s in samples]
    assert keys == sorted(keys)
    assert sum(s.label == Label.INCORRECT for s in samples) == 4


def test_scan_orphan_reported(tmp_path, caplog):
    rng = np.random.default_rng(3)
    written = write_recording_tree(tmp_path, [1], [1], [1, 2], rng)
    written[0][1].unlink()
    result = scan_dataset(tmp_path)
    assert len(result) == 3
    assert len(result.skipped) == 1
    assert str(written[0][0]) in result.skipped[0]
    assert "no matching positions" in caplog.text


def test_scan_deterministic(tmp_path):
    rng = np.random.default_rng(4)
    write_recording_tree(tmp_path, [1, 2], [1, 2], [1], rng)
    a, b = scan_dataset(tmp_path), scan_dataset(tmp_path)
    assert a.samples == b.samples


def test_scan_duplicate(tmp_path):
    rng = np.random.default_rng(5)
    write_recording_tree(tmp_path, [1], [1], [1], rng)
    extra = tmp_path / "copy"
    extra.mkdir()
    src = next(tmp_path.rglob("m01_s01_e01_angles.txt"))
    (extra / src.name).write_text(src.read_text())
    with pytest.raises(DuplicateSample):
        scan_dataset(tmp_path)


def test_scan_missing_directory(tmp_path):
    with pytest.raises(IoError):
        scan_dataset(tmp_path / "nope")


def test_scan_combined_layout(tmp_path):
    rng = np.random.default_rng(6)
    (tmp_path / "m02_s03_e04.txt").write_text(fmt_rows(rng.normal(size=(3, 132))))
    (tmp_path / "m02_s03_e04_inc.txt").write_text(fmt_rows(rng.normal(size=(2, 132))))
    samples = scan_dataset(tmp_path, NamingConfig(layout="combined"))
    assert [(s.movement, s.subject, s.episode, s.label, s.n_frames) for s in samples] == [
        (2, 3, 4, Label.INCORRECT, 2), (2, 3, 4, Label.CORRECT, 3)]


def test_full_layout_count(tmp_path):
    # 10 movements x 10 subjects x 10 episodes x 2 labels
    rng = np.random.default_rng(7)
    write_recording_tree(tmp_path, range(1, 11), range(1, 11), range(1, 11), rng, n_joints=1, frames=(1, 1))
    assert len(scan_dataset(tmp_path, NamingConfig(n_joints=1))) == 2000
