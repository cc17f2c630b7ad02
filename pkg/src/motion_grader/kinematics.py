"""Forward kinematics from relative YXZ Euler angles to absolute joint positions.

Rotations use the column-vector convention ``p' = R p`` and the intrinsic
composition ``R = R_Y(a) @ R_X(b) @ R_Z(c)``.  A joint's global transform is
its parent's global transform composed with its own local transform; the
root's local transform is already global.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import JointSample, MovementSample, SkeletonDefinition, SkeletonFrame
from .errors import SizeMismatch


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_x(b):
    c, s = np.cos(b), np.sin(b)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_z(g):
    c, s = np.cos(g), np.sin(g)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_yxz(angles_rad) -> np.ndarray:
    """Rotation matrix for (about-Y, about-X, about-Z) angles in radians."""
    a, b, g = angles_rad
    return rot_y(a) @ rot_x(b) @ rot_z(g)


def rotation_yxz_batch(angles_rad: np.ndarray) -> np.ndarray:
    """Vectorised :func:`rotation_yxz` over a (..., 3) array; returns (..., 3, 3).

    Entries are the closed-form product of the three axis matrices.
    """
    a, b, g = np.moveaxis(np.asarray(angles_rad, dtype=np.float64), -1, 0)
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cg, sg = np.cos(g), np.sin(g)
    r = np.empty(a.shape + (3, 3))
    r[..., 0, 0] = ca * cg + sa * sb * sg
    r[..., 0, 1] = -ca * sg + sa * sb * cg
    r[..., 0, 2] = sa * cb
    r[..., 1, 0] = cb * sg
    r[..., 1, 1] = cb * cg
    r[..., 1, 2] = -sb
    r[..., 2, 0] = -sa * cg + ca * sb * sg
    r[..., 2, 1] = sa * sg + ca * sb * cg
    r[..., 2, 2] = ca * cb
    return r


@dataclass(frozen=True)
class Transform:
    rot: np.ndarray
    trans: np.ndarray

    @classmethod
    def identity(cls) -> "Transform":
        return cls(np.eye(3), np.zeros(3))

    def __matmul__(self, other: "Transform") -> "Transform":
        return Transform(self.rot @ other.rot, self.rot @ other.trans + self.trans)

    def apply(self, point) -> np.ndarray:
        return self.rot @ np.asarray(point, dtype=np.float64) + self.trans

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rot
        m[:3, 3] = self.trans
        return m


def local_transform(joint: JointSample, degrees: bool = True) -> Transform:
    angles = np.asarray(joint.euler_deg, dtype=np.float64)
    if degrees:
        angles = np.deg2rad(angles)
    return Transform(rotation_yxz(angles), np.asarray(joint.local_pos, dtype=np.float64))


def forward_kinematics(frame: SkeletonFrame, skel: SkeletonDefinition, degrees: bool = True) -> np.ndarray:
    """Absolute positions (J, 3) for one frame."""
    if len(frame) != len(skel):
        raise SizeMismatch(f"frame has {len(frame)} joints, skeleton has {len(skel)}")
    return _fk(frame.angles[None], frame.positions[None], skel, degrees)[0]


def _fk(angles: np.ndarray, positions: np.ndarray, skel: SkeletonDefinition, degrees: bool) -> np.ndarray:
    if degrees:
        angles = np.deg2rad(angles)
    local_rot = rotation_yxz_batch(angles)  # (T, J, 3, 3)
    global_rot = np.empty_like(local_rot)
    out = np.empty(positions.shape)
    for j in skel.order:
        p = skel.parent[j]
        if p == -1:
            global_rot[:, j] = local_rot[:, j]
            out[:, j] = positions[:, j]
        else:
            global_rot[:, j] = global_rot[:, p] @ local_rot[:, j]
            out[:, j] = np.einsum("tab,tb->ta", global_rot[:, p], positions[:, j]) + out[:, p]
    return out


def convert_sequence(sample: MovementSample, skel: SkeletonDefinition, degrees: bool = True) -> np.ndarray:
    """Absolute positions for every frame of ``sample``, shape (T, J, 3)."""
    if sample.n_joints != len(skel):
        # every frame of a sample shares the joint count, so frame 0 is the first offender
        raise SizeMismatch(f"frame 0: sample has {sample.n_joints} joints, skeleton has {len(skel)}")
    return _fk(sample.angles, sample.positions, skel, degrees)


def convert_frames(frames, skel: SkeletonDefinition, degrees: bool = True) -> list[np.ndarray]:
    """Per-frame conversion of an arbitrary frame sequence; errors name the frame index."""
    poses = []
    for t, frame in enumerate(frames):
        try:
            poses.append(forward_kinematics(frame, skel, degrees))
        except SizeMismatch as exc:
            raise SizeMismatch(f"frame {t}: {exc}") from exc
    return poses
