"""Test oracles and synthetic data builders, independent of the code under test."""

from pathlib import Path

import numpy as np


def numeric_grad(f, x, h=1e-5):
    """Central finite differences of scalar ``f`` with respect to array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b, floor=1e-8):
    """Norm-wise relative error ||a - b|| / max(||a||, ||b||, floor).

    The floor (about the central-difference noise level) keeps gradients
    that are analytically zero, e.g. a bias feeding batch norm, comparable.
    """
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


# ---------------------------------------------------------------- quaternions

def quat_axis(axis, angle):
    q = np.zeros(4)
    q[0] = np.cos(angle / 2)
    q[1 + axis] = np.sin(angle / 2)
    return q


def quat_mul(p, q):
    w1, x1, y1, z1 = p
    w2, x2, y2, z2 = q
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_rotate(q, v):
    qv = np.concatenate([[0.0], v])
    conj = q * np.array([1, -1, -1, -1])
    return quat_mul(quat_mul(q, qv), conj)[1:]


def quat_yxz(a, b, g):
    return quat_mul(quat_mul(quat_axis(1, a), quat_axis(0, b)), quat_axis(2, g))


def quaternion_fk(angles_rad, local_pos, parent):
    """Recursive traversal: orientation_j = orientation_parent * q_local,
    position_j = position_parent + rotate(orientation_parent, local_j)."""
    n = len(parent)
    orient = [None] * n
    pos = [None] * n

    def visit(j):
        if pos[j] is not None:
            return
        q = quat_yxz(*angles_rad[j])
        p = parent[j]
        if p == -1:
            orient[j], pos[j] = q, np.array(local_pos[j], dtype=float)
        else:
            visit(p)
            orient[j] = quat_mul(orient[p], q)
            pos[j] = pos[p] + quat_rotate(orient[p], np.asarray(local_pos[j], dtype=float))

    for j in range(n):
        visit(j)
    return np.array(pos)


def random_tree(rng, n_joints, max_depth=None):
    """Random parent array with root 0; parents precede children."""
    parent = [-1]
    depth = [0]
    for j in range(1, n_joints):
        choices = [i for i in range(j) if max_depth is None or depth[i] < max_depth]
        p = int(rng.choice(choices))
        parent.append(p)
        depth.append(depth[p] + 1)
    return parent


# ---------------------------------------------------------------- datasets

def synthetic_sequences(rng, n, t=24, channels=66):
    """Two classes separated by temporal frequency: class 0 slow sines,
    class 1 fast sines, random phases and amplitudes per channel."""
    labels = np.arange(n) % 2
    time = np.arange(t)[:, None]
    x = np.empty((n, t, channels))
    for i, y in enumerate(labels):
        freq = rng.uniform(0.02, 0.06, channels) if y == 0 else rng.uniform(0.25, 0.35, channels)
        phase = rng.uniform(0, 2 * np.pi, channels)
        amp = rng.uniform(0.5, 1.5, channels)
        x[i] = amp * np.sin(2 * np.pi * freq * time + phase) + 0.05 * rng.standard_normal((t, channels))
    return x, labels


def fmt_rows(rows):
    return "".join(" ".join(repr(float(v)) for v in row) + "\n" for row in rows)


def write_recording_tree(root: Path, movements, subjects, episodes, rng, n_joints=22,
                         frames=(4, 8), incorrect="folder", signal=False):
    """Write a UI-PRMD-shaped tree: Segmented Movements/Kinect/{Angles,Positions}
    and the same under 'Incorrect Segmented Movements' (or an _inc suffix).

    With ``signal=True`` incorrect executions get a larger oscillation on
    the first joint so that classes are separable.
    """
    root = Path(root)
    written = []
    for label in ("correct", "incorrect"):
        if incorrect == "folder":
            base = root / ("Incorrect Segmented Movements" if label == "incorrect" else "Segmented Movements") / "Kinect"
            suffix = ""
        else:
            base = root / "Segmented Movements" / "Kinect"
            suffix = "_inc" if label == "incorrect" else ""
        (base / "Angles").mkdir(parents=True, exist_ok=True)
        (base / "Positions").mkdir(parents=True, exist_ok=True)
        for m in movements:
            for s in subjects:
                for e in episodes:
                    t = int(rng.integers(frames[0], frames[1] + 1))
                    ang = rng.uniform(-30, 30, (t, n_joints * 3))
                    pos = rng.uniform(-1, 1, (t, n_joints * 3))
                    if signal:
                        amp = 60.0 if label == "incorrect" else 5.0
                        ang[:, :3] = amp * np.sin(np.arange(t) * 0.9)[:, None]
                    stem = f"m{m:02d}_s{s:02d}_e{e:02d}"
                    a = base / "Angles" / f"{stem}_angles{suffix}.txt"
                    p = base / "Positions" / f"{stem}_positions{suffix}.txt"
                    a.write_text(fmt_rows(ang))
                    p.write_text(fmt_rows(pos))
                    written.append((a, p))
    return written
