"""Parsing of skeleton recordings and skeleton hierarchy definitions.

Recordings follow the UI-PRMD Kinect export: one frame per line, three
columns per joint.  The angles file carries Y X Z Euler angles (degrees),
the positions file carries X Y Z offsets relative to the parent joint,
except for the root, whose values are absolute.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DataError,
    DuplicateSample,
    EmptyRecording,
    InvalidHierarchy,
    IoError,
    LengthMismatch,
    ParseError,
)

log = logging.getLogger(__name__)

_SPLIT = re.compile(r"[\s,]+")


class Label(enum.IntEnum):
    INCORRECT = 0
    CORRECT = 1


@dataclass(frozen=True)
class JointSample:
    euler_deg: tuple[float, float, float]  # Y, X, Z
    local_pos: tuple[float, float, float]

    def __post_init__(self):
        if not np.all(np.isfinite(self.euler_deg + self.local_pos)):
            raise ValueError("joint values must be finite")


@dataclass(frozen=True)
class SkeletonFrame:
    """One frame: ``angles`` and ``positions`` are both (J, 3) arrays."""

    angles: np.ndarray
    positions: np.ndarray

    def __len__(self) -> int:
        return self.angles.shape[0]

    def joint(self, j: int) -> JointSample:
        return JointSample(tuple(map(float, self.angles[j])), tuple(map(float, self.positions[j])))

    @property
    def joints(self) -> list[JointSample]:
        return [self.joint(j) for j in range(len(self))]


@dataclass(frozen=True, eq=False)
class MovementSample:
    """One segmented repetition of a movement.

    ``angles`` and ``positions`` have shape (T, J, 3).  Both arrays are made
    read-only on construction.
    """

    subject: int
    movement: int
    episode: int
    label: Label
    angles: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        for name in ("subject", "movement", "episode"):
            v = getattr(self, name)
            if not 1 <= v <= 10:
                raise DataError(f"{name} must be in 1..10, got {v}")
        angles = np.array(self.angles, dtype=np.float64)
        positions = np.array(self.positions, dtype=np.float64)
        if angles.ndim != 3 or angles.shape[2] != 3 or angles.shape != positions.shape:
            raise DataError(f"bad frame arrays: {angles.shape} vs {positions.shape}")
        if angles.shape[0] == 0:
            raise EmptyRecording("sample has no frames")
        angles.flags.writeable = False
        positions.flags.writeable = False
        object.__setattr__(self, "label", Label(self.label))
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "positions", positions)

    @property
    def key(self) -> tuple[int, int, int, Label]:
        return (self.movement, self.subject, self.episode, self.label)

    @property
    def n_frames(self) -> int:
        return self.angles.shape[0]

    @property
    def n_joints(self) -> int:
        return self.angles.shape[1]

    @property
    def frames(self) -> list[SkeletonFrame]:
        return [SkeletonFrame(a, p) for a, p in zip(self.angles, self.positions)]

    def __eq__(self, other):
        if not isinstance(other, MovementSample):
            return NotImplemented
        return (self.key == other.key
                and np.array_equal(self.angles, other.angles)
                and np.array_equal(self.positions, other.positions))

    __hash__ = None


@dataclass(frozen=True)
class SkeletonDefinition:
    names: tuple[str, ...]
    parent: tuple[int, ...]  # -1 marks the root
    root: int
    order: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "order", _validate_tree(self.names, self.parent, self.root))

    def __len__(self) -> int:
        return len(self.names)

    @classmethod
    def from_parents(cls, names: Sequence[str], parent: Sequence[int]) -> "SkeletonDefinition":
        roots = [i for i, p in enumerate(parent) if p == -1]
        if len(roots) != 1:
            raise InvalidHierarchy(f"expected exactly one root, found {len(roots)}")
        return cls(tuple(names), tuple(int(p) for p in parent), roots[0])


def _validate_tree(names, parent, root) -> tuple[int, ...]:
    """Check the parent links and return a root-first topological order."""
    n = len(names)
    if n == 0:
        raise InvalidHierarchy("skeleton has no joints")
    if len(parent) != n:
        raise InvalidHierarchy("names and parent lengths differ")
    if len(set(names)) != n:
        dup = sorted({x for x in names if list(names).count(x) > 1})
        raise InvalidHierarchy(f"duplicate joint name(s): {', '.join(dup)}")
    roots = [i for i, p in enumerate(parent) if p == -1]
    if roots != [root]:
        raise InvalidHierarchy(f"expected single root {root}, found roots {roots}")
    children: list[list[int]] = [[] for _ in range(n)]
    for j, p in enumerate(parent):
        if p == -1:
            continue
        if not 0 <= p < n:
            raise InvalidHierarchy(f"joint {j} has out-of-range parent {p}")
        if p == j:
            raise InvalidHierarchy(f"joint {j} is its own parent")
        children[p].append(j)
    order = []
    stack = [root]
    while stack:
        j = stack.pop()
        order.append(j)
        stack.extend(reversed(children[j]))
    if len(order) != n:
        cyclic = sorted(set(range(n)) - set(order))
        raise InvalidHierarchy(f"joints {cyclic} do not reach the root (cycle)")
    return tuple(order)


def load_skeleton_definition(text: str | Iterable[str]) -> SkeletonDefinition:
    """Parse ``<index> <name> <parent-index|-1>`` lines; ``#`` starts a comment."""
    lines = text.splitlines() if isinstance(text, str) else text
    entries: dict[int, tuple[str, int]] = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 3:
            raise ParseError(lineno, len(tokens), 3)
        try:
            idx, parent = int(tokens[0]), int(tokens[2])
        except ValueError:
            raise ParseError(lineno, message=f"non-integer index in {line!r}") from None
        if idx in entries:
            raise InvalidHierarchy(f"line {lineno}: duplicate joint index {idx}")
        entries[idx] = (tokens[1], parent)
    n = len(entries)
    if sorted(entries) != list(range(n)):
        raise InvalidHierarchy("joint indices must be contiguous and start at 0")
    for idx, (_, parent) in entries.items():
        if parent != -1 and not 0 <= parent < n:
            raise InvalidHierarchy(f"joint {idx} has out-of-range parent {parent}")
    names = [entries[i][0] for i in range(n)]
    parents = [entries[i][1] for i in range(n)]
    return SkeletonDefinition.from_parents(names, parents)


def default_skeleton() -> SkeletonDefinition:
    """The 22-joint Kinect hierarchy shipped with the package."""
    text = resources.files("motion_grader").joinpath("data/kinect_22.txt").read_text()
    return load_skeleton_definition(text)


def parse_matrix(text: str | Iterable[str], columns: int, source: str | None = None) -> np.ndarray:
    """Parse numeric rows into an (R, columns) float64 array.

    Blank lines are skipped.  Any mix of spaces, tabs and commas separates
    tokens.
    """
    lines = text.splitlines() if isinstance(text, str) else text
    rows = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip().strip(",")
        if not line:
            continue
        tokens = _SPLIT.split(line)
        if len(tokens) != columns:
            raise ParseError(lineno, len(tokens), columns, source=source)
        try:
            values = [float(t) for t in tokens]
        except ValueError:
            bad = next(t for t in tokens if not _is_float(t))
            raise ParseError(lineno, message=f"non-numeric token {bad!r}", source=source) from None
        if not all(np.isfinite(values)):
            raise ParseError(lineno, message="non-finite value", source=source)
        rows.append(values)
    if not rows:
        raise EmptyRecording(f"{source or 'input'}: no frames")
    return np.asarray(rows, dtype=np.float64)


def _is_float(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def parse_movement_file(angles_text, positions_text=None, *, subject: int, movement: int,
                        episode: int, label: Label, n_joints: int = 22,
                        source: str | None = None,
                        positions_source: str | None = None) -> MovementSample:
    """Build a MovementSample from the angles and positions streams.

    With ``positions_text=None`` the angles stream is read as the combined
    layout: 3*J angle columns followed by 3*J position columns per row.
    """
    cols = 3 * n_joints
    if positions_text is None:
        combined = parse_matrix(angles_text, 2 * cols, source=source)
        angles, positions = combined[:, :cols], combined[:, cols:]
    else:
        angles = parse_matrix(angles_text, cols, source=source)
        positions = parse_matrix(positions_text, cols, source=positions_source or source)
        if angles.shape[0] != positions.shape[0]:
            raise LengthMismatch(
                f"{source or 'sample'}: {angles.shape[0]} angle rows vs {positions.shape[0]} position rows")
    t = angles.shape[0]
    return MovementSample(subject, movement, episode, label,
                          angles.reshape(t, n_joints, 3), positions.reshape(t, n_joints, 3))


def format_matrix(rows: np.ndarray) -> str:
    """Inverse of :func:`parse_matrix`; ``repr`` floats round-trip exactly."""
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in rows)


def serialize_sample(sample: MovementSample) -> tuple[str, str]:
    t = sample.n_frames
    return (format_matrix(sample.angles.reshape(t, -1)),
            format_matrix(sample.positions.reshape(t, -1)))


@dataclass
class NamingConfig:
    """How recordings are discovered under a dataset root.

    ``pattern`` must define ``movement``, ``subject`` and ``episode`` groups,
    a ``kind`` group (``angles``/``positions``) for the paired layout, and
    an optional ``inc`` group marking incorrect executions.  A file also
    counts as incorrect when any directory between it and the root matches
    ``incorrect_dir``.
    """

    pattern: str = r"m(?P<movement>\d+)_s(?P<subject>\d+)_e(?P<episode>\d+)_(?P<kind>angles|positions)(?P<inc>_inc)?\.txt"
    combined_pattern: str = r"m(?P<movement>\d+)_s(?P<subject>\d+)_e(?P<episode>\d+)(?P<inc>_inc)?\.txt"
    incorrect_dir: str = r"(?i)incorrect"
    layout: str = "paired"  # or "combined"
    n_joints: int = 22

    def label_for(self, path: Path, root: Path, match: re.Match) -> Label:
        if match.groupdict().get("inc"):
            return Label.INCORRECT
        rel_dirs = path.relative_to(root).parts[:-1]
        if any(re.search(self.incorrect_dir, d) for d in rel_dirs):
            return Label.INCORRECT
        return Label.CORRECT


@dataclass
class ScanResult:
    samples: list[MovementSample]
    skipped: list[str]

    def __iter__(self) -> Iterator[MovementSample]:
        return iter(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]


def scan_dataset(root: str | Path, naming: NamingConfig | None = None) -> ScanResult:
    """Find and parse every recording below ``root``.

    Samples are returned sorted by (movement, subject, episode, label).
    Files that cannot be paired are skipped and listed in ``skipped``
    (and logged), never fatal.
    """
    naming = naming or NamingConfig()
    root = Path(root)
    if not root.is_dir():
        raise IoError(f"dataset root is not a readable directory: {root}")
    if naming.layout not in ("paired", "combined"):
        raise ValueError(f"unknown layout {naming.layout!r}")
    regex = re.compile(naming.pattern if naming.layout == "paired" else naming.combined_pattern)

    found: dict[tuple, dict[str, Path]] = {}
    skipped = []
    try:
        paths = sorted(p for p in root.rglob("*") if p.is_file())
    except OSError as exc:
        raise IoError(f"cannot read {root}: {exc}") from exc
    for path in paths:
        m = regex.fullmatch(path.name)
        if m is None:
            continue
        label = naming.label_for(path, root, m)
        key = (int(m["movement"]), int(m["subject"]), int(m["episode"]), label)
        kind = m.groupdict().get("kind") or "combined"
        slot = found.setdefault(key, {})
        if kind in slot:
            raise DuplicateSample(
                f"duplicate sample m{key[0]} s{key[1]} e{key[2]} {label.name}: {slot[kind]} and {path}")
        slot[kind] = path

    samples = []
    for key in sorted(found):
        files = found[key]
        movement, subject, episode, label = key
        meta = dict(subject=subject, movement=movement, episode=episode, label=label,
                    n_joints=naming.n_joints)
        if naming.layout == "combined":
            path = files["combined"]
            samples.append(parse_movement_file(_read(path), None, source=str(path), **meta))
            continue
        if set(files) != {"angles", "positions"}:
            for kind, path in files.items():
                missing = "positions" if kind == "angles" else "angles"
                msg = f"skipped {path}: no matching {missing} file"
                log.warning(msg)
                skipped.append(msg)
            continue
        samples.append(parse_movement_file(_read(files["angles"]), _read(files["positions"]),
                                           source=str(files["angles"]),
                                           positions_source=str(files["positions"]), **meta))
    return ScanResult(samples, skipped)


def _read(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
