"""Per-sample feature matrices and zero-padded batches."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import MovementSample, SkeletonDefinition, format_matrix
from .errors import EmptyInput, PadTooShort
from .kinematics import convert_sequence


class FeatureMode(str, enum.Enum):
    POSITIONS = "positions"
    ANGLES = "angles"


@dataclass(frozen=True)
class SampleMeta:
    subject: int
    movement: int
    episode: int


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    data: np.ndarray  # (T, D)
    label: int  # 0 = incorrect, 1 = correct
    meta: SampleMeta | None = None

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]


@dataclass(eq=False)
class PaddedBatch:
    data: np.ndarray  # (N, T_max, D)
    labels: np.ndarray  # (N,)
    lengths: np.ndarray  # (N,)
    meta: list[SampleMeta] = field(default_factory=list)

    def __len__(self) -> int:
        return self.data.shape[0]

    def subset(self, index) -> "PaddedBatch":
        index = np.asarray(index, dtype=np.intp)
        meta = [self.meta[i] for i in index] if self.meta else []
        return PaddedBatch(self.data[index], self.labels[index], self.lengths[index], meta)


def _meta(sample: MovementSample) -> SampleMeta:
    return SampleMeta(sample.subject, sample.movement, sample.episode)


def positions_feature(poses, label: int = 0, meta: SampleMeta | None = None) -> FeatureMatrix:
    """Concatenate (X, Y, Z) of every joint, in definition order, per frame."""
    poses = np.asarray(poses, dtype=np.float64)
    if poses.size == 0 or poses.shape[0] == 0:
        raise EmptyInput("no poses to featurize")
    return FeatureMatrix(poses.reshape(poses.shape[0], -1), int(label), meta)


def angles_feature(sample: MovementSample) -> FeatureMatrix:
    """Raw relative (Y, X, Z) Euler triples per joint, concatenated per frame."""
    if sample is None or sample.n_frames == 0:
        raise EmptyInput("empty sample")
    data = np.array(sample.angles.reshape(sample.n_frames, -1))
    return FeatureMatrix(data, int(sample.label), _meta(sample))


def pad_to_length(m: FeatureMatrix, t_max: int) -> FeatureMatrix:
    t = m.n_frames
    if t_max < t:
        raise PadTooShort(f"cannot pad {t} frames down to {t_max}")
    out = np.zeros((t_max, m.data.shape[1]))
    out[:t] = m.data
    return replace(m, data=out)


def featurize(sample: MovementSample, mode: FeatureMode | str, skel: SkeletonDefinition | None = None,
              degrees: bool = True) -> FeatureMatrix:
    mode = FeatureMode(mode)
    if mode is FeatureMode.ANGLES:
        return angles_feature(sample)
    if skel is None:
        raise ValueError("positions mode needs a skeleton definition")
    return positions_feature(convert_sequence(sample, skel, degrees), int(sample.label), _meta(sample))


def build_dataset_tensor(samples: Sequence[MovementSample], mode: FeatureMode | str,
                         skel: SkeletonDefinition | None = None, *, degrees: bool = True,
                         normalize: bool = False) -> PaddedBatch:
    """Featurize every sample and zero-pad to the longest one in the collection.

    ``normalize`` standardizes each channel with mean/std taken over the
    unpadded rows of the whole collection; padding stays exactly zero.
    """
    samples = list(samples)
    if not samples:
        raise EmptyInput("no samples")
    mats = [featurize(s, mode, skel, degrees) for s in samples]
    if normalize:
        rows = np.concatenate([m.data for m in mats])
        mu = rows.mean(axis=0)
        sd = rows.std(axis=0)
        sd[sd == 0] = 1.0
        mats = [replace(m, data=(m.data - mu) / sd) for m in mats]
    lengths = np.array([m.n_frames for m in mats], dtype=np.int64)
    t_max = int(lengths.max())
    data = np.stack([pad_to_length(m, t_max).data for m in mats])
    labels = np.array([m.label for m in mats], dtype=np.int64)
    return PaddedBatch(data, labels, lengths, [m.meta for m in mats])


def dump_features(batch: PaddedBatch, out_dir: str | Path) -> list[Path]:
    """Write each sample's T_max x D matrix as text, one file per sample."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(len(batch)):
        m = batch.meta[i] if batch.meta else None
        stem = f"m{m.movement:02d}_s{m.subject:02d}_e{m.episode:02d}" if m else f"sample{i:04d}"
        suffix = "" if batch.labels[i] == 1 else "_inc"
        path = out_dir / f"{stem}{suffix}_features.txt"
        path.write_text(format_matrix(batch.data[i]))
        paths.append(path)
    return paths
