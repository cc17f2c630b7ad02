"""Cross-subject evaluation: fold layout, training with validation-based
model selection, per-movement and pooled experiments, and aggregation."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dataset import Label, MovementSample, SkeletonDefinition
from .errors import ConfigError, DataError, ShapeError
from .features import FeatureMode, PaddedBatch, build_dataset_tensor
from .nn.model import (
    ModelConfig,
    ResTcnModel,
    TrainConfig,
    build_res_tcn,
    make_optimizer,
    model_forward,
    train_step,
)

log = logging.getLogger(__name__)

REPORT_FORMAT = 1


@dataclass(frozen=True)
class FoldSplit:
    test_subjects: tuple[int, ...]
    val_subjects: tuple[int, ...]
    train_subjects: tuple[int, ...]
    excluded_subjects: tuple[int, ...] = ()

    def check(self, subjects):
        groups = [set(self.test_subjects), set(self.val_subjects), set(self.train_subjects),
                  set(self.excluded_subjects)]
        total = sum(len(g) for g in groups)
        union = set().union(*groups)
        if total != len(union):
            raise AssertionError(f"subject leakage between splits: {self}")
        if union != set(subjects) or len(self.test_subjects) != 1:
            raise AssertionError(f"fold does not partition the subjects: {self}")


def make_folds(subjects: Sequence[int], val_count: int = 3, layout: str = "full") -> list[FoldSplit]:
    """One fold per subject, in the given order.

    ``full`` layout: the test subject's ``val_count`` cyclic successors
    validate, everyone else trains.  ``gap`` layout: the successors
    after the test subject train (n - 2 - val_count of them), the next
    ``val_count`` validate, and the one subject just before the test
    subject is left out; for subjects 1..10 and test subject 1 this gives
    train 2..7, validation 8, 9, unused 10.
    """
    subjects = list(subjects)
    n = len(subjects)
    if len(set(subjects)) != n:
        raise ConfigError("subjects must be unique")
    if val_count < 0:
        raise ConfigError(f"val_count must be >= 0, got {val_count}")
    if layout == "full":
        if n < val_count + 2:
            raise ConfigError(f"need at least {val_count + 2} subjects for val_count={val_count}, got {n}")
    elif layout == "gap":
        if n < val_count + 3:
            raise ConfigError(f"gap layout needs at least {val_count + 3} subjects, got {n}")
    else:
        raise ConfigError(f"unknown fold layout {layout!r}")

    folds = []
    for i, test in enumerate(subjects):
        after = [subjects[(i + k) % n] for k in range(1, n)]
        if layout == "full":
            val, train, excluded = after[:val_count], after[val_count:], []
        else:
            n_train = n - 2 - val_count
            train, val, excluded = after[:n_train], after[n_train:n_train + val_count], after[-1:]
        fold = FoldSplit((test,), tuple(sorted(val)), tuple(sorted(train)), tuple(sorted(excluded)))
        fold.check(subjects)
        folds.append(fold)
    return folds


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float


@dataclass
class FoldResult:
    fold: int
    test_subject: int
    best_val_accuracy: float
    best_epoch: int
    test_accuracy: float
    predictions: list[dict] = field(default_factory=list)
    history: list[EpochRecord] = field(default_factory=list)
    split: dict = field(default_factory=dict)


def evaluate(model: ResTcnModel, batch: PaddedBatch, chunk: int = 128):
    """Accuracy and per-sample predictions, infer mode.  Exact probability
    ties resolve to class 0."""
    probs = model_forward(model, batch, train=False, chunk=chunk)
    pred = np.argmax(probs, axis=1)
    correct = pred == batch.labels
    acc = float(correct.mean()) if len(correct) else 0.0
    return acc, pred, probs


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    size = min(batch_size, n)
    return [order[i:i + size] for i in range(0, n, size)]


def train_model(train: PaddedBatch, val: PaddedBatch, config: TrainConfig,
                model_config: ModelConfig | None = None, seed: int | None = None,
                progress=None):
    """Train for ``config.epochs`` epochs and keep the checkpoint with the best
    validation accuracy (earliest epoch on ties).

    Returns ``(model, best_val_accuracy, best_epoch, history)`` where
    ``model`` carries the retained parameters.
    """
    if len(train) == 0 or len(val) == 0:
        raise DataError("train and validation sets must be non-empty")
    if train.data.shape[1:] != val.data.shape[1:]:
        raise ShapeError(f"train {train.data.shape[1:]} and validation {val.data.shape[1:]} shapes differ")
    seed = config.seed if seed is None else seed
    n_classes = max(2, int(max(train.labels.max(), val.labels.max())) + 1)
    model = build_res_tcn(train.data.shape[2], n_classes, model_config, seed)
    if config.epochs == 0:
        acc, _, _ = evaluate(model, val, config.batch_size)
        return model, acc, 0, []

    opt = make_optimizer(model, config)
    best_state, best_acc, best_epoch = None, -1.0, 0
    history = []
    for epoch in range(1, config.epochs + 1):
        # dropout and shuffling both derive from (seed, epoch)
        model.reset_rng(seed + epoch)
        rng = np.random.default_rng(seed + epoch)
        losses = []
        for idx in _batches(len(train), config.batch_size, rng):
            losses.append(train_step(model, train.data[idx], train.labels[idx], config, opt))
        acc, _, _ = evaluate(model, val, config.batch_size)
        rec = EpochRecord(epoch, float(np.mean(losses)), acc)
        history.append(rec)
        if acc > best_acc:
            best_acc, best_epoch, best_state = acc, epoch, model.state_dict()
        if progress is not None:
            progress(rec)
    model.load_state_dict(best_state)
    return model, best_acc, best_epoch, history


@dataclass
class ExperimentReport:
    movement: int | str  # movement id or "general"
    mode: str
    folds: list[FoldResult]
    fold_layout: str
    val_count: int
    config: dict = field(default_factory=dict)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([f.test_accuracy for f in self.folds]))

    @property
    def subject_accuracy(self) -> dict[int, float]:
        return {f.test_subject: f.test_accuracy for f in self.folds}

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "movement": self.movement,
            "mode": self.mode,
            "fold_layout": self.fold_layout,
            "val_count": self.val_count,
            "config": self.config,
            "mean_accuracy": self.mean_accuracy,
            "subject_accuracy": {str(k): v for k, v in sorted(self.subject_accuracy.items())},
            "folds": [asdict(f) for f in self.folds],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["movement", "mode", "subject", "accuracy"])
        for f in self.folds:
            w.writerow([self.movement, self.mode, f.test_subject, repr(f.test_accuracy)])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        folds = []
        for f in d["folds"]:
            f = dict(f)
            f["history"] = [EpochRecord(**h) for h in f.get("history", [])]
            folds.append(FoldResult(**f))
        return cls(d["movement"], d["mode"], folds, d["fold_layout"], d["val_count"], d.get("config", {}))


@dataclass
class ProtocolConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    val_count: int = 3
    fold_layout: str = "full"
    degrees: bool = True
    normalize: bool = False
    jobs: int = 1

    def to_dict(self) -> dict:
        return {"train": asdict(self.train), "model": asdict(self.model), "val_count": self.val_count,
                "fold_layout": self.fold_layout, "degrees": self.degrees, "normalize": self.normalize}


def _subjects_with_labels(samples):
    by_subject: dict[int, set] = {}
    for s in samples:
        by_subject.setdefault(s.subject, set()).add(s.label)
    return by_subject


def _run_fold(args):
    i, fold, batch, subjects_of, cfg = args
    idx = {name: np.flatnonzero(np.isin(subjects_of, getattr(fold, f"{name}_subjects")))
           for name in ("train", "val", "test")}
    train, test = batch.subset(idx["train"]), batch.subset(idx["test"])
    # no validation subjects: select on the training set
    val = batch.subset(idx["val"]) if len(idx["val"]) else train

    def progress(rec):
        log.info("fold %d epoch %d loss %.5f val_acc %.4f", i + 1, rec.epoch, rec.train_loss, rec.val_accuracy)

    model, best_acc, best_epoch, history = train_model(
        train, val, cfg.train, cfg.model, seed=cfg.train.seed + 1000 * i, progress=progress)
    acc, pred, probs = evaluate(model, test, cfg.train.batch_size)
    predictions = [
        {"subject": m.subject, "movement": m.movement, "episode": m.episode,
         "label": int(y), "predicted": int(p), "prob_correct": float(pr[1])}
        for m, y, p, pr in zip(test.meta, test.labels, pred, probs)
    ]
    split = {"train": list(fold.train_subjects), "val": list(fold.val_subjects),
             "test": list(fold.test_subjects), "excluded": list(fold.excluded_subjects)}
    return FoldResult(i + 1, fold.test_subjects[0], best_acc, best_epoch, acc, predictions, history, split)


def _run_experiment(samples, movement, mode, skel, cfg: ProtocolConfig) -> ExperimentReport:
    samples = list(samples)
    if not samples:
        raise DataError(f"no samples for movement {movement}")
    labels = _subjects_with_labels(samples)
    for subject, seen in sorted(labels.items()):
        if seen != {Label.CORRECT, Label.INCORRECT}:
            missing = ({Label.CORRECT, Label.INCORRECT} - seen).pop()
            raise DataError(f"subject {subject} has no {missing.name.lower()} samples for movement {movement}")
    mode = FeatureMode(mode)
    batch = build_dataset_tensor(samples, mode, skel, degrees=cfg.degrees, normalize=cfg.normalize)
    subjects_of = np.array([m.subject for m in batch.meta])
    folds = make_folds(sorted(labels), cfg.val_count, cfg.fold_layout)
    jobs = [(i, f, batch, subjects_of, cfg) for i, f in enumerate(folds)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            results = list(ex.map(_run_fold, jobs))
    else:
        results = [_run_fold(j) for j in jobs]
    return ExperimentReport(movement, mode.value, results, cfg.fold_layout, cfg.val_count, cfg.to_dict())


def run_cross_validation(samples, movement: int, mode, skel: SkeletonDefinition | None = None,
                         config: ProtocolConfig | None = None) -> ExperimentReport:
    """Cross-subject evaluation of one movement; T_max spans that movement's samples."""
    config = config or ProtocolConfig()
    chosen = [s for s in samples if s.movement == movement]
    return _run_experiment(chosen, movement, mode, skel, config)


def run_general_model(samples, mode, skel: SkeletonDefinition | None = None,
                      config: ProtocolConfig | None = None) -> ExperimentReport:
    """All movements pooled into one correct/incorrect problem."""
    return _run_experiment(list(samples), "general", mode, skel, config or ProtocolConfig())


@dataclass
class Summary:
    mode_means: dict[str, float]  # over per-movement reports only
    general: dict[str, float]
    by_movement: list[tuple]  # (movement, mode, mean_accuracy)
    by_subject: list[tuple]  # (movement, mode, subject, accuracy)

    def to_dict(self):
        return {"mode_means": self.mode_means, "general": self.general,
                "by_movement": [list(r) for r in self.by_movement],
                "by_subject": [list(r) for r in self.by_subject]}

    def movement_table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["movement", "mode", "mean_accuracy"])
        for row in self.by_movement:
            w.writerow([row[0], row[1], repr(row[2])])
        return buf.getvalue()

    def subject_table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["movement", "mode", "subject", "accuracy"])
        for row in self.by_subject:
            w.writerow([row[0], row[1], row[2], repr(row[3])])
        return buf.getvalue()

    def render(self) -> str:
        lines = [f"{'movement':>10} {'mode':>10} {'accuracy':>9}"]
        for mv, mode, acc in self.by_movement:
            lines.append(f"{mv!s:>10} {mode:>10} {acc:9.3f}")
        for mode, acc in sorted(self.mode_means.items()):
            lines.append(f"{'mean':>10} {mode:>10} {acc:9.3f}")
        return "\n".join(lines)


def _movement_key(m):
    return (1, 0) if m == "general" else (0, int(m))


def aggregate(reports: Sequence[ExperimentReport], means: dict | None = None) -> Summary:
    """Movement x mode and movement x subject tables plus per-mode means.

    ``means`` optionally maps ``(movement, mode)`` to a stored mean so that
    re-rendering never recomputes it.
    """
    reports = list(reports)
    if not reports:
        raise DataError("no reports to aggregate")
    reports.sort(key=lambda r: (_movement_key(r.movement), r.mode))
    by_movement, by_subject = [], []
    per_mode: dict[str, list[float]] = {}
    general = {}
    for r in reports:
        mean = r.mean_accuracy if means is None else means[(r.movement, r.mode)]
        by_movement.append((r.movement, r.mode, mean))
        for f in sorted(r.folds, key=lambda f: f.test_subject):
            by_subject.append((r.movement, r.mode, f.test_subject, f.test_accuracy))
        if r.movement == "general":
            general[r.mode] = mean
        else:
            per_mode.setdefault(r.mode, []).append(mean)
    mode_means = {k: float(np.mean(v)) for k, v in sorted(per_mode.items())}
    return Summary(mode_means, general, by_movement, by_subject)
