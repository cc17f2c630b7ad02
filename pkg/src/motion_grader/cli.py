"""Command-line entry point: ``convert``, ``crossval`` and ``report``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .dataset import Label, NamingConfig, default_skeleton, format_matrix, load_skeleton_definition, scan_dataset
from .errors import ConfigError, DataError
from .kinematics import convert_sequence
from .nn.model import ModelConfig, TrainConfig
from .protocol import ExperimentReport, ProtocolConfig, aggregate, run_cross_validation, run_general_model

log = logging.getLogger("motion_grader")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

SEED_ENV = "MOTION_GRADER_SEED"

# built-in defaults; config file values override these, flags override both
DEFAULTS = {
    "mode": "angles",
    "movement": "all",
    "fold_layout": "full",
    "val_count": None,  # 3 for the full layout, 2 for the gap layout
    "epochs": 500,
    "batch_size": 128,
    "lr": 0.01,
    "momentum": 0.9,
    "l1_weight": 1e-4,
    "dropout": 0.5,
    "initial_filters": 8,
    "initial_filter_len": 8,
    "stage_filters": "64,128,256",
    "units_per_stage": 3,
    "filter_len": 8,
    "bn_eps": 1e-5,
    "bn_momentum": 0.9,
    "seed": 0,
    "jobs": 1,
    "radians": False,
    "normalize": False,
    "layout": "paired",
    "joints": None,  # joint count of the skeleton definition
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


_SHOWN_DEFAULTS = {"joints": "joint count of the skeleton", "val_count": "3, or 2 with --fold-layout gap"}


def _opt(p, flag, help, **kw):
    dest = kw.pop("dest", flag.lstrip("-").replace("-", "_"))
    if "action" not in kw:
        kw["default"] = None
    if dest in DEFAULTS:
        shown = _SHOWN_DEFAULTS.get(dest, DEFAULTS[dest])
        help = f"{help} (default: {shown})"
    p.add_argument(flag, dest=dest, help=help, **kw)


def _data_options(p):
    _opt(p, "--data", "dataset root directory", required=True, type=Path)
    _opt(p, "--skeleton", "skeleton definition file (default: shipped 22-joint Kinect skeleton)", type=Path)
    _opt(p, "--layout", "recording layout", choices=["paired", "combined"])
    _opt(p, "--joints", "joints per frame", type=int)
    _opt(p, "--radians", "input angles are radians, not degrees", action="store_const", const=True)
    _opt(p, "--config", "JSON file with option values (flags take precedence)", type=Path)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="motion-grader", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress per-epoch progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", help="write absolute joint positions for every recording")
    _data_options(p)
    _opt(p, "--out", "output directory", required=True, type=Path)

    p = sub.add_parser("crossval", help="run cross-subject experiments and write reports")
    _data_options(p)
    _opt(p, "--out", "output directory", required=True, type=Path)
    _opt(p, "--movement", "movement id, comma list, 'all' or 'general'")
    _opt(p, "--mode", "feature mode", choices=["angles", "positions", "both"])
    _opt(p, "--fold-layout", "'full': every subject outside test and validation trains; "
         "'gap': the subject before the test subject is left out", choices=["full", "gap"])
    _opt(p, "--val-count", "validation subjects per fold", type=int)
    _opt(p, "--epochs", "training epochs", type=int)
    _opt(p, "--batch-size", "mini-batch size (clamped to the training-set size)", type=int)
    _opt(p, "--lr", "learning rate", type=float)
    _opt(p, "--momentum", "Nesterov momentum", type=float)
    _opt(p, "--l1-weight", "L1 weight on convolution kernels", type=float)
    _opt(p, "--dropout", "dropout rate after every ReLU", type=float)
    _opt(p, "--initial-filters", "filters of the first convolution", type=int)
    _opt(p, "--initial-filter-len", "filter length of the first convolution", type=int)
    _opt(p, "--stage-filters", "comma-separated filters per stage")
    _opt(p, "--units-per-stage", "residual units per stage", type=int)
    _opt(p, "--filter-len", "filter length inside residual units", type=int)
    _opt(p, "--bn-eps", "batch-norm epsilon", type=float)
    _opt(p, "--bn-momentum", "batch-norm running-statistics momentum", type=float)
    _opt(p, "--seed", f"random seed (falls back to ${SEED_ENV})", type=int)
    _opt(p, "--jobs", "folds trained in parallel", type=int)
    _opt(p, "--normalize", "standardize feature channels", action="store_const", const=True)
    _opt(p, "--dump-config", "print the resolved configuration and exit", action="store_true")

    p = sub.add_parser("report", help="merge stored reports into CSV tables")
    p.add_argument("reports", nargs="+", type=Path, help="report JSON files or directories holding them")
    p.add_argument("--out", type=Path, default=None, help="output directory (default: print to stdout)")
    return parser


def resolve(args) -> dict:
    """Merge flags over config file over defaults."""
    resolved = dict(DEFAULTS)
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            resolved["seed"] = int(env_seed)
        except ValueError:
            raise UsageError(f"${SEED_ENV} must be an integer, got {env_seed!r}") from None
    if getattr(args, "config", None) is not None:
        try:
            file_cfg = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown keys in {args.config}: {', '.join(sorted(unknown))}")
        resolved.update(file_cfg)
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            resolved[k] = v
    if resolved["val_count"] is None:
        resolved["val_count"] = 2 if resolved["fold_layout"] == "gap" else 3
    return resolved


def _stage_filters(value):
    if isinstance(value, str):
        try:
            return tuple(int(v) for v in value.split(",") if v.strip())
        except ValueError:
            raise UsageError(f"bad --stage-filters {value!r}") from None
    return tuple(value)


def protocol_config(cfg: dict) -> ProtocolConfig:
    train = TrainConfig(epochs=cfg["epochs"], batch_size=cfg["batch_size"], learning_rate=cfg["lr"],
                        momentum=cfg["momentum"], l1_weight=cfg["l1_weight"], seed=cfg["seed"])
    model = ModelConfig(initial_filters=cfg["initial_filters"], initial_filter_len=cfg["initial_filter_len"],
                        stage_filters=_stage_filters(cfg["stage_filters"]),
                        units_per_stage=cfg["units_per_stage"], filter_len=cfg["filter_len"],
                        dropout=cfg["dropout"], bn_eps=cfg["bn_eps"], bn_momentum=cfg["bn_momentum"])
    return ProtocolConfig(train, model, cfg["val_count"], cfg["fold_layout"], not cfg["radians"],
                          cfg["normalize"], cfg["jobs"])


def _load_inputs(args, cfg):
    if args.skeleton is not None:
        try:
            skel = load_skeleton_definition(args.skeleton.read_text())
        except OSError as exc:
            raise DataError(f"cannot read skeleton file {args.skeleton}: {exc}") from None
    else:
        skel = default_skeleton()
    naming = NamingConfig(layout=cfg["layout"], n_joints=cfg["joints"] or len(skel))
    # skipped files are reported on stderr by the scan itself
    return skel, scan_dataset(args.data, naming).samples


def _sample_stem(s) -> str:
    stem = f"m{s.movement:02d}_s{s.subject:02d}_e{s.episode:02d}"
    return stem + ("_inc" if s.label == Label.INCORRECT else "")


def cmd_convert(args) -> int:
    cfg = resolve(args)
    skel, samples = _load_inputs(args, cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    for s in samples:
        poses = convert_sequence(s, skel, degrees=not cfg["radians"])
        path = args.out / f"{_sample_stem(s)}_absolute.txt"
        path.write_text(format_matrix(poses.reshape(s.n_frames, -1)))
        print(f"{path}\t{s.n_frames} frames")
    return EXIT_OK


def _movements(selector, samples):
    available = sorted({s.movement for s in samples})
    selector = str(selector)
    if selector == "all":
        return available
    if selector == "general":
        return ["general"]
    try:
        chosen = [int(v) for v in selector.split(",")]
    except ValueError:
        raise UsageError(f"bad --movement {selector!r}: use an id, a comma list, 'all' or 'general'") from None
    bad = [m for m in chosen if not 1 <= m <= 10]
    if bad:
        raise UsageError(f"movement ids must be in 1..10, got {bad}")
    return chosen


def cmd_crossval(args) -> int:
    cfg = resolve(args)
    if args.dump_config:
        print(json.dumps(cfg, indent=2, sort_keys=True))
        return EXIT_OK
    pcfg = protocol_config(cfg)
    skel, samples = _load_inputs(args, cfg)
    modes = ["angles", "positions"] if cfg["mode"] == "both" else [cfg["mode"]]
    args.out.mkdir(parents=True, exist_ok=True)
    reports = []
    for movement in _movements(cfg["movement"], samples):
        for mode in modes:
            log.info("experiment movement=%s mode=%s", movement, mode)
            if movement == "general":
                report = run_general_model(samples, mode, skel, pcfg)
            else:
                report = run_cross_validation(samples, movement, mode, skel, pcfg)
            stem = f"report_{'general' if movement == 'general' else f'm{movement:02d}'}_{mode}"
            (args.out / f"{stem}.json").write_text(report.to_json())
            (args.out / f"{stem}.csv").write_text(report.to_csv())
            reports.append(report)
    summary = aggregate(reports)
    doc = {"resolved_config": cfg, **summary.to_dict()}
    (args.out / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    (args.out / "summary_by_movement.csv").write_text(summary.movement_table_csv())
    (args.out / "summary_by_subject.csv").write_text(summary.subject_table_csv())
    print(summary.render())
    return EXIT_OK


def _report_files(paths):
    files = []
    for p in paths:
        if p.is_dir():
            files.extend(sorted(p.glob("report_*.json")))
        elif p.exists():
            files.append(p)
        else:
            raise DataError(f"no such report file or directory: {p}")
    return files


def cmd_report(args) -> int:
    files = _report_files(args.reports)
    if not files:
        raise DataError(f"no report files found in {', '.join(map(str, args.reports))}")
    reports, means = [], {}
    for f in files:
        try:
            d = json.loads(f.read_text())
            r = ExperimentReport.from_dict(d)
            means[(r.movement, r.mode)] = float(d["mean_accuracy"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise DataError(f"malformed report file {f}: {exc}") from None
        reports.append(r)
    summary = aggregate(reports, means)
    if args.out is None:
        sys.stdout.write(summary.movement_table_csv())
        sys.stdout.write("\n")
        sys.stdout.write(summary.subject_table_csv())
    else:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "summary_by_movement.csv").write_text(summary.movement_table_csv())
        (args.out / "summary_by_subject.csv").write_text(summary.subject_table_csv())
        print(summary.render())
    return EXIT_OK


COMMANDS = {"convert": cmd_convert, "crossval": cmd_crossval, "report": cmd_report}

HINTS = {
    EXIT_USAGE: "check the flag values; --help lists every option with its default",
    EXIT_DATA: "check the dataset layout, file contents and --skeleton/--joints settings",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        stream=sys.stderr, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        code, msg = EXIT_USAGE, str(exc)
    except (DataError, OSError) as exc:
        code, msg = EXIT_DATA, str(exc)
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        code, msg = EXIT_INTERNAL, f"internal error: {exc}"
    print(f"motion-grader: {msg}", file=sys.stderr)
    if code in HINTS:
        print(f"hint: {HINTS[code]}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
