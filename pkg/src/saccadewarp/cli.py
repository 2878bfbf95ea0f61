"""Command-line interface: ``saccadewarp <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import io
from .config import ConfigError, PipelineConfig
from .evaluation import accuracy, improvement
from .harness import loso_harness, projection_comparison
from .pipeline import process_session
from .selection import ForestConfig, SaccadeForestClassifier, downsample_majority, label_by_loso, train
from .simulator import POSES, SimConfig, generate_suite
from .warpfield import WarpGrid, apply, calibrate

EXIT_INPUT = 2
EXIT_CONFIG = 3


def _forest_cfg(cfg: PipelineConfig) -> ForestConfig:
    return ForestConfig(cfg.n_trees, cfg.attrs_per_tree, cfg.max_depth, cfg.seed, cfg.min_leaf)


def _load_session(path, cfg):
    return io.read_session(path, cfg.geometry)


def _load_suite(root, cfg) -> dict:
    dirs = io.find_sessions(root)
    if not dirs:
        raise io.InputError("no session directories found", root)
    suite: dict = {}
    for d in dirs:
        s = _load_session(d, cfg)
        suite.setdefault(s.participant_id, []).append(s)
    return suite


def _out(path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def cmd_simulate(args, cfg):
    base = SimConfig(traversals=args.traversals, noise_sd_deg=args.noise_deg,
                     natural_curve_fraction=args.curve_fraction, distortion=args.distortion, geom=cfg.geometry)
    poses = tuple(args.poses.split(",")) if args.poses else POSES
    suite = generate_suite(args.participants, base, args.seed, poses)
    for pid, sessions in suite.items():
        for s in sessions:
            io.write_session(s, Path(args.out) / pid / s.session_id)


def cmd_preprocess(args, cfg):
    from .preprocess import preprocess

    session = _load_session(args.session, cfg)
    io.write_gaze(preprocess(session.stream, **cfg.preprocess_kwargs()), _out(args.out))


def cmd_segment(args, cfg):
    ps = process_session(_load_session(args.session, cfg), cfg)
    io.write_table(io.saccade_rows(ps.saccades, ps.X), _out(args.out))
    if args.fixations:
        io.write_table(io.fixation_rows(ps.fixations), _out(args.fixations))


def cmd_label(args, cfg):
    labels = []
    for d in io.find_sessions(args.session):
        ps = process_session(_load_session(d, cfg), cfg)
        if len(ps.saccades) < 2:
            continue
        labels.extend(label_by_loso(ps.saccades, ps.session, None, cfg.seed, fixations=ps.fixations,
                                    stream=ps.stream, mode=cfg.projection, quad_px=cfg.quad_px, kernel=cfg.kernel))
    io.write_table(io.labels_rows(labels), _out(args.out))


def cmd_train(args, cfg):
    data = [lab for path in args.labels for lab in io.read_labels(path)]
    if not args.no_downsample:
        data = downsample_majority(data, cfg.seed)
    forest = train(data, _forest_cfg(cfg))
    io.dump_json(forest.to_dict(), _out(args.out))


def cmd_calibrate(args, cfg):
    ps = process_session(_load_session(args.session, cfg), cfg)
    selector = io.load_artifact(args.forest, SaccadeForestClassifier.from_dict) if args.forest else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        grid = calibrate(ps.saccades, selector, cfg.projection, cfg.geometry, cfg.quad_px, cfg.kernel,
                         ps.session.stimulus)
    io.dump_json(grid.to_dict(), _out(args.out))


def cmd_apply(args, cfg):
    grid = io.load_artifact(args.warp, WarpGrid.from_dict)
    src = sys.stdin if args.input == "-" else open(args.input, newline="", encoding="utf-8")
    dst = sys.stdout if args.out == "-" else open(_out(args.out), "w", encoding="utf-8", newline="\n")
    name = "<stdin>" if args.input == "-" else args.input
    try:
        import csv

        reader = csv.reader(src)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != io.GAZE_HEADER:
            raise io.InputError(f"expected header {','.join(io.GAZE_HEADER)}", name, 1, 1)
        dst.write(",".join(io.GAZE_HEADER) + "\n")
        for row in reader:
            if not row:
                continue
            if len(row) != 4:
                raise io.InputError(f"expected 4 fields, got {len(row)}", name, reader.line_num, 1)
            t, x, y, v = io.parse_gaze_row(row, name, reader.line_num)
            if v:
                x, y = apply(grid, [x, y])
            dst.write(io.format_gaze_row(t, x, y, v))
            if args.out == "-":
                dst.flush()
    finally:
        if src is not sys.stdin:
            src.close()
        if dst is not sys.stdout:
            dst.close()


def cmd_evaluate(args, cfg):
    ps = process_session(_load_session(args.session, cfg), cfg)
    if not ps.fixations:
        raise io.InputError("no fixations could be segmented", args.session)
    if args.warp:
        grid = io.load_artifact(args.warp, WarpGrid.from_dict)
        report = improvement(ps.session, grid, ps.fixations, ps.stream).to_dict()
    else:
        report = accuracy(ps.session, ps.fixations, None, ps.stream).to_dict()
    report["schema_version"] = io.SCHEMA_VERSION
    io.dump_json(report, _out(args.out))
    if args.csv:
        grid_key = "region_map" if args.warp else "per_vertex_error"
        io.write_table([["" if v is None else repr(v) for v in row] for row in report[grid_key]], _out(args.csv))


def cmd_compare(args, cfg):
    table = projection_comparison(_load_suite(args.suite, cfg), _forest_cfg(cfg), cfg)
    io.dump_json({"schema_version": io.SCHEMA_VERSION, "improvement_pct": table}, _out(args.out))
    if args.csv:
        rows = [["mode", "all", "selected"]] + [[m, repr(v["all"]), repr(v["selected"])] for m, v in table.items()]
        io.write_table(rows, _out(args.csv))


def cmd_loso(args, cfg):
    res = loso_harness(_load_suite(args.suite, cfg), _forest_cfg(cfg), cfg.projection, cfg)
    io.dump_json(res.to_dict(), _out(args.out))
    if args.csv:
        io.write_table(res.csv_rows(), _out(args.csv))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="saccadewarp", description="Reduce eye-tracker calibration distortion from saccades.")
    p.add_argument("--config", help="flat config file (JSON object or key = value lines)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic suite of sessions")
    s.add_argument("--out", required=True)
    s.add_argument("--participants", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--poses", default=None, help="comma separated, default none,small,large")
    s.add_argument("--traversals", type=int, default=5)
    s.add_argument("--noise-deg", type=float, default=0.1)
    s.add_argument("--curve-fraction", type=float, default=0.2)
    s.add_argument("--distortion", choices=["smooth", "translation", "identity"], default="smooth")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("preprocess", help="jitter removal, gap filling and low-pass filtering")
    s.add_argument("session")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("segment", help="detect saccades and fixations")
    s.add_argument("session")
    s.add_argument("--out", required=True)
    s.add_argument("--fixations")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("label", help="label saccades by greedy leave-one-saccade-out")
    s.add_argument("session", help="session directory or a directory of sessions")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("train-selector", help="train the saccade selection forest")
    s.add_argument("labels", nargs="+")
    s.add_argument("--out", required=True)
    s.add_argument("--no-downsample", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("calibrate", help="build a warp grid from a session's saccades")
    s.add_argument("session")
    s.add_argument("--forest")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("apply", help="correct a gaze CSV (use - for stdin/stdout)")
    s.add_argument("--warp", required=True)
    s.add_argument("--in", dest="input", default="-")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_apply)

    s = sub.add_parser("evaluate", help="accuracy report, or improvement with --warp")
    s.add_argument("session")
    s.add_argument("--warp")
    s.add_argument("--out", required=True)
    s.add_argument("--csv", help="also write the 5x5 map as CSV")
    s.set_defaults(func=cmd_evaluate)

    for name, fn, text in (("compare-projections", cmd_compare, "bottom/peak/middle x all/selected table"),
                           ("loso", cmd_loso, "leave-one-participant-out evaluation")):
        s = sub.add_parser(name, help=text)
        s.add_argument("suite")
        s.add_argument("--out", required=True)
        s.add_argument("--csv")
        s.set_defaults(func=fn)
    return p


def _fail(code: int, payload: dict) -> int:
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    except ConfigError as e:
        return _fail(EXIT_CONFIG, {"error": "config", "message": str(e)})
    except OSError as e:
        return _fail(EXIT_CONFIG, {"error": "config", "message": str(e)})
    try:
        args.func(args, cfg)
    except io.InputError as e:
        return _fail(EXIT_INPUT, e.to_dict())
    except ConfigError as e:
        return _fail(EXIT_CONFIG, {"error": "config", "message": str(e)})
    except FileNotFoundError as e:
        return _fail(EXIT_INPUT, {"error": "malformed_input", "message": str(e), "path": e.filename,
                                  "line": None, "column": None})
    except BrokenPipeError:
        return 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
