"""Command line: simulate, degrade, track, eval, report and regress.

Exit status is 0 on success, 2 for bad input (missing files, malformed
formats, invalid options) and 1 for anything unexpected.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import traceback
from pathlib import Path

from . import formats
from .metrics import EvaluationError, combine_reports, countable_ids, hota
from .regressor import (
    NonFiniteLoss,
    RegressorError,
    TrainParams,
    fit_and_score,
    kfold_cv,
    read_records,
    synthetic_records,
    usable_records,
    filter_by_ratio,
    write_predictions,
)
from .simulator import SceneConfig, generate_scene
from .sphere import MissingCamera, RansacParams
from .tracker import FrameDetections, TrackerConfig, degrade_detections, detections_from_labeled, run

log = logging.getLogger("orchardtrack")

REPORT_COLUMNS = ["Sequence", "HOTA", "DetA", "AssA", "MOTA", "CbyT", "CbyT-GT", "RelErr"]


class InputError(Exception):
    pass


def _hidden(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        sizes = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"layer sizes must be comma-separated integers, got {text!r}") from None
    if any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError("layer sizes must be positive")
    return sizes


def _visibility(text: str) -> float | None:
    return None if text.lower() == "none" else float(text)


def _write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    data["seed"] = formats.resolve_seed(args.seed if args.seed is not None else data.get("seed"))
    if args.n_spheres is not None:
        data["n_spheres"] = args.n_spheres
    if args.n_frames is not None:
        data["n_frames"] = args.n_frames
    try:
        cfg = SceneConfig.from_dict(data)
    except TypeError as exc:
        raise InputError(f"bad scene config: {exc}") from None
    scene = generate_scene(cfg)
    formats.write_scene(args.out, scene)
    print(f"wrote {len(scene.gt_boxes)} boxes of {len(scene.rays)} spheres over {cfg.n_frames} frames to {args.out}")
    return 0


def cmd_degrade(args) -> int:
    gt = formats.rows_to_labeled(formats.read_mot16(args.gt))
    frames = range(1, max((b.frame for b in gt), default=0) + 1)
    dets = degrade_detections(detections_from_labeled(gt, frames), args.rate, formats.resolve_seed(args.seed))
    rows = formats.detection_rows((fd.frame_index, fd.boxes) for fd in dets)
    formats.write_mot16(args.out, rows)
    print(f"kept {len(rows)} of {len(gt)} boxes")
    return 0


def _camera_paths(args):
    if args.scene:
        return Path(args.scene) / "cameras.txt", Path(args.scene) / "images.txt"
    if not (args.cameras and args.images):
        raise InputError("give --scene or both --cameras and --images")
    return Path(args.cameras), Path(args.images)


def cmd_track(args) -> int:
    cam_path, img_path = _camera_paths(args)
    cams, intr = formats.read_colmap(cam_path, img_path, args.frame_pattern)
    rows = formats.read_mot16(args.dets)
    by_frame: dict[int, list] = {}
    for r in rows:
        by_frame.setdefault(r.frame, []).append(r.box)
    seq = [FrameDetections(f, by_frame.get(f, [])) for f in sorted(set(by_frame) | set(cams))]
    cfg = TrackerConfig(
        ransac=RansacParams(args.max_geom_error, args.inliers_ratio, args.max_iters, args.min_track_len),
        c=args.c,
        f_focal=args.f_focal,
        reloc_min_iou=args.reloc_min_iou,
        relocalization=not args.no_reloc,
        image_size=formats.image_size(intr),
    )
    result = run(seq, cams, cfg)
    out_rows = [
        formats.Mot16Row(b.frame, b.track_id, b.box.x, b.box.y, b.box.width, b.box.height, 1.0, -1, -1.0)
        for b in result.labeled_boxes()
    ]
    formats.write_mot16(args.out, out_rows)
    summary = {
        "count": result.count,
        "n_tracks": len(result.tracks),
        "relocalization": cfg.relocalization,
        "tracks": [
            {
                "id": t.id,
                "n_boxes": len(t),
                "first_frame": min(t.boxes),
                "last_frame": max(t.boxes),
                "center": [float(v) for v in t.sphere.center],
                "ray": float(t.sphere.ray),
            }
            for t in sorted(result.counted(), key=lambda t: t.id)
        ],
        "per_frame_active": {str(f): n for f, n in sorted(result.per_frame_active.items())},
    }
    if args.summary:
        _write_json(args.summary, summary)
    print(f"counted {result.count} fruits ({len(result.tracks)} tracks)")
    return 0


def _evaluate(pred_path, gt_path, args):
    pred = formats.rows_to_labeled(formats.read_mot16(pred_path))
    gt = formats.rows_to_labeled(formats.read_mot16(gt_path))
    gt_count = len(countable_ids(gt, args.min_run)) if args.min_run else None
    return hota(pred, gt, min_visibility=args.min_visibility, gt_count=gt_count)


def _report_row(name, rep) -> list:
    return [name, *(f"{v:.6f}" for v in (rep.hota, rep.deta, rep.assa, rep.mota)), rep.cbyt, rep.cbyt_gt, f"{rep.rel_error:.6f}"]


def _write_report(path, named_reports) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for name, rep in named_reports:
            writer.writerow(_report_row(name, rep))
        if len(named_reports) > 1:
            writer.writerow(_report_row("All", combine_reports([r for _, r in named_reports])))


def cmd_eval(args) -> int:
    rep = _evaluate(args.pred, args.gt, args)
    if args.out:
        _write_json(args.out, rep.to_dict())
    if args.csv:
        _write_report(args.csv, [(args.name, rep)])
    s = rep.summary()
    print(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in s.items()))
    return 0


def cmd_report(args) -> int:
    pairs = []
    if args.runs:
        root = Path(args.runs)
        if not root.is_dir():
            raise InputError(f"{root} is not a directory")
        for sub in sorted(p for p in root.iterdir() if p.is_dir()):
            pred, gt = sub / args.pred_name, sub / args.gt_name
            if pred.exists() and gt.exists():
                pairs.append((sub.name, pred, gt))
    for item in args.pair or []:
        parts = item.split(":")
        if len(parts) != 3:
            raise InputError(f"--pair wants NAME:PRED:GT, got {item!r}")
        pairs.append((parts[0], Path(parts[1]), Path(parts[2])))
    if not pairs:
        raise InputError("no sequences to report")
    reports = [(name, _evaluate(pred, gt, args)) for name, pred, gt in pairs]
    _write_report(args.out, reports)
    print(f"wrote {len(reports)} sequences to {args.out}")
    return 0


def cmd_regress(args) -> int:
    seed = formats.resolve_seed(args.seed)
    if args.records:
        records = read_records(args.records)
    elif args.synthetic:
        records = synthetic_records(args.synthetic, seed=seed, noise=args.noise)
    else:
        raise InputError("give --records or --synthetic")
    params = TrainParams(lr=args.lr, momentum=args.momentum, epochs=args.epochs, batch=args.batch or None, seed=seed)
    out: dict = {"seed": seed, "n_records": len(records)}
    if args.cv:
        archs = {}
        for item in args.cv.split(";"):
            name, _, layers = item.partition("=")
            archs[name.strip()] = _hidden(layers)
        recs = usable_records(records)
        if args.ratio is not None:
            recs = filter_by_ratio(recs, args.ratio)
        out["cv"] = kfold_cv(recs, archs, k=args.folds, params=params).to_dict()
    result = fit_and_score(records, args.hidden, params, args.test_fraction, args.ratio)
    out.update(result.metrics())
    if args.predictions:
        write_predictions(args.predictions, result.test_ids, result.test_pred, result.test_actual)
    _write_json(args.out, out)
    print(f"test R2 {result.r2_test:.4f} on {len(result.test_ids)} trees")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orchardtrack", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic scene directory")
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="JSON file with scene settings")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-spheres", type=int)
    s.add_argument("--n-frames", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("degrade", help="drop ground-truth boxes at random to emulate a detector")
    s.add_argument("--gt", required=True)
    s.add_argument("--rate", type=float, required=True, help="probability of keeping a box")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_degrade)

    s = sub.add_parser("track", help="track and count fruits")
    s.add_argument("--dets", required=True, help="MOT16 detections")
    s.add_argument("--scene", help="directory holding cameras.txt and images.txt")
    s.add_argument("--cameras")
    s.add_argument("--images")
    s.add_argument("--frame-pattern", default=formats.DEFAULT_FRAME_PATTERN)
    s.add_argument("--out", required=True, help="MOT16 tracking results")
    s.add_argument("--summary", help="JSON with the count and per-track spheres")
    s.add_argument("--c", type=float, default=0.9)
    s.add_argument("--f-focal", type=float)
    s.add_argument("--max-geom-error", type=float, default=8.0)
    s.add_argument("--inliers-ratio", type=float, default=0.5)
    s.add_argument("--max-iters", type=int, default=500)
    s.add_argument("--min-track-len", type=int, default=5)
    s.add_argument("--reloc-min-iou", type=float, default=0.0)
    s.add_argument("--no-reloc", action="store_true", help="disable relocalization")
    s.add_argument("--seed", type=int, help="accepted for symmetry; tracking is deterministic")
    s.set_defaults(func=cmd_track)

    for name, func, text in (("eval", cmd_eval, "score one sequence"), ("report", cmd_report, "score a batch")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--min-visibility", type=_visibility, default=0.5, help="'none' keeps every gt box")
        s.add_argument("--min-run", type=int, default=6,
                       help="gt ids need this many consecutive frames to be countable; 0 counts every id")
        s.add_argument("--seed", type=int)
        if name == "eval":
            s.add_argument("--pred", required=True)
            s.add_argument("--gt", required=True)
            s.add_argument("--out", help="JSON report")
            s.add_argument("--csv", help="one-row CSV report")
            s.add_argument("--name", default="sequence")
        else:
            s.add_argument("--runs", help="directory with one sub-directory per sequence")
            s.add_argument("--pred-name", default="results.txt")
            s.add_argument("--gt-name", default="gt.txt")
            s.add_argument("--pair", action="append", help="NAME:PRED:GT, repeatable")
            s.add_argument("--out", required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("regress", help="train and score the yield regressor")
    s.add_argument("--records", help="CSV of tree records")
    s.add_argument("--synthetic", type=int, help="generate this many synthetic trees instead")
    s.add_argument("--noise", type=float, default=0.1)
    s.add_argument("--hidden", type=_hidden, default=(16, 16))
    s.add_argument("--epochs", type=int, default=300)
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--momentum", type=float, default=0.9)
    s.add_argument("--batch", type=int, default=32, help="0 for full batch")
    s.add_argument("--ratio", type=float, help="minimum tracked/harvested ratio")
    s.add_argument("--test-fraction", type=float, default=0.2)
    s.add_argument("--cv", help="architectures to cross-validate, e.g. 'a=16,16;b=8'")
    s.add_argument("--folds", type=int, default=10)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--predictions", help="CSV of test-set predictions")
    s.set_defaults(func=cmd_regress)
    return p


_INPUT_ERRORS = (
    InputError,
    OSError,
    formats.FormatError,
    EvaluationError,
    RegressorError,
    NonFiniteLoss,
    MissingCamera,
    json.JSONDecodeError,
    ValueError,
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
