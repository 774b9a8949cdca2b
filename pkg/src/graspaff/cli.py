"""Command-line interface.

Exit codes: 0 success, 1 a run finished but something failed (for
``eval``, at least one scene), 2 bad usage or unreadable input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import load_config, parse_angle, parse_length
from .detector import GraspDetector
from .evaluation import bench, evaluate, load_annotation, load_text_annotation, save_annotation
from .pcd import PCDError, atomic_write, load_pcd, write_pcd
from .ply import export_ply

log = logging.getLogger("graspaff")


class UsageError(Exception):
    pass


def _length(text):
    try:
        return parse_length(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _angle(text):
    try:
        return parse_angle(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# flag -> (detector parameter, type, help)
_PIPELINE_FLAGS = [
    ("--gripper-d", "d", _length, "maximum hand aperture (default 8cm)"),
    ("--gripper-w", "w", _length, "finger width (default 1cm)"),
    ("--gripper-e", "e", _length, "finger thickness and band width (default 2cm)"),
    ("--gripper-h", "h", _length, "finger length (default 6cm)"),
    ("--gripper-l", "l", _length, "minimum grasp depth (default 3cm)"),
    ("--gripper-g", "g", _length, "minimum clearance beside the object (default 1.2cm)"),
    ("--theta-low", "theta_low", _angle, "lower smoothness threshold, degrees (default 4)"),
    ("--theta-high", "theta_high", _angle, "upper smoothness threshold, degrees (default 20)"),
    ("--edge-ratio", "edge_ratio", float, "edge point fraction k (default 0.4)"),
    ("--radius", "radius", _length, "neighborhood radius (default 1cm)"),
    ("--min-segment-size", "min_segment_size", int, "smallest kept segment (default 50)"),
    ("--normal-radius", "normal_radius", _length, "normal estimation radius (default: --radius)"),
    ("--voxel-leaf", "voxel_leaf", _length, "voxel downsampling leaf, 0 disables"),
    ("--smoothing-radius", "smoothing_radius", _length, "mean-filter radius, 0 disables"),
    ("--max-displacement", "max_displacement", _length, "clamp on smoothing displacement"),
    ("--surface-filter", "surface_filter", str, "'all' or 'curved' segments"),
    ("--curvature-threshold", "curvature_threshold", float,
     "surface variation above which a segment counts as curved"),
]


def _add_pipeline(p):
    g = p.add_argument_group("pipeline", "lengths take mm, cm or m suffixes; bare numbers are cm")
    g.add_argument("--config", type=Path, help="INI file with pipeline settings")
    for flag, dest, typ, help_ in _PIPELINE_FLAGS:
        g.add_argument(flag, dest=f"p_{dest}", type=typ, default=None, help=help_)
    g.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")


def _add_input(p, required=True):
    p.add_argument("--in", dest="input", type=Path, required=required, help="input PCD file")


def build_detector(args):
    params = {}
    if getattr(args, "config", None) is not None:
        try:
            params.update(load_config(args.config))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    for _, dest, _, _ in _PIPELINE_FLAGS:
        v = getattr(args, f"p_{dest}", None)
        if v is not None:
            params[dest] = v
    params["n_jobs"] = max(1, getattr(args, "threads", 1) or 1)
    det = GraspDetector(**params)
    try:
        det.validate()
    except ValueError as exc:
        raise UsageError(f"invalid settings: {exc}") from None
    return det


def _load(path):
    if not path.exists():
        raise UsageError(f"input not found: {path}")
    t0 = time.perf_counter()
    try:
        cloud = load_pcd(path)
    except PCDError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    elapsed = time.perf_counter() - t0
    if cloud.dropped:
        log.info("dropped %d non-finite points from %s", cloud.dropped, path)
    return cloud, elapsed


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write(out, text)


def cmd_detect(args):
    det = build_detector(args)
    cloud, load_time = _load(args.input)
    result = det.detect(cloud)
    report = result.to_dict(include_timings=args.timings)
    if args.timings:
        report["timings"]["load"] = round(load_time, 6)
    report["config"] = {k: v for k, v in sorted(det.get_params().items()) if k != "n_jobs"}
    report["input"] = args.input.name
    _emit(_dump(report), args.out)
    if args.viz is not None:
        export_ply(result.cloud, args.viz, result.segmentation, result.handles)
    log.info("%d handles on %d segments", len(result.handles), result.segmentation.n_segments)
    return 0


def cmd_segment(args):
    det = build_detector(args)
    cloud, _ = _load(args.input)
    result = det.detect(cloud)
    seg = result.segmentation
    report = {"input": args.input.name, "n_points": len(result.cloud),
              "n_segments": seg.n_segments,
              "segments": [{"label": s.label, "size": s.size} for s in seg.segments],
              "labels": seg.labels.tolist(), "edge_points": seg.edge_points.tolist()}
    _emit(_dump(report), args.out)
    if args.viz is not None:
        export_ply(result.cloud, args.viz, seg)
    return 0


def cmd_export(args):
    det = build_detector(args)
    cloud, _ = _load(args.input)
    result = det.detect(cloud)
    export_ply(result.cloud, args.out, result.segmentation,
               None if args.no_handles else result.handles, glyph_length=args.glyph_length)
    return 0


def _annotation_for(pcd, args):
    if args.ann is not None:
        return args.ann[args.input.index(pcd)]
    for suffix in (".ann.json", ".ann.txt", ".txt"):
        cand = args.ann_dir / (pcd.stem + suffix)
        if cand.exists():
            return cand
    return args.ann_dir / (pcd.stem + ".ann.json")


def cmd_eval(args):
    det = build_detector(args)
    scenes = []
    failures = []
    if args.suite:
        from .synth import clutter_spec, synth_scene

        for seed in range(args.suite):
            cloud, ann = synth_scene(clutter_spec(args.seed + seed))
            scenes.append((cloud, ann))
    else:
        if args.ann is not None and len(args.ann) != len(args.input):
            raise UsageError(f"{len(args.input)} inputs but {len(args.ann)} annotation files")
        for pcd in args.input:
            ann_path = _annotation_for(pcd, args)
            try:
                t0 = time.perf_counter()
                cloud = load_pcd(pcd)
                load_time = time.perf_counter() - t0
                if ann_path.suffix == ".txt":
                    ann = load_text_annotation(ann_path, cloud, scene_id=pcd.stem)
                else:
                    ann = load_annotation(ann_path)
                if not ann.scene_id:
                    ann = type(ann)(pcd.stem, ann.objects)
                scenes.append((cloud, ann, load_time))
            except (OSError, ValueError) as exc:
                failures.append((pcd.stem, f"{type(exc).__name__}: {exc}"))
    report = evaluate(scenes, det, n_jobs=det.n_jobs)
    from .evaluation import SceneResult

    for sid, msg in failures:
        report.scenes.append(SceneResult(sid, error=msg))
    report.scenes.sort(key=lambda s: s.scene_id)
    if args.out is not None:
        atomic_write(args.out, report.to_json(include_timings=args.timings))
    if args.csv is not None:
        atomic_write(args.csv, report.to_csv())
    for s in report.failed:
        print(f"scene {s.scene_id} failed: {s.error}", file=sys.stderr)
    print(f"aggregate recall: {report.aggregate_recall:.2f}% over "
          f"{len(report.ok)} scenes ({len(report.failed)} failed)")
    return 1 if report.failed else 0


def cmd_synth(args):
    from .synth import SyntheticSceneSpec, clutter_spec, synth_scene

    if args.spec is not None:
        try:
            with open(args.spec) as fh:
                spec = SyntheticSceneSpec.from_dict(json.load(fh))
        except FileNotFoundError:
            raise UsageError(f"spec not found: {args.spec}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"invalid spec {args.spec}: {exc}") from None
        name = args.name or args.spec.stem
    else:
        spec = clutter_spec(args.clutter)
        name = args.name or spec.scene_id
    try:
        cloud, ann = synth_scene(spec)
    except ValueError as exc:
        raise UsageError(f"invalid spec: {exc}") from None
    args.out.mkdir(parents=True, exist_ok=True)
    ann = type(ann)(name, ann.objects)
    write_pcd(cloud, args.out / f"{name}.pcd", binary=args.binary)
    tmp = args.out / f"{name}.ann.json"
    save_annotation(ann, tmp)
    print(f"{name}: {len(cloud)} points, {ann.total_graspable} objects")
    return 0


def cmd_bench(args):
    det = build_detector(args)
    cloud, load_time = _load(args.input)
    if args.repeats < 3:
        raise UsageError("--repeats must be at least 3")
    summary = bench(cloud, det, repeats=args.repeats, load_time=load_time)
    _emit(_dump(summary), args.out)
    return 0


def make_parser():
    p = argparse.ArgumentParser(prog="graspaff", description="Grasp handle detection in point clouds")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="find grasp handles in a PCD file")
    _add_input(d)
    d.add_argument("--out", type=Path, help="handle JSON (default: stdout)")
    d.add_argument("--viz", type=Path, help="also write a colored PLY")
    d.add_argument("--timings", action="store_true", help="include stage timings in the JSON")
    _add_pipeline(d)
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("segment", help="segment a PCD file into smooth surfaces")
    _add_input(s)
    s.add_argument("--out", type=Path, help="segmentation JSON (default: stdout)")
    s.add_argument("--viz", type=Path, help="also write a colored PLY")
    _add_pipeline(s)
    s.set_defaults(func=cmd_segment)

    e = sub.add_parser("eval", help="recall over annotated scenes")
    e.add_argument("--in", dest="input", type=Path, nargs="+", default=[], help="scene PCD files")
    grp = e.add_mutually_exclusive_group()
    grp.add_argument("--ann", type=Path, nargs="+", help="annotation files, one per scene")
    grp.add_argument("--ann-dir", type=Path, help="directory holding <scene>.ann.json files")
    e.add_argument("--suite", type=int, default=0,
                   help="evaluate N generated clutter scenes instead of files")
    e.add_argument("--seed", type=int, default=0, help="first seed of --suite")
    e.add_argument("--out", type=Path, help="report JSON")
    e.add_argument("--csv", type=Path, help="per-scene CSV")
    e.add_argument("--timings", action="store_true", help="include timings in the report")
    _add_pipeline(e)
    e.set_defaults(func=cmd_eval)

    y = sub.add_parser("synth", help="generate a synthetic scene with annotation")
    src = y.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", type=Path, help="scene spec JSON")
    src.add_argument("--clutter", type=int, metavar="SEED", help="random clutter scene")
    y.add_argument("--out", type=Path, required=True, help="output directory")
    y.add_argument("--name", help="file stem (default: spec name)")
    y.add_argument("--binary", action="store_true", help="binary PCD")
    y.set_defaults(func=cmd_synth)

    b = sub.add_parser("bench", help="time the pipeline stages")
    _add_input(b)
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--out", type=Path, help="timing JSON (default: stdout)")
    _add_pipeline(b)
    b.set_defaults(func=cmd_bench)

    x = sub.add_parser("export", help="write segments and handles as PLY")
    _add_input(x)
    x.add_argument("--out", type=Path, required=True, help="output PLY")
    x.add_argument("--no-handles", action="store_true", help="segments only")
    x.add_argument("--glyph-length", type=_length, default=0.03, help="axis glyph length")
    _add_pipeline(x)
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.command == "eval" and not args.suite:
        if not args.input:
            parser.error("eval needs --in scene files or --suite N")
        if args.ann is None and args.ann_dir is None:
            parser.error("eval needs --ann or --ann-dir")
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"graspaff {args.command}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"graspaff {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
