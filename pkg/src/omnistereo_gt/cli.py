"""Command-line interface.

Exit codes: 0 success, 1 usage or invalid input, 2 I/O or parse failure,
3 numerical failure (including non-convergence).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .calibration import Extrinsics
from .config import PipelineConfig
from .errors import NumericalError, ParseError
from .geometry import EquirectGeometry

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3



class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(p, suppress):
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=default, help="JSON pipeline configuration")
    p.add_argument("--seed", type=int, default=default, help="random seed (overrides the config)")
    p.add_argument("--workers", type=int, default=default, help="frame-level worker threads")
    p.add_argument("-v", "--verbose", action="store_true", default=default if suppress else False)


def _geometry_flags(p):
    p.add_argument("--width", type=int, help="raster width in pixels")
    p.add_argument("--height", type=int, help="raster height in pixels")
    p.add_argument("--theta-min", type=float, help="polar angle at the top raster edge, degrees")
    p.add_argument("--theta-max", type=float, help="polar angle at the bottom raster edge, degrees")


def _extrinsics_flags(p):
    p.add_argument("--extrinsics", help="calibration report or extrinsics JSON")
    p.add_argument("--rotation", type=float, nargs=3, metavar=("RX", "RY", "RZ"), help="axis-angle rotation, radians")
    p.add_argument("--translation", type=float, nargs=3, metavar=("TX", "TY", "TZ"), help="translation, meters")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="omnistereo-gt", description="Depth and disparity ground truth for top-bottom 360° stereo rigs.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help):
        p = sub.add_parser(name, help=help)
        _global_flags(p, suppress=True)
        return p

    p = add("calibrate", "fit LiDAR-to-camera extrinsics from point correspondences")
    p.add_argument("correspondences", help="text file with 'lx ly lz px py' lines")
    p.add_argument("-o", "--output", required=True, help="JSON report path")
    _geometry_flags(p)
    _extrinsics_flags(p)

    p = add("project", "project a LiDAR cloud into a sparse depth map")
    p.add_argument("cloud")
    p.add_argument("-o", "--output", required=True, help="raster output (.osr)")
    p.add_argument("--png", help="also write a 16-bit PNG (value * 256)")
    _geometry_flags(p)
    _extrinsics_flags(p)

    p = add("complete", "densify a sequence of sparse depth maps")
    p.add_argument("clouds", help="directory of per-frame clouds")
    p.add_argument("sparse", help="directory of per-frame sparse maps")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--transforms", help="JSON list of 4x4 cloud poses for transformed aggregation")
    p.add_argument("--threshold-mode", choices=("sequence", "frame"), default="sequence")
    for flag, typ in (("--m", int), ("--k", int), ("--rip", float), ("--t-ood", float), ("--n-grid", int), ("--t-theta", float)):
        p.add_argument(flag, type=typ)
    p.add_argument("--aggregation", choices=("no_movement", "transformed"))
    _extrinsics_flags(p)

    p = add("evaluate", "score predictions against ground truth")
    p.add_argument("pred", help="directory of predicted maps")
    p.add_argument("gt", help="directory of ground-truth maps")
    p.add_argument("-o", "--output", required=True, help="JSON report path")
    p.add_argument("--completed-gt", help="directory of depth-completed ground truth (for LRCE)")
    p.add_argument("--lrce", action="store_true", help="require and report LRCE")
    p.add_argument("--pooled", action="store_true", help="pool pixels across images instead of averaging per image")

    p = add("convert", "convert a depth map to disparity or back")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--png", help="also write a 16-bit PNG (value * 256)")
    p.add_argument("--baseline", type=float, help="camera baseline, meters")
    p.add_argument("--theta-min", type=float)
    p.add_argument("--theta-max", type=float)

    p = add("simulate", "render a synthetic scene")
    p.add_argument("scene", help="scene description (JSON)")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--correspondences", type=int, default=0, help="number of calibration correspondences to emit")
    p.add_argument("--noise-px", type=float, default=0.0)
    _geometry_flags(p)
    _extrinsics_flags(p)

    p = add("colorize", "render a map as an 8-bit color image")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="PNG output")
    p.add_argument("--colormap", default="turbo")
    p.add_argument("--min", type=float, dest="vmin")
    p.add_argument("--max", type=float, dest="vmax")
    p.add_argument("--mode", choices=("linear", "inverse"), default="linear")
    return parser


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    cfg = pipeline.with_overrides(cfg, args.seed, args.workers)
    g = cfg.geometry
    geom = {
        "width": getattr(args, "width", None) or g.width,
        "height": getattr(args, "height", None) or g.height,
        "theta_min": g.theta_min if getattr(args, "theta_min", None) is None else args.theta_min,
        "theta_max": g.theta_max if getattr(args, "theta_max", None) is None else args.theta_max,
    }
    cfg.geometry = EquirectGeometry(**geom)
    if getattr(args, "baseline", None) is not None:
        cfg.rig = type(cfg.rig)(args.baseline, cfg.rig.lidar_offset)
    if args.command == "complete":
        changes = {k: getattr(args, k) for k in ("m", "k", "rip", "t_ood", "n_grid", "t_theta", "aggregation")
                   if getattr(args, k) is not None}
        cfg.completion = cfg.completion.replace(**changes)
    return cfg


def _extrinsics(args, cfg):
    if getattr(args, "extrinsics", None):
        return pipeline.load_extrinsics(args.extrinsics)
    if args.rotation is None and args.translation is None:
        return None
    base = pipeline.default_extrinsics(cfg)
    return Extrinsics(args.rotation if args.rotation is not None else base.rotation,
                      args.translation if args.translation is not None else base.translation)


def run(args) -> int:
    cfg = _config(args)
    cmd = args.command
    if cmd == "calibrate":
        rep = pipeline.calibrate(args.correspondences, args.output, cfg, _extrinsics(args, cfg))
        print(f"E = {rep['total_error_px2']:.6g} px^2, mean error {rep['mean_error_px']:.4f} px, "
              f"{rep['iterations']} iterations")
    elif cmd == "project":
        d = pipeline.project(args.cloud, args.output, cfg, _extrinsics(args, cfg), args.png)
        print(f"{d.n_valid} labeled pixels")
    elif cmd == "complete":
        s = pipeline.complete(args.clouds, args.sparse, args.output, cfg, _extrinsics(args, cfg),
                              args.transforms, args.threshold_mode)
        print(f"labels {s['labels_original']} -> {s['labels_completed']}, ARIP {s['arip']:.4f}")
    elif cmd == "evaluate":
        rep = pipeline.evaluate(args.pred, args.gt, args.output, args.completed_gt, args.lrce,
                                "pixel" if args.pooled else "image")
        print(json.dumps(rep["all"], indent=2))
    elif cmd == "convert":
        info = pipeline.convert(args.input, args.output, cfg, args.png)
        print(f"wrote {info['output_kind']} map, {info['pixels']} pixels, {info['clamped_pixels']} clamped")
        if "cost_volume_cap" in info:
            print(f"max disparity {info['max_disparity_px']:.3f} px, cost-volume cap {info['cost_volume_cap']}")
    elif cmd == "simulate":
        m = pipeline.simulate(args.scene, args.output, cfg, args.frames, args.correspondences, args.noise_px,
                              _extrinsics(args, cfg))
        print(f"rendered {m['frames']} frame(s)")
    elif cmd == "colorize":
        pipeline.colorize_file(args.input, args.output, args.colormap, args.vmin, args.vmax, args.mode)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return run(args)
    except (ParseError, OSError) as exc:
        return _fail(EXIT_IO, exc)
    except NumericalError as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (ValueError, IndexError) as exc:
        return _fail(EXIT_USAGE, exc)


def _fail(code, exc):
    print(f"omnistereo-gt: error: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
