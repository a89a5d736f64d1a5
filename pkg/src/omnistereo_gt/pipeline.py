"""End-to-end commands behind the CLI: file in, file out.

Each function validates its inputs before writing anything and writes every
output atomically.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .calibration import Extrinsics, optimize_extrinsics, projection_quality_report, reproject
from .completion import PointCloud, complete_sequence, project_cloud
from .config import PipelineConfig
from .errors import DegenerateInputError, NumericalError
from .geometry import cost_volume_cap, depth_to_disparity, disparity_deg_to_pixels, disparity_to_depth, polar_angle_map
from .metrics import evaluate_by_scene
from .rasters import DEPTH, DISPARITY, DepthMap
from .synthetic import Scene, SimRig, gt_disparity_map, make_correspondences, render_depth_map, render_lidar
from .visualize import colorize

log = logging.getLogger(__name__)

CLOUD_SUFFIXES = (".bin", ".txt", ".xyz")
RASTER_SUFFIX = ".osr"


def default_extrinsics(cfg: PipelineConfig) -> Extrinsics:
    """Identity rotation with the LiDAR ``lidar_offset`` below the camera."""
    return Extrinsics(np.zeros(3), [0.0, 0.0, -cfg.rig.lidar_offset])


def load_extrinsics(path) -> Extrinsics:
    data = io.read_json(path)
    return Extrinsics.from_dict(data.get("extrinsics", data))


def _finite_or_none(x):
    return x if x is None or math.isfinite(x) else None


# --- calibrate ------------------------------------------------------------


def calibrate(correspondences, output, cfg: PipelineConfig, init: Extrinsics | None = None) -> dict:
    """Fit extrinsics to a correspondence file and write the JSON report.

    Raises:
        NumericalError: the optimizer did not converge (report is still written).
    """
    lidar, image = io.read_correspondences(correspondences)
    if len(lidar) < 3:
        raise DegenerateInputError(f"need at least 3 correspondences, file has {len(lidar)}")
    init = init or default_extrinsics(cfg)
    geom = cfg.geometry
    res = optimize_extrinsics(
        lidar, image, init, geom,
        gtol=cfg.calibration.gtol, xtol=cfg.calibration.xtol, max_iter=cfg.calibration.max_iter,
    )
    proj = reproject(lidar, res.extrinsics, geom, check=False)
    avg, rel = projection_quality_report(np.column_stack([proj.x, proj.y]), image, geom)
    report = res.to_dict()
    report.update({
        "n_correspondences": int(len(lidar)),
        "geometry": {"width": geom.width, "height": geom.height, "theta_min": geom.theta_min, "theta_max": geom.theta_max},
        "initial_extrinsics": init.to_dict(),
        "projection_quality": {"avg_pixel_error": avg, "relative_error_percent": rel},
    })
    io.write_json(output, report)
    if not res.converged:
        raise NumericalError(f"calibration did not converge: {res.message}")
    return report


# --- project --------------------------------------------------------------


def project(cloud_path, output, cfg: PipelineConfig, extrinsics: Extrinsics | None = None, png=None) -> DepthMap:
    xyz = io.read_point_cloud(cloud_path)
    if len(xyz) == 0:
        log.warning("point cloud %s is empty; writing an all-invalid map", cloud_path)
    depth = project_cloud(PointCloud(xyz), extrinsics or default_extrinsics(cfg), cfg.geometry)
    encoded = io.encode_png16(depth) if png else None
    io.write_raster(output, depth)
    if png:
        io.write_png16(png, depth, encoded=encoded)
    return depth


# --- complete -------------------------------------------------------------


def _sorted_files(directory, suffixes):
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in suffixes and not p.name.startswith("."))


def complete(clouds_dir, sparse_dir, output_dir, cfg: PipelineConfig, extrinsics: Extrinsics | None = None,
             transforms=None, threshold_mode: str = "sequence") -> dict:
    """Complete every sparse map of a sequence from its LiDAR clouds.

    Clouds and maps are paired in sorted filename order. ``transforms`` is an
    optional JSON file holding one 4x4 matrix per cloud, used by the
    ``transformed`` aggregation mode.
    """
    cloud_files = _sorted_files(clouds_dir, CLOUD_SUFFIXES)
    map_files = _sorted_files(sparse_dir, (RASTER_SUFFIX,))
    if len(cloud_files) != len(map_files):
        raise ValueError(f"{len(cloud_files)} clouds but {len(map_files)} sparse maps")
    if not cloud_files:
        raise DegenerateInputError("no input frames")
    mats = None
    if transforms is not None:
        mats = io.read_json(transforms)
        if len(mats) != len(cloud_files):
            raise ValueError(f"{len(mats)} transforms for {len(cloud_files)} clouds")
    clouds = [PointCloud(io.read_point_cloud(p), i, None if mats is None else mats[i]) for i, p in enumerate(cloud_files)]
    sparse = [io.read_raster(p) for p in map_files]
    geom = cfg.geometry.with_size(sparse[0].width, sparse[0].height)
    dense, stats, seq_thr = complete_sequence(
        clouds, sparse, geom, cfg.completion, extrinsics or default_extrinsics(cfg),
        threshold_mode=threshold_mode, workers=cfg.workers,
    )
    out = Path(output_dir)
    for path, d in zip(map_files, dense):
        io.write_raster(out / path.name, d)
        tag = io.read_scene_tag(path)
        if tag:
            io.write_json(io.sidecar_path(out / path.name), {"scene": tag})
    n_cand = sum(s.n_candidates for s in stats)
    summary = {
        "params": cfg.completion.to_dict(),
        "threshold_mode": threshold_mode,
        "sequence_threshold": _finite_or_none(seq_thr) if threshold_mode == "sequence" else None,
        "arip": sum(s.n_kept for s in stats) / n_cand if n_cand else 0.0,
        "labels_original": sum(s.labels_original for s in stats),
        "labels_completed": sum(s.labels_completed for s in stats),
        "frames": [{"name": p.name, **s.to_dict()} for p, s in zip(map_files, stats)],
    }
    io.write_json(out / "stats.json", summary)
    return summary


# --- evaluate -------------------------------------------------------------


def evaluate(pred_dir, gt_dir, output, completed_dir=None, want_lrce: bool = False, aggregate: str = "image") -> dict:
    if want_lrce and completed_dir is None:
        raise ValueError("LRCE needs depth-completed ground truth (--completed-gt)")
    gt_files = _sorted_files(gt_dir, (RASTER_SUFFIX,))
    if not gt_files:
        raise DegenerateInputError(f"no ground-truth maps in {gt_dir}")
    names = [p.name for p in gt_files]
    preds, gts, comps, tags = [], [], [], []
    for p in gt_files:
        pred_path = Path(pred_dir) / p.name
        if not pred_path.exists():
            raise FileNotFoundError(f"missing prediction {pred_path}")
        pred, gt = io.read_raster(pred_path), io.read_raster(p)
        if pred.values.shape != gt.values.shape:
            raise ValueError(f"{p.name}: prediction {pred.values.shape} vs ground truth {gt.values.shape}")
        preds.append(pred)
        gts.append(gt)
        tags.append(io.read_scene_tag(p))
        if completed_dir is not None:
            comp = io.read_raster(Path(completed_dir) / p.name)
            if comp.values.shape != gt.values.shape:
                raise ValueError(f"{p.name}: completed ground truth has a different size")
            comps.append(comp)
    report = evaluate_by_scene(preds, gts, tags, comps if completed_dir is not None else None, aggregate, names)
    report["unit"] = gts[0].unit
    report["aggregate"] = aggregate
    io.write_json(output, report)
    return report


# --- convert --------------------------------------------------------------


def convert(input_path, output, cfg: PipelineConfig, png=None) -> dict:
    """Depth to disparity or back, chosen by the input raster's channel."""
    src = io.read_raster(input_path)
    geom = cfg.geometry.with_size(src.width, src.height)
    theta = polar_angle_map(geom)[src.valid]
    baseline = cfg.rig.baseline
    values = np.zeros_like(src.values)
    flagged = 0
    if src.kind == DEPTH:
        values[src.valid] = depth_to_disparity(src.values[src.valid], theta, baseline)
        kind = DISPARITY
    else:
        lo, hi = cfg.disparity_clamp
        d = src.values[src.valid]
        r, flags = disparity_to_depth(d, theta, baseline, d_min=lo, return_flags=True)
        flagged = int(np.sum(flags))
        above = int(np.sum(d > hi))
        if above:
            log.warning("%d pixels exceed the %g° upper disparity bound", above, hi)
        values[src.valid] = r
        kind = DEPTH
    out = DepthMap(values, src.valid.copy(), kind)
    encoded = io.encode_png16(out) if png else None
    io.write_raster(output, out)
    if png:
        io.write_png16(png, out, encoded=encoded)
    if flagged:
        log.warning("%d pixels were at or below the %g° disparity clamp", flagged, cfg.disparity_clamp[0])
    info = {"output_kind": kind, "pixels": src.n_valid, "clamped_pixels": flagged}
    if kind == DISPARITY and out.n_valid:
        max_px = float(disparity_deg_to_pixels(out.values[out.valid].max(), cfg.full_height_px))
        info.update(max_disparity_px=max_px, cost_volume_cap=cost_volume_cap(max_px))
    return info


# --- simulate -------------------------------------------------------------


def simulate(scene_path, output_dir, cfg: PipelineConfig, frames: int = 1, n_correspondences: int = 0,
             noise_px: float = 0.0, extrinsics: Extrinsics | None = None) -> dict:
    """Render clouds, sparse/dense depth, disparity and correspondences for a scene file.

    Each frame gets a seeded azimuth phase of the LiDAR's channel pattern,
    as successive scans of a spinning sensor do.
    """
    if frames < 1:
        raise ValueError("frames must be >= 1")
    scene = Scene.load(scene_path)
    rig = SimRig(cfg.rig.baseline, cfg.rig.lidar_offset, cfg.lidar, cfg.geometry, (0.0, 0.0, 0.0),
                 extrinsics or default_extrinsics(cfg))
    rng = np.random.default_rng(cfg.seed)
    offsets = rng.uniform(0.0, cfg.lidar.delta_phi, size=frames)
    out = Path(output_dir)

    # the scene is static, so the camera renders are shared by every frame
    depth = render_depth_map(scene, rig.camera_center, rig.geom)
    disparity = gt_disparity_map(depth, rig.geom, rig.baseline)
    corr = None
    if n_correspondences:
        corr = make_correspondences(scene, rig, n_correspondences, noise_px, cfg.seed)

    def frame(i):
        cloud = render_lidar(scene, rig, float(offsets[i]), i)
        return cloud, project_cloud(cloud, rig.extrinsics, rig.geom)

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        rendered = list(pool.map(frame, range(frames)))

    tag = {"scene": scene.tag} if scene.tag else None
    for i, (cloud, sparse) in enumerate(rendered):
        name = f"frame_{i:04d}"
        io.write_point_cloud(out / "clouds" / f"{name}.bin", cloud.xyz)
        for sub, m in (("sparse", sparse), ("depth", depth), ("disparity", disparity)):
            path = out / sub / f"{name}{RASTER_SUFFIX}"
            io.write_raster(path, m)
            if tag:
                io.write_json(io.sidecar_path(path), tag)
    if corr is not None:
        io.write_correspondences(out / "correspondences.txt", *corr)
    io.write_json(out / "extrinsics.json", {"extrinsics": rig.extrinsics.to_dict()})
    manifest = {
        "scene": scene.to_dict(),
        "frames": frames,
        "seed": cfg.seed,
        "azimuth_offsets_deg": offsets.tolist(),
        "points_per_frame": [len(c) for c, _ in rendered],
        # worker count does not affect any output, so it is left out to keep runs byte-identical
        "config": {k: v for k, v in cfg.to_dict().items() if k != "workers"},
    }
    io.write_json(out / "manifest.json", manifest)
    return manifest


# --- colorize -------------------------------------------------------------


def colorize_file(input_path, output, colormap="turbo", vmin=None, vmax=None, mode="linear"):
    from PIL import Image

    src = io.read_raster(input_path)
    rgb = colorize(src, colormap, vmin, vmax, mode)
    with io.atomic_write(output, "wb") as fh:
        Image.fromarray(rgb).save(fh, format="PNG")
    return rgb


def with_overrides(cfg: PipelineConfig, seed=None, workers=None) -> PipelineConfig:
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if workers is not None:
        cfg = replace(cfg, workers=workers)
    return cfg

