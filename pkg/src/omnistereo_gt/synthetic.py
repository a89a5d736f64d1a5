"""Analytic scene simulator used as ground truth for the rest of the package.

Scenes are built from a few primitives with closed-form ray intersections,
expressed in a z-up world frame. The bottom camera is axis-aligned with the
world; the LiDAR pose is given by the LiDAR-to-camera extrinsics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import Extrinsics, reproject
from .completion import PointCloud, RigConfig
from .errors import DegenerateInputError
from .geometry import EquirectGeometry, depth_to_disparity, pixel_centers, polar_angle_map, unit_direction
from .rasters import DISPARITY, DepthMap

EPS = 1e-9


def _first_positive(*ts):
    """Smallest candidate distance greater than ``EPS`` (inf if none)."""
    best = np.full(np.shape(ts[0]), np.inf)
    for t in ts:
        t = np.where(np.isfinite(t) & (t > EPS), t, np.inf)
        best = np.minimum(best, t)
    return best


@dataclass(frozen=True)
class GroundPlane:
    height: float

    def intersect(self, o, d):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.height - o[..., 2]) / d[..., 2]
        return _first_positive(np.where(d[..., 2] != 0, t, np.inf))

    def to_dict(self):
        return {"type": "plane", "height": self.height}


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def intersect(self, o, d):
        oc = o - np.asarray(self.center, dtype=float)
        b = np.sum(oc * d, axis=-1)
        c = np.sum(oc * oc, axis=-1) - self.radius ** 2
        disc = b * b - c
        sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
        return _first_positive(-b - sq, -b + sq)

    def to_dict(self):
        return {"type": "sphere", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by opposite corners."""

    min: tuple
    max: tuple

    def intersect(self, o, d):
        lo = np.asarray(self.min, dtype=float)
        hi = np.asarray(self.max, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t1 = (lo - o) * inv
            t2 = (hi - o) * inv
        # a ray parallel to a slab is inside it or misses entirely
        inside_slab = (o >= lo) & (o <= hi)
        t1 = np.where(d == 0, np.where(inside_slab, -np.inf, np.inf), t1)
        t2 = np.where(d == 0, np.inf, t2)
        t_near = np.max(np.minimum(t1, t2), axis=-1)
        t_far = np.min(np.maximum(t1, t2), axis=-1)
        hit = t_far >= np.maximum(t_near, 0.0)
        return _first_positive(np.where(hit, t_near, np.inf), np.where(hit, t_far, np.inf))

    def to_dict(self):
        return {"type": "box", "min": list(self.min), "max": list(self.max)}


@dataclass(frozen=True)
class Cylinder:
    """Vertical capped cylinder."""

    center: tuple  # (x, y)
    radius: float
    z_min: float
    z_max: float

    def intersect(self, o, d):
        cx, cy = self.center
        ox, oy, oz = o[..., 0] - cx, o[..., 1] - cy, o[..., 2]
        dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]
        a = dx * dx + dy * dy
        b = ox * dx + oy * dy
        c = ox * ox + oy * oy - self.radius ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = b * b - a * c
            sq = np.sqrt(np.where((disc >= 0) & (a > 0), disc, np.nan))
            side = []
            for t in ((-b - sq) / a, (-b + sq) / a):
                z = oz + t * dz
                side.append(np.where((z >= self.z_min) & (z <= self.z_max), t, np.inf))
            caps = []
            for zc in (self.z_min, self.z_max):
                t = (zc - oz) / dz
                x = ox + t * dx
                y = oy + t * dy
                caps.append(np.where((dz != 0) & (x * x + y * y <= self.radius ** 2), t, np.inf))
        return _first_positive(*side, *caps)

    def to_dict(self):
        return {"type": "cylinder", "center": list(self.center), "radius": self.radius,
                "z_min": self.z_min, "z_max": self.z_max}


_PRIMITIVES = {
    "plane": lambda d: GroundPlane(float(d["height"])),
    "sphere": lambda d: Sphere(tuple(map(float, d["center"])), float(d["radius"])),
    "box": lambda d: Box(tuple(map(float, d["min"])), tuple(map(float, d["max"]))),
    "cylinder": lambda d: Cylinder(tuple(map(float, d["center"])), float(d["radius"]),
                                   float(d["z_min"]), float(d["z_max"])),
}


@dataclass
class Scene:
    primitives: list = field(default_factory=list)
    tag: str | None = None

    def raycast(self, origin, directions) -> np.ndarray:
        """Distance to the nearest hit along each unit direction (inf on a miss)."""
        d = np.asarray(directions, dtype=float)
        o = np.broadcast_to(np.asarray(origin, dtype=float), d.shape)
        best = np.full(d.shape[:-1], np.inf)
        for prim in self.primitives:
            best = np.minimum(best, prim.intersect(o, d))
        return best

    def to_dict(self) -> dict:
        out = {"primitives": [p.to_dict() for p in self.primitives]}
        if self.tag:
            out["tag"] = self.tag
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        prims = []
        for i, p in enumerate(data.get("primitives", [])):
            kind = p.get("type")
            if kind not in _PRIMITIVES:
                raise ValueError(f"primitive {i}: unknown type {kind!r}")
            try:
                prims.append(_PRIMITIVES[kind](p))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"primitive {i} ({kind}): {exc}") from None
        return cls(prims, data.get("tag"))

    @classmethod
    def load(cls, path) -> "Scene":
        return cls.from_dict(json.loads(Path(path).read_text()))


def raycast(origin, direction, scene: Scene):
    """Nearest hit distance for a single ray, or ``None`` on a miss."""
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    t = float(scene.raycast(origin, direction[None, :])[0])
    return t if np.isfinite(t) else None


def demo_scene(tag: str = "outdoor") -> Scene:
    """Ground plane plus a sphere, a cylinder and a box around the rig."""
    return Scene([
        GroundPlane(-1.6),
        Sphere((4.0, 1.0, -0.6), 1.0),
        Cylinder((-3.0, -3.0), 0.8, -1.6, 1.5),
        Box((1.0, -6.0, -1.6), (3.0, -4.0, 0.4)),
    ], tag)


def enclosing_sphere(radius: float, center=(0.0, 0.0, 0.0)) -> Scene:
    return Scene([Sphere(tuple(center), radius)])


@dataclass
class SimRig:
    """Camera pair plus LiDAR. ``camera_center`` is the bottom camera in world coordinates."""

    baseline: float = 0.191
    lidar_offset: float = 0.450
    lidar: RigConfig = field(default_factory=RigConfig)
    geom: EquirectGeometry = field(default_factory=EquirectGeometry.dataset)
    camera_center: tuple = (0.0, 0.0, 0.0)
    extrinsics: Extrinsics | None = None

    def __post_init__(self):
        if self.extrinsics is None:
            # LiDAR axis-aligned with the camera, mounted below it
            self.extrinsics = Extrinsics(np.zeros(3), [0.0, 0.0, -self.lidar_offset])

    @property
    def lidar_origin(self) -> np.ndarray:
        return np.asarray(self.camera_center, dtype=float) + self.extrinsics.translation

    @property
    def top_camera_center(self) -> np.ndarray:
        return np.asarray(self.camera_center, dtype=float) + np.array([0.0, 0.0, self.baseline])

    def beam_angles(self, azimuth_offset: float = 0.0):
        """Polar angle per beam and azimuth per channel, degrees."""
        cfg = self.lidar
        top = 90.0 - cfg.fov_v / 2.0
        theta = top + (np.arange(cfg.n_beams) + 0.5) * cfg.delta_theta
        phi = -180.0 + (np.arange(cfg.n_channels_h) + 0.5) * cfg.delta_phi + azimuth_offset
        return theta, np.mod(phi + 180.0, 360.0) - 180.0


def render_lidar(scene: Scene, rig: SimRig, azimuth_offset: float = 0.0, frame_index: int = 0) -> PointCloud:
    """One ray per (beam, channel); hits are returned in the LiDAR frame."""
    theta, phi = rig.beam_angles(azimuth_offset)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    d_lidar = unit_direction(tt.ravel(), pp.ravel())
    d_world = d_lidar @ rig.extrinsics.matrix.T
    t = scene.raycast(rig.lidar_origin, d_world)
    hit = np.isfinite(t)
    cloud = PointCloud(d_lidar[hit] * t[hit][:, None], frame_index)
    cloud.meta["azimuth_offset"] = float(azimuth_offset)
    return cloud


def render_depth_at(scene: Scene, center, theta, phi) -> np.ndarray:
    """Hit distance from ``center`` along the given directions (inf on a miss)."""
    return scene.raycast(center, unit_direction(theta, phi))


def render_depth_map(scene: Scene, camera_center, geom: EquirectGeometry) -> DepthMap:
    """Dense depth map with one ray through each pixel center."""
    rows, cols = pixel_centers(geom)
    tt, pp = np.meshgrid(rows, cols, indexing="ij")
    t = render_depth_at(scene, camera_center, tt, pp)
    valid = np.isfinite(t)
    return DepthMap(np.where(valid, t, 0.0), valid)


def gt_disparity_map(depth: DepthMap, geom: EquirectGeometry, baseline: float) -> DepthMap:
    """Per-pixel spherical disparity in degrees from a bottom-camera depth map."""
    if (depth.height, depth.width) != (geom.height, geom.width):
        raise ValueError("depth map and geometry disagree on raster size")
    theta = polar_angle_map(geom)
    out = np.zeros_like(depth.values)
    out[depth.valid] = depth_to_disparity(depth.values[depth.valid], theta[depth.valid], baseline)
    return DepthMap(out, depth.valid.copy(), DISPARITY)


def make_correspondences(
    scene: Scene,
    rig: SimRig,
    n: int,
    noise_px: float = 0.0,
    seed: int = 0,
    extr_true: Extrinsics | None = None,
    margin_px: float = 2.0,
):
    """Sample ``n`` LiDAR hits and pair them with their image positions.

    Image points are the exact reprojections under the true extrinsics plus
    optional Gaussian noise of ``noise_px`` pixels per axis. Points closer
    than ``margin_px`` to the top or bottom raster edge are not sampled.

    Returns:
        ``(lidar_points (n, 3), image_points (n, 2))``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if extr_true is not None:
        rig = SimRig(rig.baseline, rig.lidar_offset, rig.lidar, rig.geom, rig.camera_center, extr_true)
    cloud = render_lidar(scene, rig)
    px = reproject(cloud.xyz, rig.extrinsics, rig.geom, check=False) if len(cloud) else None
    ok = np.zeros(len(cloud), dtype=bool) if px is None else (
        (px.y >= margin_px) & (px.y <= rig.geom.height - margin_px)
    )
    idx = np.flatnonzero(ok)
    if len(idx) < n:
        raise DegenerateInputError(f"scene yields {len(idx)} usable LiDAR hits, {n} requested")
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(idx, size=n, replace=False))
    image = np.column_stack([px.x[pick], px.y[pick]])
    if noise_px > 0:
        image = image + rng.normal(0.0, noise_px, size=image.shape)
    image[:, 0] = np.mod(image[:, 0], rig.geom.width)
    image[:, 1] = np.clip(image[:, 1], 0.0, rig.geom.height)
    return cloud.xyz[pick], image
