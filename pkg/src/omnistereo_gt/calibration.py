"""LiDAR to bottom-camera extrinsic calibration by reprojection-error minimization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .bfgs import minimize_bfgs
from .errors import DegenerateInputError
from .geometry import EquirectGeometry, PixelCoord, cart_to_spherical, spherical_to_pixel


@dataclass
class Extrinsics:
    """Rigid transform ``p_cam = R p_lidar + T``.

    ``rotation`` is an axis-angle vector in radians, canonicalized to a norm
    of at most pi.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(3)
        if np.linalg.norm(rot) >= np.pi:
            rot = Rotation.from_rotvec(rot).as_rotvec()
        self.rotation = rot
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.rotation)) and np.all(np.isfinite(self.translation))):
            raise ValueError("extrinsics must be finite")

    @classmethod
    def identity(cls) -> "Extrinsics":
        return cls()

    @classmethod
    def from_matrix(cls, matrix, translation) -> "Extrinsics":
        return cls(Rotation.from_matrix(np.asarray(matrix, dtype=float)).as_rotvec(), translation)

    @classmethod
    def from_params(cls, params) -> "Extrinsics":
        params = np.asarray(params, dtype=float)
        return cls(params[:3], params[3:6])

    @property
    def matrix(self) -> np.ndarray:
        return Rotation.from_rotvec(self.rotation).as_matrix()

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.rotation, self.translation])

    def inverse(self) -> "Extrinsics":
        R = self.matrix
        return Extrinsics.from_matrix(R.T, -R.T @ self.translation)

    def as_homogeneous(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.matrix
        out[:3, 3] = self.translation
        return out

    def to_dict(self) -> dict:
        return {
            "rotation_vector": self.rotation.tolist(),
            "rotation_matrix": self.matrix.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Extrinsics":
        if "rotation_vector" in data:
            return cls(data["rotation_vector"], data["translation"])
        return cls.from_matrix(data["rotation_matrix"], data["translation"])


def transform_point(p, extr: Extrinsics) -> np.ndarray:
    """Map LiDAR-frame points of shape ``(..., 3)`` into the camera frame."""
    return np.asarray(p, dtype=float) @ extr.matrix.T + extr.translation


def reproject(p, extr: Extrinsics, geom: EquirectGeometry, check: bool = True) -> PixelCoord:
    """Project LiDAR-frame points onto the bottom equirectangular image."""
    sp = cart_to_spherical(transform_point(p, extr))
    return spherical_to_pixel(sp.theta, sp.phi, geom, check=check)


def pixel_distance(a, b, width: float) -> np.ndarray:
    """Euclidean pixel distance with the horizontal offset taken across the seam if shorter.

    ``a`` and ``b`` are arrays of shape ``(..., 2)`` holding ``(x, y)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dx = a[..., 0] - b[..., 0]
    dx = dx - width * np.round(dx / width)
    return np.hypot(dx, a[..., 1] - b[..., 1])


def _as_correspondences(lidar_points, image_points):
    lidar_points = np.atleast_2d(np.asarray(lidar_points, dtype=float))
    image_points = np.atleast_2d(np.asarray(image_points, dtype=float))
    if lidar_points.size == 0:
        raise DegenerateInputError("correspondence set is empty")
    if lidar_points.shape[1] != 3 or image_points.shape[1] != 2 or len(lidar_points) != len(image_points):
        raise ValueError("expected (n, 3) LiDAR points and (n, 2) image points")
    return lidar_points, image_points


def residuals(lidar_points, image_points, extr: Extrinsics, geom: EquirectGeometry) -> np.ndarray:
    """Per-correspondence pixel error between observed and reprojected points."""
    lidar_points, image_points = _as_correspondences(lidar_points, image_points)
    proj = reproject(lidar_points, extr, geom, check=False)
    return pixel_distance(np.stack([proj.x, proj.y], axis=-1), image_points, geom.width)


def total_error(lidar_points, image_points, extr: Extrinsics, geom: EquirectGeometry) -> float:
    return float(np.sum(residuals(lidar_points, image_points, extr, geom) ** 2))


@dataclass
class CalibrationResult:
    extrinsics: Extrinsics
    total_error: float
    per_point_errors: np.ndarray
    iterations: int
    converged: bool
    initial_error: float = float("nan")
    message: str = ""

    @property
    def mean_error(self) -> float:
        return float(np.mean(self.per_point_errors))

    def to_dict(self) -> dict:
        return {
            "extrinsics": self.extrinsics.to_dict(),
            "total_error_px2": self.total_error,
            "initial_error_px2": self.initial_error,
            "mean_error_px": self.mean_error,
            "per_point_errors_px": self.per_point_errors.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
        }


def _check_well_posed(lidar_points):
    if len(lidar_points) < 3:
        raise DegenerateInputError(
            f"need at least 3 correspondences, got {len(lidar_points)}"
        )
    centered = lidar_points - lidar_points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-300):
        raise DegenerateInputError("correspondences are collinear")


def optimize_extrinsics(
    lidar_points,
    image_points,
    init: Extrinsics,
    geom: EquirectGeometry,
    gtol: float = 1e-8,
    xtol: float = 1e-10,
    max_iter: int = 500,
    rel_step: float = 1e-6,
) -> CalibrationResult:
    """Refine ``init`` by minimizing the summed squared reprojection error.

    The six parameters (axis-angle rotation, translation) are optimized with
    BFGS on central finite-difference gradients.

    Raises:
        DegenerateInputError: fewer than three or collinear correspondences.
    """
    lidar_points, image_points = _as_correspondences(lidar_points, image_points)
    _check_well_posed(lidar_points)

    def objective(params):
        return total_error(lidar_points, image_points, Extrinsics.from_params(params), geom)

    x0 = init.params
    e0 = objective(x0)
    res = minimize_bfgs(objective, x0, gtol=gtol, xtol=xtol, max_iter=max_iter, rel_step=rel_step)
    best = Extrinsics.from_params(res.x)
    errs = residuals(lidar_points, image_points, best, geom)
    e = float(np.sum(errs ** 2))
    if not e <= e0:
        # the minimizer only accepts decreasing steps; this guards against NaN paths
        best, errs, e = init, residuals(lidar_points, image_points, init, geom), e0
    return CalibrationResult(best, e, errs, res.nit, res.converged, e0, res.message)


def projection_quality_report(projected, observed, geom: EquirectGeometry) -> tuple[float, float]:
    """Mean pixel error and that error as a percentage of the image diagonal."""
    projected = np.atleast_2d(np.asarray(projected, dtype=float))
    observed = np.atleast_2d(np.asarray(observed, dtype=float))
    if projected.size == 0:
        raise DegenerateInputError("no point pairs to assess")
    err = float(np.mean(pixel_distance(projected, observed, geom.width)))
    return err, err / geom.diagonal * 100.0
