"""Spherical and equirectangular geometry for a top-bottom 360° stereo rig.

Conventions used throughout the package:

* z points up, the polar angle ``theta`` is measured from +z and the azimuth
  ``phi = atan2(y, x)`` lies in ``[-180, 180)``. All angles are in degrees.
* Equirectangular rasters map azimuth linearly onto columns and the polar
  angle linearly onto rows; ``x = 0`` is azimuth -180° and ``y = 0`` is the
  top of the covered band. Pixel ``(i, j)`` has its center at continuous
  coordinate ``(j + 0.5, i + 0.5)``.

Functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInputError, NumericalError, OutOfBandError

# Disparity clamp used when training on the dataset (degrees).
DISPARITY_MIN_DEG = 0.048
DISPARITY_MAX_DEG = 23.0
# Height in pixels of the full-sphere raster the degree/pixel conversion refers to.
FULL_HEIGHT_PX = 960


class SphericalPoint(NamedTuple):
    r: np.ndarray | float
    theta: np.ndarray | float
    phi: np.ndarray | float


class PixelCoord(NamedTuple):
    x: np.ndarray | float
    y: np.ndarray | float


@dataclass(frozen=True)
class EquirectGeometry:
    """Size of an equirectangular raster and the polar band it covers."""

    width: int
    height: int
    theta_min: float = 0.0
    theta_max: float = 180.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"raster size must be positive, got {self.width}x{self.height}")
        if not 0.0 <= self.theta_min < self.theta_max <= 180.0:
            raise ValueError(
                f"invalid polar band [{self.theta_min}, {self.theta_max}]"
            )

    @classmethod
    def full_sphere(cls, width: int, height: int) -> "EquirectGeometry":
        return cls(width, height, 0.0, 180.0)

    @classmethod
    def dataset(cls) -> "EquirectGeometry":
        """The 1920x512 crop over theta in [48°, 144°]."""
        return cls(1920, 512, 48.0, 144.0)

    @property
    def band(self) -> float:
        return self.theta_max - self.theta_min

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.width, self.height))

    def with_size(self, width: int, height: int) -> "EquirectGeometry":
        return EquirectGeometry(width, height, self.theta_min, self.theta_max)


@dataclass(frozen=True)
class RigGeometry:
    """Physical layout of the camera pair and the LiDAR.

    Attributes:
        baseline: vertical distance between the two camera centers, meters.
        lidar_offset: distance of the LiDAR below the bottom camera, meters.
    """

    baseline: float = 0.191
    lidar_offset: float = 0.450

    def __post_init__(self):
        if not self.baseline > 0:
            raise ValueError(f"baseline must be positive, got {self.baseline}")


def wrap_azimuth(phi):
    """Reduce azimuths (degrees) to ``[-180, 180)``."""
    out = np.mod(np.asarray(phi, dtype=float) + 180.0, 360.0) - 180.0
    # np.mod can return exactly 360.0 for tiny negative inputs
    out = np.where(out >= 180.0, out - 360.0, out)
    return out if np.ndim(out) else float(out)


def cart_to_spherical(p) -> SphericalPoint:
    """Convert cartesian points of shape ``(..., 3)`` to (r, theta, phi)."""
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    rho = np.hypot(x, y)
    r = np.hypot(rho, z)
    if np.any(r == 0):
        raise DegenerateInputError("cannot convert a zero-length vector to spherical coordinates")
    # atan2 stays well conditioned near the poles, unlike arccos(z / r)
    theta = np.degrees(np.arctan2(rho, z))
    phi = wrap_azimuth(np.degrees(np.arctan2(y, x)))
    if p.ndim == 1:
        return SphericalPoint(float(r), float(theta), float(phi))
    return SphericalPoint(r, theta, np.asarray(phi))


def spherical_to_cart(r, theta, phi) -> np.ndarray:
    """Inverse of :func:`cart_to_spherical`; returns an array of shape ``(..., 3)``."""
    t = np.radians(np.asarray(theta, dtype=float))
    f = np.radians(np.asarray(phi, dtype=float))
    r = np.asarray(r, dtype=float)
    s = np.sin(t)
    return np.stack([r * s * np.cos(f), r * s * np.sin(f), r * np.cos(t)], axis=-1)


def unit_direction(theta, phi) -> np.ndarray:
    return spherical_to_cart(1.0, theta, phi)


def in_band(theta, geom: EquirectGeometry):
    theta = np.asarray(theta, dtype=float)
    return (theta >= geom.theta_min) & (theta <= geom.theta_max)


def spherical_to_pixel(theta, phi, geom: EquirectGeometry, check: bool = True) -> PixelCoord:
    """Project directions onto continuous equirectangular pixel coordinates.

    With ``check=False`` polar angles outside the band are extrapolated
    linearly instead of raising, which the calibration objective relies on.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if check and not np.all(in_band(theta, geom)):
        bad = theta[~in_band(theta, geom)] if theta.ndim else theta
        raise OutOfBandError(
            f"polar angle {np.ravel(bad)[0]:.6g}° outside [{geom.theta_min}, {geom.theta_max}]"
        )
    x = (phi + 180.0) / 360.0 * geom.width
    y = (theta - geom.theta_min) / geom.band * geom.height
    if x.ndim == 0:
        return PixelCoord(float(x), float(y))
    return PixelCoord(x, y)


def pixel_to_spherical_direction(x, y, geom: EquirectGeometry) -> SphericalPoint:
    """Unit-radius direction through continuous pixel coordinate ``(x, y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any((x < 0) | (x > geom.width) | (y < 0) | (y > geom.height)):
        raise OutOfBandError(f"pixel coordinate outside the {geom.width}x{geom.height} raster")
    phi = wrap_azimuth(x / geom.width * 360.0 - 180.0)
    theta = geom.theta_min + y / geom.height * geom.band
    if x.ndim == 0 and y.ndim == 0:
        return SphericalPoint(1.0, float(theta), float(phi))
    return SphericalPoint(np.ones(np.broadcast(x, y).shape), theta, np.asarray(phi))


def pixel_centers(geom: EquirectGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Polar angle per row and azimuth per column at pixel centers."""
    rows = geom.theta_min + (np.arange(geom.height) + 0.5) / geom.height * geom.band
    cols = (np.arange(geom.width) + 0.5) / geom.width * 360.0 - 180.0
    return rows, cols


def polar_angle_map(geom: EquirectGeometry) -> np.ndarray:
    """Raster of shape ``(H, W)`` holding each pixel center's polar angle."""
    rows, _ = pixel_centers(geom)
    return np.repeat(rows[:, None], geom.width, axis=1)


def depth_to_disparity(r, theta_b, baseline):
    """Spherical disparity in degrees for a point at distance ``r`` from the bottom camera.

    ``theta_b`` is the point's polar angle seen from the bottom camera. The
    two-argument arctangent keeps the result in (0°, 180°) and returns
    exactly 90° where the denominator vanishes.
    """
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise DegenerateInputError("depth must be positive")
    if not baseline > 0:
        raise DegenerateInputError("baseline must be positive")
    t = np.radians(np.asarray(theta_b, dtype=float))
    d = np.degrees(np.arctan2(np.sin(t), r / baseline - np.cos(t)))
    return d if np.ndim(d) else float(d)


def disparity_to_depth(d, theta_b, baseline, d_min=None, return_flags=False):
    """Depth in meters from spherical disparity in degrees.

    Args:
        d: disparity, degrees, in (0, 180).
        theta_b: polar angle from the bottom camera, degrees.
        baseline: camera baseline, meters.
        d_min: optional lower clamp. Disparities at or below it are inverted
            as ``d_min`` (finite depth) and flagged.
        return_flags: also return the boolean clamp flags.

    Raises:
        DegenerateInputError: ``d <= 0`` without a clamp (infinite depth).
        NumericalError: the inverted depth is not positive.
    """
    d = np.asarray(d, dtype=float)
    flags = np.zeros(d.shape, dtype=bool)
    if d_min is not None:
        flags = d <= d_min
        d = np.where(flags, d_min, d)
    if np.any(~(d > 0)):
        raise DegenerateInputError("disparity must be positive; zero disparity means infinite depth")
    t = np.radians(np.asarray(theta_b, dtype=float))
    r = baseline * (np.cos(t) + np.sin(t) / np.tan(np.radians(d)))
    if np.any(~(r > 0)):
        raise NumericalError("disparity and polar angle imply a non-positive depth")
    if np.ndim(r) == 0:
        r = float(r)
        flags = bool(flags)
    return (r, flags) if return_flags else r


def disparity_deg_to_pixels(d_deg, full_height: int = FULL_HEIGHT_PX):
    """Convert angular disparity to vertical pixel shift on the full-height raster."""
    out = full_height * np.asarray(d_deg, dtype=float) / 180.0
    return out if np.ndim(out) else float(out)


def disparity_pixels_to_deg(d_pix, full_height: int = FULL_HEIGHT_PX):
    out = 180.0 * np.asarray(d_pix, dtype=float) / full_height
    return out if np.ndim(out) else float(out)


def cost_volume_cap(max_disparity_px: float, multiple: int = 32) -> int:
    """Smallest multiple of ``multiple`` strictly larger than ``max_disparity_px``."""
    return int(np.floor(max_disparity_px / multiple) + 1) * multiple


def circular_pad(raster, pad: int) -> np.ndarray:
    """Pad a raster horizontally with wrapped-around columns.

    Output column ``j`` holds input column ``(j + W - pad) mod W``; works for
    arrays shaped ``(H, W)`` or ``(H, W, C)``.
    """
    raster = np.asarray(raster)
    width = raster.shape[1]
    if pad < 0 or pad > width:
        raise ValueError(f"padding {pad} must lie in [0, {width}]")
    if pad == 0:
        return raster.copy()
    return np.concatenate([raster[:, width - pad:], raster, raster[:, :pad]], axis=1)


def crop_padding(raster, pad: int) -> np.ndarray:
    raster = np.asarray(raster)
    return raster[:, pad:raster.shape[1] - pad].copy()
