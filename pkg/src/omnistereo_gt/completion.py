"""Sparse-to-dense depth completion on the LiDAR sphere.

Pipeline per frame: aggregate neighboring scans, interpolate depth on a
near-uniform spherical query grid from the k nearest measurements, reject
queries that are uncertain or far from any measurement, then project the
survivors into the bottom equirectangular image.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .calibration import Extrinsics, transform_point
from .errors import DegenerateInputError
from .geometry import (
    EquirectGeometry,
    cart_to_spherical,
    in_band,
    spherical_to_cart,
    spherical_to_pixel,
    wrap_azimuth,
)
from .knn import SphericalIndex
from .metrics import inlier_ratio, point_metrics
from .rasters import DepthMap, splat_min

# rejection reasons stored per query point
KEPT = 0
OUT_OF_BAND = 1
OUT_OF_DISTRIBUTION = 2
UNCERTAIN = 3

GOLDEN_ANGLE_DEG = 180.0 * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class RigConfig:
    """Angular sampling of the spinning LiDAR."""

    fov_v: float = 42.4
    n_beams: int = 64
    fov_h: float = 360.0
    n_channels_h: int = 1024
    frame_rate: float = 10.0

    def __post_init__(self):
        if min(self.fov_v, self.fov_h, self.n_beams, self.n_channels_h, self.frame_rate) <= 0:
            raise ValueError("rig angles, counts and frame rate must be positive")

    @property
    def delta_theta(self) -> float:
        return self.fov_v / self.n_beams

    @property
    def delta_phi(self) -> float:
        return self.fov_h / self.n_channels_h


@dataclass(frozen=True)
class CompletionParams:
    """Depth-completion hyperparameters.

    Attributes:
        m: number of preceding and succeeding scans aggregated with the current one.
        k: neighbors used for interpolation.
        rip: target ratio of interpolated points kept by the uncertainty filter.
        t_ood: maximum mean neighbor distance, degrees.
        n_grid: size of the full-sphere query lattice.
        t_theta: polar margin; queries outside [t_theta, 180 - t_theta] are dropped.
        t_inlier: inlier threshold (relative error unless ``inlier_mode`` is "absolute").
    """

    m: int = 4
    k: int = 17
    rip: float = 0.8
    t_ood: float = 0.375
    n_grid: int = 20_000_000
    t_theta: float = 68.8
    t_inlier: float = 0.01
    inlier_mode: str = "relative"
    aggregation: str = "no_movement"

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.rip <= 1.0:
            raise ValueError("rip must lie in [0, 1]")
        if not self.t_ood > 0:
            raise ValueError("t_ood must be positive")
        if self.n_grid < 1:
            raise ValueError("n_grid must be >= 1")
        if not 0.0 <= self.t_theta < 90.0:
            raise ValueError("t_theta must lie in [0, 90)")
        if self.t_inlier < 0:
            raise ValueError("t_inlier must be non-negative")
        if self.inlier_mode not in ("relative", "absolute"):
            raise ValueError("inlier_mode must be 'relative' or 'absolute'")
        if self.aggregation not in AGGREGATORS:
            raise ValueError(f"unknown aggregation mode {self.aggregation!r}")

    def replace(self, **changes) -> "CompletionParams":
        return CompletionParams(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PointCloud:
    """Points in a sensor frame (meters) with an optional pose.

    ``transform`` is a 4x4 matrix taking this cloud's frame into a common
    frame; it is only needed for transformed aggregation.
    """

    xyz: np.ndarray
    frame_index: int = 0
    transform: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=float).reshape(-1, 3)
        if self.transform is not None:
            self.transform = np.asarray(self.transform, dtype=float).reshape(4, 4)
        self._sph = None

    def __len__(self) -> int:
        return len(self.xyz)

    @classmethod
    def from_spherical(cls, r, theta, phi, frame_index: int = 0) -> "PointCloud":
        return cls(spherical_to_cart(r, theta, phi).reshape(-1, 3), frame_index)

    @property
    def spherical(self):
        if self._sph is None:
            if len(self) == 0:
                empty = np.empty(0)
                self._sph = (empty, empty, empty)
            else:
                self._sph = tuple(cart_to_spherical(self.xyz))
        return self._sph

    @property
    def r(self) -> np.ndarray:
        return self.spherical[0]

    @property
    def theta(self) -> np.ndarray:
        return self.spherical[1]

    @property
    def phi(self) -> np.ndarray:
        return self.spherical[2]

    def subset(self, idx) -> "PointCloud":
        return PointCloud(self.xyz[idx], self.frame_index, self.transform, dict(self.meta))


# --- temporal aggregation -------------------------------------------------


def _aggregate_no_movement(clouds, center):
    return [c.xyz for c in clouds]


def _aggregate_transformed(clouds, center):
    if center.transform is None or any(c.transform is None for c in clouds):
        raise ValueError("transformed aggregation needs a transform on every cloud")
    to_center = np.linalg.inv(center.transform)
    out = []
    for c in clouds:
        T = to_center @ c.transform
        out.append(c.xyz @ T[:3, :3].T + T[:3, 3])
    return out


AGGREGATORS = {
    "no_movement": _aggregate_no_movement,
    "transformed": _aggregate_transformed,
}


def temporal_aggregate(clouds: Sequence[PointCloud], center: int, m: int, mode: str = "no_movement") -> PointCloud:
    """Fuse the clouds ``center - m .. center + m`` into the center cloud's frame.

    The window is truncated at the sequence ends; the realized window is
    stored in ``meta["window"]``.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    if not 0 <= center < len(clouds):
        raise IndexError(f"center {center} outside sequence of {len(clouds)} clouds")
    lo, hi = max(0, center - m), min(len(clouds) - 1, center + m)
    parts = AGGREGATORS[mode](clouds[lo:hi + 1], clouds[center])
    xyz = np.concatenate(parts, axis=0) if parts else np.empty((0, 3))
    c = clouds[center]
    meta = {"window": [lo, hi], "truncated": (hi - lo) != 2 * m, "mode": mode}
    return PointCloud(xyz, c.frame_index, c.transform, meta)


# --- interpolation, uncertainty, out-of-distribution distance --------------


def interpolate_depth(distances, radii):
    """Inverse-distance weighted depth from neighbor distances and depths.

    Works on the last axis, so ``(k,)`` or ``(Q, k)`` inputs are accepted.
    Rows with one or more zero distances use equal weights over the exact
    hits only.

    Returns:
        ``(r_q, weights)``.
    """
    distances = np.asarray(distances, dtype=float)
    radii = np.asarray(radii, dtype=float)
    hit = distances == 0
    any_hit = hit.any(axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        inv = np.where(any_hit, hit.astype(float), 1.0 / np.where(hit, 1.0, distances))
    weights = inv / inv.sum(axis=-1, keepdims=True)
    r_q = np.sum(weights * radii, axis=-1)
    return r_q, weights


def uncertainty(r_q, radii, weights):
    """Relative weighted variance of the neighbor depths around ``r_q``."""
    r_q = np.asarray(r_q, dtype=float)
    if np.any(r_q == 0):
        raise DegenerateInputError("interpolated depth is zero")
    rel = (r_q[..., None] - np.asarray(radii, dtype=float)) / r_q[..., None]
    out = np.sum(np.asarray(weights) * rel ** 2, axis=-1)
    return out if np.ndim(out) else float(out)


def ood_distance(distances):
    """Mean distance to the neighbors."""
    out = np.mean(np.asarray(distances, dtype=float), axis=-1)
    return out if np.ndim(out) else float(out)


class OODThreshold(NamedTuple):
    t_ood: float
    delta_theta: float
    delta_phi: float
    n_neighbors_grid: float


def derive_ood_threshold(rig: RigConfig, m: int, k: int) -> OODThreshold:
    """Distance from a cell center to the corners of the LiDAR's angular grid."""
    dt, dp = rig.delta_theta, rig.delta_phi
    return OODThreshold(math.hypot(dt / 2, dp / 2), dt, dp, k / (2 * m + 1))


def ood_threshold_for_neighbors(rig: RigConfig, n_neighbors: float, samples: int = 41) -> float:
    """Largest mean distance from any query position to its nearest LiDAR grid samples.

    Generalizes the half-cell-diagonal threshold, which is the two-neighbor
    case, to ``ceil(n_neighbors)`` samples per scan, e.g. ``k / (2m + 1)``
    for aggregation windows other than the default. The maximum is taken
    over a ``samples x samples`` sweep of one grid cell.
    """
    n = max(1, math.ceil(n_neighbors - 1e-9))
    reach = math.isqrt(n) + 3
    ii, jj = np.meshgrid(np.arange(-reach, reach + 1), np.arange(-reach, reach + 1), indexing="ij")
    nodes_t = (ii * rig.delta_theta).ravel()
    nodes_p = (jj * rig.delta_phi).ravel()
    a, b = np.meshgrid(np.linspace(0, rig.delta_theta, samples), np.linspace(0, rig.delta_phi, samples), indexing="ij")
    d = np.hypot(a.ravel()[:, None] - nodes_t, b.ravel()[:, None] - nodes_p)
    d = np.partition(d, n - 1, axis=1)[:, :n]
    return float(d.mean(axis=1).max())


def derive_theta_limit(fov_v: float) -> float:
    if not 0 < fov_v <= 180:
        raise ValueError("vertical field of view must lie in (0, 180]")
    return (180.0 - fov_v) / 2.0


def generate_query_grid(n_grid: int, t_theta: float = 0.0):
    """Fibonacci-lattice directions restricted to ``theta in [t_theta, 180 - t_theta]``.

    The lattice is built for the full sphere, so the kept count is about
    ``n_grid`` times the band's solid-angle fraction. Only the contiguous
    index range inside the band is materialized.
    """
    if n_grid < 1:
        raise ValueError("n_grid must be >= 1")
    c = math.cos(math.radians(t_theta))
    # z_i = 1 - (2i + 1) / n decreases with i; keep z in [-c, c] with a margin of one index
    i_lo = max(0, math.floor((n_grid * (1 - c) - 1) / 2) - 1)
    i_hi = min(n_grid, math.ceil((n_grid * (1 + c) - 1) / 2) + 2)
    i = np.arange(i_lo, i_hi, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / n_grid
    theta = np.degrees(np.arccos(z))
    phi = wrap_azimuth(np.mod(i * GOLDEN_ANGLE_DEG, 360.0))
    keep = (theta >= t_theta) & (theta <= 180.0 - t_theta)
    return theta[keep], np.asarray(phi)[keep]


def uncertainty_threshold_for_rip(sigma_sq, rip: float) -> float:
    """Uncertainty value below which a fraction ``rip`` of the points falls.

    Uses the linearly interpolated quantile. ``rip == 0`` yields ``-inf`` so
    nothing survives.
    """
    sigma_sq = np.asarray(sigma_sq, dtype=float).ravel()
    if sigma_sq.size == 0:
        raise DegenerateInputError("no uncertainty values")
    if not 0.0 <= rip <= 1.0:
        raise ValueError("rip must lie in [0, 1]")
    if rip == 0:
        return -math.inf
    return float(np.quantile(sigma_sq, rip, method="linear"))


@dataclass
class QueryResults:
    """Per-query interpolation output for one cloud (arrays of equal length)."""

    theta: np.ndarray
    phi: np.ndarray
    r: np.ndarray
    sigma_sq: np.ndarray
    d_q: np.ndarray
    band: np.ndarray  # inside the polar band
    candidate: np.ndarray  # inside the band and within the OOD distance

    def __len__(self):
        return len(self.theta)

    def decide(self, threshold: float):
        """Return ``(kept, reason)`` for a given uncertainty threshold."""
        reason = np.full(len(self), KEPT, dtype=np.int8)
        reason[self.sigma_sq > threshold] = UNCERTAIN
        reason[self.band & ~self.candidate] = OUT_OF_DISTRIBUTION
        reason[~self.band] = OUT_OF_BAND
        return reason == KEPT, reason


def interpolate_queries(cloud: PointCloud, theta_q, phi_q, params: CompletionParams, index: SphericalIndex | None = None) -> QueryResults:
    """Interpolate depth, uncertainty and mean neighbor distance at query directions."""
    if len(cloud) == 0:
        raise DegenerateInputError("point cloud is empty")
    theta_q = np.asarray(theta_q, dtype=float)
    phi_q = np.asarray(phi_q, dtype=float)
    if index is None:
        index = SphericalIndex(cloud.theta, cloud.phi)
    dist, idx = index.query(theta_q, phi_q, params.k)
    radii = cloud.r[idx]
    r_q, w = interpolate_depth(dist, radii)
    sigma_sq = uncertainty(r_q, radii, w)
    d_q = ood_distance(dist)
    band = (theta_q >= params.t_theta) & (theta_q <= 180.0 - params.t_theta)
    return QueryResults(theta_q, phi_q, r_q, sigma_sq, d_q, band, band & (d_q <= params.t_ood))


# --- completing a depth map -------------------------------------------------


@dataclass
class CompletionStats:
    n_query: int
    n_candidates: int
    n_kept: int
    threshold: float
    arip: float
    labels_original: int
    labels_completed: int
    rlp_original: float | None = None
    rlp_completed: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if not math.isfinite(d["threshold"]):
            d["threshold"] = None
        return d


def compute_frame_queries(cloud: PointCloud, params: CompletionParams) -> QueryResults:
    """Interpolate the whole query grid for one (aggregated) cloud."""
    theta_q, phi_q = generate_query_grid(params.n_grid, params.t_theta)
    return interpolate_queries(cloud, theta_q, phi_q, params)


def frame_threshold(results: QueryResults, params: CompletionParams) -> float:
    """Per-cloud uncertainty threshold; NaN when no query passed the band and OOD tests."""
    vals = results.sigma_sq[results.candidate]
    if vals.size == 0:
        return math.nan
    return uncertainty_threshold_for_rip(vals, params.rip)


def sequence_threshold(thresholds) -> float:
    """Mean of the per-cloud thresholds, ignoring clouds without candidates."""
    vals = np.asarray(thresholds, dtype=float)
    vals = vals[~np.isnan(vals)]
    return float(np.mean(vals)) if vals.size else -math.inf


def splat_camera_points(points_cam, geom: EquirectGeometry) -> DepthMap:
    """Nearest-pixel depth map of camera-frame points; the closest point wins a pixel.

    Points outside the raster's polar band are dropped.
    """
    points_cam = np.asarray(points_cam, dtype=float).reshape(-1, 3)
    if len(points_cam) == 0:
        return DepthMap.empty(geom.width, geom.height)
    r, theta, phi = cart_to_spherical(points_cam)
    ok = in_band(theta, geom)
    px = spherical_to_pixel(theta[ok], phi[ok], geom)
    cols = np.floor(px.x).astype(np.intp) % geom.width
    rows = np.minimum(np.floor(px.y).astype(np.intp), geom.height - 1)
    return splat_min(rows, cols, r[ok], geom.width, geom.height)


def project_cloud(cloud: PointCloud, extrinsics: Extrinsics, geom: EquirectGeometry) -> DepthMap:
    """Sparse bottom-camera depth map from a LiDAR cloud."""
    return splat_camera_points(transform_point(cloud.xyz, extrinsics), geom)


def render_completion(
    results: QueryResults,
    threshold: float,
    sparse: DepthMap,
    geom: EquirectGeometry,
    extrinsics: Extrinsics,
) -> tuple[DepthMap, CompletionStats]:
    """Project surviving queries into the image and merge with the original labels.

    Colliding queries keep the smallest depth; original labels are never
    replaced.
    """
    if (sparse.height, sparse.width) != (geom.height, geom.width):
        raise ValueError("sparse map and geometry disagree on raster size")
    kept, _ = results.decide(threshold)
    n_cand = int(results.candidate.sum())
    pts = transform_point(spherical_to_cart(results.r[kept], results.theta[kept], results.phi[kept]), extrinsics)
    interp = splat_camera_points(pts, geom)
    dense = sparse.copy()
    fill = interp.valid & ~sparse.valid
    dense.values[fill] = interp.values[fill]
    dense.valid[fill] = True
    stats = CompletionStats(
        n_query=len(results),
        n_candidates=n_cand,
        n_kept=int(kept.sum()),
        threshold=float(threshold),
        arip=float(kept.sum() / n_cand) if n_cand else 0.0,
        labels_original=sparse.n_valid,
        labels_completed=dense.n_valid,
    )
    if sparse.n_valid:
        try:
            stats.rlp_original, stats.rlp_completed = rlp(sparse, dense)
        except DegenerateInputError:
            pass
    return dense, stats


def complete_depth_map(
    cloud: PointCloud,
    sparse: DepthMap,
    geom: EquirectGeometry,
    params: CompletionParams,
    extrinsics: Extrinsics | None = None,
) -> tuple[DepthMap, CompletionStats]:
    """Densify ``sparse`` from an aggregated cloud using a per-cloud uncertainty threshold."""
    extrinsics = extrinsics or Extrinsics.identity()
    results = compute_frame_queries(cloud, params)
    threshold = frame_threshold(results, params)
    threshold = -math.inf if math.isnan(threshold) else threshold
    return render_completion(results, threshold, sparse, geom, extrinsics)


def complete_sequence(
    clouds: Sequence[PointCloud],
    sparse_maps: Sequence[DepthMap],
    geom: EquirectGeometry,
    params: CompletionParams,
    extrinsics: Extrinsics | None = None,
    threshold_mode: str = "sequence",
    workers: int = 1,
):
    """Complete every frame of a sequence.

    With ``threshold_mode="sequence"`` the per-cloud uncertainty thresholds
    are averaged and the mean is applied to every frame; ``"frame"`` keeps
    each cloud's own threshold. Output does not depend on ``workers``.

    Returns:
        ``(dense_maps, per_frame_stats, sequence_threshold)``.
    """
    if len(clouds) != len(sparse_maps):
        raise ValueError(f"{len(clouds)} clouds but {len(sparse_maps)} sparse maps")
    if threshold_mode not in ("sequence", "frame"):
        raise ValueError("threshold_mode must be 'sequence' or 'frame'")
    extrinsics = extrinsics or Extrinsics.identity()

    def phase1(i):
        agg = temporal_aggregate(clouds, i, params.m, params.aggregation)
        return compute_frame_queries(agg, params)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(phase1, range(len(clouds))))
        thresholds = [frame_threshold(r, params) for r in results]
        if threshold_mode == "sequence":
            seq = sequence_threshold(thresholds)
            applied = [seq] * len(thresholds)
        else:
            seq = math.nan
            applied = [-math.inf if math.isnan(t) else t for t in thresholds]
        outs = list(pool.map(
            lambda i: render_completion(results[i], applied[i], sparse_maps[i], geom, extrinsics),
            range(len(clouds)),
        ))
    return [o[0] for o in outs], [o[1] for o in outs], seq


# --- validation ------------------------------------------------------------


def holdout_split(cloud: PointCloud, ratio: float = 0.8, seed: int = 0) -> tuple[PointCloud, PointCloud]:
    """Uniform split without replacement into ``(train, test)``."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    n = len(cloud)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratio * n))
    return cloud.subset(np.sort(perm[:n_train])), cloud.subset(np.sort(perm[n_train:]))


def _report(r_est, r_true, params, n_kept, n_cand, threshold):
    if len(r_est) == 0:
        raise DegenerateInputError("no test point survived filtering")
    m = point_metrics(r_est, r_true)
    return {
        "MAE": m["mae"],
        "RMSE": m["rmse"],
        "MARE": m["mare"],
        "IR": inlier_ratio(r_est, r_true, params.t_inlier, mode=params.inlier_mode),
        "ARIP": n_kept / n_cand if n_cand else 0.0,
        "n_evaluated": int(len(r_est)),
        "threshold": float(threshold),
    }


def heldout_queries(train: PointCloud, test: PointCloud, params: CompletionParams) -> QueryResults:
    if len(train) == 0 or len(test) == 0:
        raise DegenerateInputError("train and test clouds must be nonempty")
    return interpolate_queries(train, test.theta, test.phi, params)


def evaluate_completion(train: PointCloud, test: PointCloud, params: CompletionParams, threshold: float | None = None) -> dict:
    """Interpolate held-out points from the training cloud and score the survivors."""
    res = heldout_queries(train, test, params)
    if threshold is None:
        threshold = frame_threshold(res, params)
        threshold = -math.inf if math.isnan(threshold) else threshold
    kept, _ = res.decide(threshold)
    return _report(res.r[kept], test.r[kept], params, int(kept.sum()), int(res.candidate.sum()), threshold)


def evaluate_sequence(
    clouds: Sequence[PointCloud],
    params: CompletionParams,
    ratio: float = 0.8,
    seed: int = 0,
    workers: int = 1,
) -> dict:
    """Held-out validation over a sequence with sequence-averaged thresholds.

    Every cloud is split once (seeded by ``seed`` and its position); a
    frame's training set aggregates the training parts of its window and its
    test set is the center cloud's held-out part.
    """
    splits = [holdout_split(c, ratio, seed + i) for i, c in enumerate(clouds)]
    trains = [s[0] for s in splits]

    def phase1(i):
        agg = temporal_aggregate(trains, i, params.m, params.aggregation)
        return heldout_queries(agg, splits[i][1], params)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(phase1, range(len(clouds))))
    threshold = sequence_threshold([frame_threshold(r, params) for r in results])
    est, true = [], []
    n_kept = n_cand = 0
    for res, (_, test) in zip(results, splits):
        kept, _ = res.decide(threshold)
        est.append(res.r[kept])
        true.append(test.r[kept])
        n_kept += int(kept.sum())
        n_cand += int(res.candidate.sum())
    return _report(np.concatenate(est), np.concatenate(true), params, n_kept, n_cand, threshold)


def rlp(original: DepthMap, completed: DepthMap) -> tuple[float, float]:
    """Ratio of labeled pixels inside the rows spanned by the original labels.

    Completed labels outside that row range are discarded before counting.
    """
    if original.values.shape != completed.values.shape:
        raise ValueError("maps must have the same size")
    rows = np.flatnonzero(original.valid.any(axis=1))
    if rows.size == 0:
        raise DegenerateInputError("original map has no labels")
    h_min, h_max = int(rows[0]), int(rows[-1])
    if h_max == h_min:
        raise DegenerateInputError("labels occupy a single row; the labelable band is empty")
    area = original.width * (h_max - h_min)
    n_aug = int(completed.valid[h_min:h_max + 1].sum())
    return original.n_valid / area, n_aug / area
