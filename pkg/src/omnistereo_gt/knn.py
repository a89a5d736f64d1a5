"""k-nearest-neighbor search over directions in (polar, azimuth) angle space.

Distances are planar in degrees, ``sqrt(dtheta**2 + dphi**2)`` with the
azimuth difference wrapped to [-180, 180]. A periodic kd-tree proposes
candidates; candidates are then re-ranked with the exact distance below, so
results (including tie order) match an exhaustive scan.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateInputError

# Relative slack between kd-tree distances and the exact formula.
_TREE_SLACK = 1e-9


def angular_distance(theta_q, phi_q, theta_p, phi_p):
    """Planar angular distance in degrees with azimuth wrap-around."""
    dtheta = np.asarray(theta_q, dtype=float) - np.asarray(theta_p, dtype=float)
    dphi = np.asarray(phi_q, dtype=float) - np.asarray(phi_p, dtype=float)
    dphi = np.abs(np.mod(dphi + 180.0, 360.0) - 180.0)
    out = np.hypot(dtheta, dphi)
    return out if np.ndim(out) else float(out)


def _rank(dist, idx, k):
    """Sort each row by (distance, index) and keep the first ``k`` columns."""
    order = np.lexsort((idx, dist), axis=-1)
    dist = np.take_along_axis(dist, order, axis=-1)[..., :k]
    idx = np.take_along_axis(idx, order, axis=-1)[..., :k]
    return dist, idx


def brute_force_knn(theta, phi, theta_q, phi_q, k):
    """Exhaustive-scan reference: ``(distances, indices)`` of shape ``(Q, k)``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    theta_q = np.atleast_1d(np.asarray(theta_q, dtype=float))
    phi_q = np.atleast_1d(np.asarray(phi_q, dtype=float))
    if len(theta) < k:
        raise DegenerateInputError(f"need at least k={k} points, have {len(theta)}")
    dist = angular_distance(theta_q[:, None], phi_q[:, None], theta[None, :], phi[None, :])
    idx = np.broadcast_to(np.arange(len(theta)), dist.shape)
    return _rank(dist, idx, k)


class SphericalIndex:
    """Immutable kNN index over a set of directions.

    Safe to query from several threads once constructed.
    """

    def __init__(self, theta, phi):
        self.theta = np.ascontiguousarray(theta, dtype=float)
        self.phi = np.ascontiguousarray(phi, dtype=float)
        if self.theta.shape != self.phi.shape or self.theta.ndim != 1:
            raise ValueError("theta and phi must be 1-D arrays of equal length")
        self._tree = cKDTree(self._embed(self.theta, self.phi), boxsize=[360.0, 360.0]) if len(self) else None

    def __len__(self) -> int:
        return len(self.theta)

    @staticmethod
    def _embed(theta, phi):
        # theta in [0, 180] never wraps with a 360° period; azimuth does
        u = np.mod(phi + 180.0, 360.0)
        u = np.where(u >= 360.0, 0.0, u)
        return np.column_stack([theta, u])

    def query(self, theta_q, phi_q, k: int, chunk: int = 65536):
        """Return ``(distances, indices)`` of the ``k`` nearest points per query.

        Rows are sorted by ascending distance; equal distances keep the
        lower (earlier inserted) index first.

        Raises:
            DegenerateInputError: the index holds fewer than ``k`` points.
        """
        if k < 1:
            raise ValueError("k must be at least 1")
        if len(self) < k:
            raise DegenerateInputError(f"need at least k={k} points, have {len(self)}")
        theta_q = np.atleast_1d(np.asarray(theta_q, dtype=float))
        phi_q = np.atleast_1d(np.asarray(phi_q, dtype=float))
        n_q = len(theta_q)
        out_d = np.empty((n_q, k))
        out_i = np.empty((n_q, k), dtype=np.intp)
        for start in range(0, n_q, chunk):
            sl = slice(start, start + chunk)
            out_d[sl], out_i[sl] = self._query_chunk(theta_q[sl], phi_q[sl], k)
        return out_d, out_i

    def _query_chunk(self, theta_q, phi_q, k):
        n = len(self)
        kk = min(n, 2 * k + 2)
        tree_d, tree_i = self._tree.query(self._embed(theta_q, phi_q), k=kk)
        tree_d = tree_d.reshape(len(theta_q), kk)
        tree_i = tree_i.reshape(len(theta_q), kk)
        exact = angular_distance(theta_q[:, None], phi_q[:, None], self.theta[tree_i], self.phi[tree_i])
        dist, idx = _rank(exact, tree_i, k)
        if kk == n:
            return dist, idx
        # every point outside the candidate set is at least as far as the last candidate
        bound = tree_d[:, -1] * (1 - _TREE_SLACK) - 1e-12
        unsafe = ~(dist[:, -1] < bound)
        if np.any(unsafe):
            bd, bi = brute_force_knn(self.theta, self.phi, theta_q[unsafe], phi_q[unsafe], k)
            dist[unsafe] = bd
            idx[unsafe] = bi
        return dist, idx
