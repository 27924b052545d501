"""Spatial index over a point cloud and k-NN normal estimation."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud


class SpatialIndex:
    """Read-only kd-tree over a cloud; queries match brute force exactly."""

    def __init__(self, cloud_or_points):
        if isinstance(cloud_or_points, PointCloud):
            self.points = cloud_or_points.points
        else:
            self.points = np.asarray(cloud_or_points, dtype=np.float64).reshape(-1, 3)
        self._tree = cKDTree(self.points) if len(self.points) else None

    def __len__(self) -> int:
        return self.points.shape[0]

    def radius(self, center, r: float) -> np.ndarray:
        """Sorted indices of points with ||p - center|| <= r."""
        if self._tree is None:
            return np.empty(0, dtype=np.int64)
        idx = self._tree.query_ball_point(np.asarray(center, dtype=float), r)
        return np.sort(np.asarray(idx, dtype=np.int64))

    def knn(self, center, k: int) -> np.ndarray:
        """Indices of the k nearest points, nearest first."""
        if self._tree is None or k <= 0:
            return np.empty(0, dtype=np.int64)
        k = min(k, len(self.points))
        _, idx = self._tree.query(np.asarray(center, dtype=float), k=k)
        return np.atleast_1d(idx).astype(np.int64)


def radius_search(index: SpatialIndex, center, r: float) -> np.ndarray:
    return index.radius(center, r)


def estimate_normals(
    cloud: PointCloud,
    k: int = 12,
    sensor_origins: dict[int, np.ndarray] | None = None,
) -> PointCloud:
    """Per-point normals from the k-NN covariance (least eigenvector).

    Normals are flipped toward the originating sensor when the cloud carries
    ``source_sensor`` and the sensor origin is known; otherwise toward +z.
    Points with a degenerate neighborhood are skipped (dropped from the
    returned cloud).
    """
    n = len(cloud)
    if n < k:
        raise ValueError(f"cloud has {n} points, need at least k={k}")
    tree = cKDTree(cloud.points)
    _, nbrs = tree.query(cloud.points, k=k, workers=-1)
    neigh = cloud.points[nbrs]  # (n, k, 3)
    mean = neigh.mean(axis=1, keepdims=True)
    centered = neigh - mean
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    # eigh returns ascending eigenvalues; normal = least-variance direction
    vals, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    # degenerate neighborhoods: all points coincident, or collinear
    # (anisotropic scanline sampling), where the normal is meaningless
    valid = vals[:, 2] > 1e-18
    valid &= vals[:, 1] > 0.1 * vals[:, 2]
    lens = np.linalg.norm(normals, axis=1)
    valid &= lens > 1e-9
    normals = np.where(lens[:, None] > 1e-9, normals / np.maximum(lens, 1e-30)[:, None], normals)

    # orient toward viewing sensor (fallback +z)
    toward = np.zeros((n, 3))
    toward[:, 2] = 1.0
    if cloud.source_sensor is not None and sensor_origins:
        for sid, origin in sensor_origins.items():
            mask = cloud.source_sensor == sid
            if mask.any():
                toward[mask] = np.asarray(origin) - cloud.points[mask]
    else:
        toward = toward - 0.0  # +z reference
    flip = np.einsum("ij,ij->i", normals, toward) < 0.0
    normals[flip] = -normals[flip]

    kept = cloud.select(valid)
    return kept.with_normals(normals[valid])
