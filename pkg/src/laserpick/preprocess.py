"""Point-cloud preprocessing: horizontal-plane removal, Euclidean cluster
extraction, and laser-guided target segmentation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cloud import PointCloud
from .laser import LaserTarget

RANSAC_ITERS = 300
PLANE_DIST_TH = 0.015
PLANE_MAX_TILT = np.deg2rad(5.0)
REMOVAL_CAP = 0.70
CLUSTER_DIST_TH = 0.005
SEGMENT_MIN_PTS = 500            # full-resolution preset from the source system
SEGMENT_MIN_PTS_DESK = 50        # scaled for the sparse desk-scale clouds
PLANE_MIN_INLIERS_FULLRES = 13000
FALLBACK_BALL_R = 0.1
NORMAL_GATE = np.deg2rad(45.0)


class SegmentationFailure(RuntimeError):
    """No usable cluster and the fallback ball is empty."""


@dataclass(frozen=True)
class RemovedPlane:
    normal: np.ndarray
    offset: float
    inlier_count: int


@dataclass(frozen=True)
class PlaneRemovalReport:
    planes: tuple[RemovedPlane, ...]
    fraction_removed: float

    def __post_init__(self):
        if self.fraction_removed > REMOVAL_CAP + 1e-12:
            raise ValueError("plane removal exceeded the 70% cap")

    def surface_heights(self) -> list[float]:
        """Heights (z of the plane along its normal) of removed planes."""
        return [float(p.offset / max(abs(p.normal[2]), 1e-9)) for p in self.planes]


@dataclass(frozen=True)
class SegmentedCloud:
    cloud: PointCloud
    provenance: str  # "cluster" | "fallback_ball"
    target: LaserTarget

    def __post_init__(self):
        if len(self.cloud) == 0:
            raise ValueError("segmented cloud must be non-empty")


def default_min_inliers(n_points: int) -> int:
    """Desk-scale inlier floor: max(500, 5% of the cloud)."""
    return max(500, int(0.05 * n_points))


def _best_horizontal_plane(
    points: np.ndarray,
    rng: np.random.Generator,
    dist_th: float,
    max_tilt: float,
    iters: int,
):
    """Best RANSAC plane among candidates within max_tilt of horizontal."""
    n = len(points)
    if n < 3:
        return None
    tri = rng.integers(0, n, size=(iters, 3))
    p0 = points[tri[:, 0]]
    v1 = points[tri[:, 1]] - p0
    v2 = points[tri[:, 2]] - p0
    normals = np.cross(v1, v2)
    lens = np.linalg.norm(normals, axis=1)
    valid = lens > 1e-12
    normals[valid] /= lens[valid, None]
    # orient +z and gate on tilt
    flip = normals[:, 2] < 0
    normals[flip] = -normals[flip]
    min_cos = np.cos(max_tilt)
    valid &= normals[:, 2] >= min_cos
    offsets = np.einsum("ij,ij->i", normals, p0)
    counts = _kernels.plane_inlier_counts(points, normals, offsets, valid, dist_th)
    best = int(np.argmax(counts))
    if counts[best] == 0:
        return None
    return normals[best], float(offsets[best]), int(counts[best])


def remove_horizontal_planes(
    cloud: PointCloud,
    dist_th: float = PLANE_DIST_TH,
    max_tilt: float = PLANE_MAX_TILT,
    min_inliers: int | None = None,
    cap: float = REMOVAL_CAP,
    iters: int = RANSAC_ITERS,
    seed: int = 0,
    normal_gate: float | None = NORMAL_GATE,
) -> tuple[PointCloud, PlaneRemovalReport]:
    """Iteratively remove near-horizontal RANSAC planes.

    A plane is removed only if its tilt from horizontal is within
    ``max_tilt``, it has at least ``min_inliers`` distance inliers, and
    removing it keeps cumulative removal within ``cap``.  When the cloud
    carries normals and ``normal_gate`` is set, only inliers whose normal is
    within the gate of vertical are removed, which keeps the near-surface
    fringe of objects intact.
    """
    if len(cloud) == 0:
        raise ValueError("cloud must be non-empty")
    if min_inliers is None:
        min_inliers = default_min_inliers(len(cloud))
    rng = np.random.default_rng(seed)
    total = len(cloud)
    keep = np.ones(total, dtype=bool)
    removed = 0
    planes: list[RemovedPlane] = []
    for _ in range(8):  # plane budget; realistic scenes have 1-3
        idx = np.nonzero(keep)[0]
        if len(idx) < max(3, min_inliers):
            break
        found = _best_horizontal_plane(cloud.points[idx], rng, dist_th, max_tilt, iters)
        if found is None:
            break
        normal, offset, count = found
        if count < min_inliers:
            break
        resid = np.abs(cloud.points[idx] @ normal - offset)
        rem = resid <= dist_th
        if normal_gate is not None and cloud.normals is not None:
            ndot = np.abs(cloud.normals[idx] @ normal)
            rem &= ndot >= np.cos(normal_gate)
        n_rem = int(rem.sum())
        if n_rem == 0:
            break
        if (removed + n_rem) / total > cap:
            break  # skipping the whole plane that would breach the cap
        keep[idx[rem]] = False
        removed += n_rem
        planes.append(RemovedPlane(normal=normal, offset=offset, inlier_count=count))
    report = PlaneRemovalReport(
        planes=tuple(planes), fraction_removed=removed / total
    )
    return cloud.select(keep), report


def extract_clusters(cloud: PointCloud, dist_th: float = CLUSTER_DIST_TH) -> list[np.ndarray]:
    """Connected components of the <=dist_th proximity graph, as index arrays.

    Clusters are ordered by their smallest member index (labels are assigned
    in first-appearance order, so label order == that order).
    """
    if len(cloud) == 0:
        return []
    labels = _kernels.cluster_radius(cloud.points, dist_th)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(labels.max() + 2))
    return [order[bounds[i] : bounds[i + 1]] for i in range(labels.max() + 1)]


def segment_target(
    cloud: PointCloud,
    clusters: list[np.ndarray],
    target: LaserTarget,
    min_pts: int = SEGMENT_MIN_PTS,
    ball_r: float = FALLBACK_BALL_R,
) -> SegmentedCloud:
    """Keep the cluster nearest the laser target, or the fallback ball.

    Ties between equally-near clusters go to the larger cluster, then the
    lower cluster index.
    """
    p = np.asarray(target.position)
    best = None
    for k, idx in enumerate(clusters):
        d = float(np.min(np.linalg.norm(cloud.points[idx] - p, axis=1)))
        key = (d, -len(idx), k)
        if best is None or key < best[0]:
            best = (key, k)
    if best is not None:
        k = best[1]
        if len(clusters[k]) >= min_pts:
            return SegmentedCloud(
                cloud=cloud.select(clusters[k]), provenance="cluster", target=target
            )
    within = np.linalg.norm(cloud.points - p, axis=1) <= ball_r
    if not within.any():
        raise SegmentationFailure(
            "no cluster above the size floor and the fallback ball is empty"
        )
    return SegmentedCloud(
        cloud=cloud.select(within), provenance="fallback_ball", target=target
    )
