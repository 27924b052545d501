"""Recover the 3D laser target from the per-sensor IR images.

Bright pixels are grouped by single-linkage clustering (3 px cutoff); the
unique pair of spots at plausible separation gives a pixel midpoint per
sensor; midpoints are back-projected onto the fused cloud and a consensus of
at least two sensors commits the target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cloud import PointCloud
from .sensors import IRImage, VirtualSensor

LINKAGE_CUTOFF_PX = 3.0
DEFAULT_THRESHOLD = 0.72
DEFAULT_PAIR_WINDOW = (3.5, 14.0)
RAY_SNAP_M = 0.02
CONSENSUS_M = 0.03


@dataclass(frozen=True)
class SpotCluster:
    centroid: np.ndarray  # (u, v) intensity-weighted
    pixel_count: int
    total_intensity: float


@dataclass(frozen=True)
class LaserTarget:
    position: np.ndarray
    confidence: int
    evidence: tuple[tuple[int, float, float], ...] = field(default_factory=tuple)
    # evidence rows: (sensor_id, u, v) of the pixel midpoint used


def detect_spots(image: IRImage, threshold: float = DEFAULT_THRESHOLD) -> list[SpotCluster]:
    """Single-linkage clusters of bright pixels (cutoff 3 px)."""
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must be in (0, 1)")
    arr = image.intensity
    vs, us = np.nonzero(arr > threshold)
    if len(us) == 0:
        return []
    pix = np.stack([us.astype(float), vs.astype(float), np.zeros(len(us))], axis=1)
    labels = _kernels.cluster_radius(pix, LINKAGE_CUTOFF_PX)
    clusters = []
    for lab in range(labels.max() + 1):
        m = labels == lab
        w = arr[vs[m], us[m]]
        cu = float(np.sum(us[m] * w) / np.sum(w))
        cv = float(np.sum(vs[m] * w) / np.sum(w))
        clusters.append(SpotCluster(np.array([cu, cv]), int(m.sum()), float(w.sum())))
    return clusters


def pair_spots(
    clusters: list[SpotCluster],
    min_px: float = DEFAULT_PAIR_WINDOW[0],
    max_px: float = DEFAULT_PAIR_WINDOW[1],
) -> np.ndarray | None:
    """Midpoint of the unique cluster pair with separation in the window."""
    hits = []
    for i in range(len(clusters)):
        for j in range(i + 1, len(clusters)):
            sep = float(np.linalg.norm(clusters[i].centroid - clusters[j].centroid))
            if min_px <= sep <= max_px:
                hits.append((clusters[i].centroid + clusters[j].centroid) / 2.0)
    if len(hits) != 1:
        return None
    return hits[0]


def _snap_to_cloud(
    sensor: VirtualSensor, pixel: np.ndarray, cloud: PointCloud, snap: float = RAY_SNAP_M
) -> np.ndarray | None:
    """Nearest cloud point within ``snap`` meters of the pixel ray.

    The ray usually crosses several surfaces; the spot lives on the first
    one, so candidates are restricted to the nearest-along-ray slab before
    picking the best-centered point.
    """
    if len(cloud) == 0:
        return None
    d = sensor.ir_view().ray_through_pixel(pixel[0], pixel[1])
    rel = cloud.points - sensor.origin
    t = rel @ d
    ahead = t > 0.05
    if not ahead.any():
        return None
    idx = np.nonzero(ahead)[0]
    perp = np.linalg.norm(rel[idx] - t[idx, None] * d, axis=1)
    near = perp <= snap
    if not near.any():
        return None
    idx = idx[near]
    t_near = t[idx]
    slab = t_near <= t_near.min() + 0.03
    best = idx[slab][int(np.argmin(perp[near][slab]))]
    return cloud.points[best].copy()


def localize_target(
    per_sensor: list[tuple[VirtualSensor, np.ndarray | None, PointCloud]],
    consensus: float = CONSENSUS_M,
) -> LaserTarget | None:
    """Consensus 3D position from per-sensor pixel candidates.

    Candidates agreeing within ``consensus`` meters form a group; the largest
    group of size >= 2 wins and its component-wise median is the target.
    """
    cands = []
    evidence = []
    for sensor, pixel, cloud in per_sensor:
        if pixel is None:
            continue
        p = _snap_to_cloud(sensor, pixel, cloud)
        if p is None:
            continue
        cands.append(p)
        evidence.append((sensor.sensor_id, float(pixel[0]), float(pixel[1])))
    if len(cands) < 2:
        return None
    pts = np.asarray(cands)
    labels = _kernels.cluster_radius(pts, consensus)
    sizes = np.bincount(labels)
    best = int(np.argmax(sizes))  # ties: lowest label = earliest sensor
    if sizes[best] < 2:
        return None
    group = labels == best
    pos = np.median(pts[group], axis=0)
    ev = tuple(e for e, g in zip(evidence, group) if g)
    return LaserTarget(position=pos, confidence=int(sizes[best]), evidence=ev)


def detect_target(
    images: list[IRImage],
    sensors: list[VirtualSensor],
    fused: PointCloud,
    threshold: float = DEFAULT_THRESHOLD,
    pair_window: tuple[float, float] = DEFAULT_PAIR_WINDOW,
) -> LaserTarget | None:
    """Full detection: spots -> pairs -> 3D consensus."""
    by_id = {s.sensor_id: s for s in sensors}
    per_sensor = []
    for img in images:
        clusters = detect_spots(img, threshold)
        pixel = pair_spots(clusters, *pair_window)
        per_sensor.append((by_id[img.sensor_id], pixel, fused))
    return localize_target(per_sensor)
