"""Projector pinhole model and segmentation-mask rendering for projecting
grasp/place intent onto the scene."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud
from .geometry import Pose
from .preprocess import SegmentedCloud

DILATION_PX = 3
PLACE_DISC_R = 0.05


@dataclass(frozen=True)
class ProjectorModel:
    """Pinhole projector: square pixels (f_x = f_y), zero skew, no distortion."""

    intrinsics: np.ndarray  # 3x3 K
    pose: Pose
    width: int
    height: int

    def __post_init__(self):
        k = np.asarray(self.intrinsics, dtype=float).reshape(3, 3)
        object.__setattr__(self, "intrinsics", k)
        if k[0, 0] <= 0 or abs(k[0, 0] - k[1, 1]) > 1e-9:
            raise ValueError("focal lengths must be positive and equal")
        if k[1, 0] or k[2, 0] or k[2, 1] or k[0, 1] or k[2, 2] != 1.0:
            raise ValueError("K must be upper-triangular with K[2][2] = 1")
        if not (0 <= k[0, 2] <= self.width and 0 <= k[1, 2] <= self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def focal(self) -> float:
        return float(self.intrinsics[0, 0])

    @property
    def principal_point(self) -> tuple[float, float]:
        return float(self.intrinsics[0, 2]), float(self.intrinsics[1, 2])


def calibrate(
    image_width_m: float,
    image_height_m: float,
    width_px: int,
    height_px: int,
    principal_x_m: float,
    principal_y_m: float,
    distance_m: float,
    pose: Pose | None = None,
) -> ProjectorModel:
    """Intrinsics from a projected-rectangle measurement at a known distance.

    With the projected image W x H meters at distance Z, the focal length is
    f = w * Z / W pixels; the principal point is (w * X / W, h * Y / H) from
    the measured offsets X, Y.
    """
    vals = [image_width_m, image_height_m, width_px, height_px,
            principal_x_m, principal_y_m, distance_m]
    if any(v <= 0 for v in vals):
        raise ValueError("all calibration inputs must be positive")
    f = width_px * distance_m / image_width_m
    cx = width_px * principal_x_m / image_width_m
    cy = height_px * principal_y_m / image_height_m
    k = np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])
    return ProjectorModel(
        intrinsics=k,
        pose=pose if pose is not None else Pose(),
        width=int(width_px),
        height=int(height_px),
    )


def project_points(model: ProjectorModel, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(integer pixel coords, valid mask); points behind the lens are invalid."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    local = (pts - model.pose.translation) @ model.pose.rotation
    z = local[:, 2]
    valid = z > 1e-9
    k = model.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k[0, 0] * local[:, 0] / z + k[0, 2]
        v = k[1, 1] * local[:, 1] / z + k[1, 2]
    ui = np.floor(u).astype(np.int64)
    vi = np.floor(v).astype(np.int64)
    valid &= (ui >= 0) & (ui < model.width) & (vi >= 0) & (vi < model.height)
    return np.stack([ui, vi], axis=1), valid


def render_mask(
    seg: SegmentedCloud | PointCloud,
    model: ProjectorModel,
    dilation_px: int = DILATION_PX,
) -> np.ndarray:
    """Binary (h, w) image: white where a segmented point projects, dilated."""
    cloud = seg.cloud if isinstance(seg, SegmentedCloud) else seg
    mask = np.zeros((model.height, model.width), dtype=bool)
    if len(cloud):
        px, valid = project_points(model, cloud.points)
        mask[px[valid, 1], px[valid, 0]] = True
    if dilation_px > 0 and mask.any():
        from scipy.ndimage import binary_dilation

        mask = binary_dilation(mask, iterations=dilation_px)
    return mask


def place_disc_cloud(position: np.ndarray, radius: float = PLACE_DISC_R, step: float = 0.005) -> PointCloud:
    """Horizontal disc of points marking a place position."""
    ax = np.arange(-radius, radius + step / 2, step)
    gx, gy = np.meshgrid(ax, ax)
    keep = gx**2 + gy**2 <= radius**2
    pts = np.stack([gx[keep], gy[keep], np.zeros(keep.sum())], axis=1) + np.asarray(position)
    return PointCloud(pts)


def highlight_target(
    model: ProjectorModel,
    kind: str,
    segment: SegmentedCloud | None = None,
    place_position: np.ndarray | None = None,
    dilation_px: int = DILATION_PX,
) -> np.ndarray:
    """Mask for the next action: the pick segment or a disc at the place point."""
    if kind == "pick_segment":
        if segment is None:
            raise ValueError("no active pick segment")
        return render_mask(segment, model, dilation_px)
    if kind == "place_point":
        if place_position is None:
            raise ValueError("no active place target")
        return render_mask(place_disc_cloud(place_position), model, dilation_px)
    raise ValueError(f"unknown highlight kind {kind!r}")


def save_pgm(mask: np.ndarray, path, binary: bool = True) -> None:
    """Write the mask as a P5 (binary) or P2 (ascii) portable graymap."""
    h, w = mask.shape
    data = np.where(mask, 255, 0).astype(np.uint8)
    if binary:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(data.tobytes())
    else:
        with open(path, "w") as fh:
            fh.write(f"P2\n{w} {h}\n255\n")
            for row in data:
                fh.write(" ".join(str(int(v)) for v in row) + "\n")


def load_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        w, h = map(int, fh.readline().split())
        maxval = int(fh.readline())
        if magic == b"P5":
            data = np.frombuffer(fh.read(w * h), dtype=np.uint8).reshape(h, w)
        elif magic == b"P2":
            data = np.array(fh.read().split(), dtype=np.int64).reshape(h, w)
        else:
            raise ValueError("unsupported PGM magic")
    return data > maxval // 2
