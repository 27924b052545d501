"""Virtual depth/IR sensor rig and the dual-beam laser device.

Five sensors ride on the scooter: four at 1.14 m in two mirrored groups
0.63 m apart (one per group pitched 25 deg down, the other 55 deg), plus a
fifth at 1.56 m pitched 44 deg down.  All are yawed 20 deg inward.  Camera
frame: x right, y down, z optical axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cloud import PointCloud
from .geometry import Pose, rot_x, rot_z
from .scene import PrimitiveSet, Scene, primitive_set


@dataclass(frozen=True)
class VirtualSensor:
    """Depth/IR camera; IR may run at a finer resolution than depth."""

    pose: Pose
    sensor_id: int
    h_fov: float = np.deg2rad(58.0)
    v_fov: float = np.deg2rad(45.0)
    width: int = 320
    height: int = 240
    depth_noise_sigma: float = 0.0015
    ir_width: int = 320
    ir_height: int = 240

    def __post_init__(self):
        if not (0.0 < self.h_fov < np.pi and 0.0 < self.v_fov < np.pi):
            raise ValueError("fov must be in (0, pi)")
        if min(self.width, self.height, self.ir_width, self.ir_height) < 16:
            raise ValueError("resolution must be at least 16x16")

    def ir_view(self) -> "VirtualSensor":
        """Same camera at the IR imaging resolution."""
        if (self.ir_width, self.ir_height) == (self.width, self.height):
            return self
        return VirtualSensor(
            pose=self.pose,
            sensor_id=self.sensor_id,
            h_fov=self.h_fov,
            v_fov=self.v_fov,
            width=self.ir_width,
            height=self.ir_height,
            depth_noise_sigma=self.depth_noise_sigma,
            ir_width=self.ir_width,
            ir_height=self.ir_height,
        )

    @property
    def fx(self) -> float:
        return (self.width / 2.0) / np.tan(self.h_fov / 2.0)

    @property
    def fy(self) -> float:
        return (self.height / 2.0) / np.tan(self.v_fov / 2.0)

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0

    @property
    def origin(self) -> np.ndarray:
        return self.pose.translation

    def pixel_rays(self) -> np.ndarray:
        """Unit world-frame ray directions through every pixel center."""
        u = (np.arange(self.width) + 0.5 - self.cx) / self.fx
        v = (np.arange(self.height) + 0.5 - self.cy) / self.fy
        uu, vv = np.meshgrid(u, v)
        dirs = np.stack([uu, vv, np.ones_like(uu)], axis=-1).reshape(-1, 3)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return dirs @ self.pose.rotation.T

    def ray_through_pixel(self, u: float, v: float) -> np.ndarray:
        d = np.array([(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0])
        d /= np.linalg.norm(d)
        return self.pose.rotation @ d

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(pixels (n,2), depth (n,)); depth <= 0 marks points behind."""
        local = (np.asarray(points).reshape(-1, 3) - self.pose.translation) @ self.pose.rotation
        z = local[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * local[:, 0] / z + self.cx
            v = self.fy * local[:, 1] / z + self.cy
        return np.stack([u, v], axis=1), z


def _sensor_pose(x: float, y: float, z: float, pitch_down: float, yaw: float) -> Pose:
    """Camera at (x,y,z) looking forward (+y), pitched down, yawed about z.

    Base camera orientation maps camera z to world +y, camera x to world +x,
    camera y to world -z; pitching rotates the axis downward.
    """
    base = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, -1.0, 0.0],
        ]
    )
    rot = rot_z(yaw) @ rot_x(-pitch_down) @ base
    return Pose(rot, np.array([x, y, z]))


def build_rig(
    scooter_pose: Pose | None = None,
    width: int = 320,
    height: int = 240,
    depth_noise_sigma: float = 0.0015,
) -> list[VirtualSensor]:
    """The five-sensor rig; per-group pitches 25/55 deg, high sensor 44 deg."""
    scooter = scooter_pose if scooter_pose is not None else Pose()
    half_sep = 0.63 / 2
    inward = np.deg2rad(20.0)
    specs = [
        (-half_sep, 0.0, 1.14, np.deg2rad(25.0), -inward),
        (-half_sep, 0.0, 1.14, np.deg2rad(55.0), -inward),
        (half_sep, 0.0, 1.14, np.deg2rad(25.0), inward),
        (half_sep, 0.0, 1.14, np.deg2rad(55.0), inward),
        (0.0, 0.05, 1.56, np.deg2rad(44.0), 0.0),
    ]
    sensors = []
    for i, (x, y, z, pitch, yaw) in enumerate(specs):
        pose = scooter.compose(_sensor_pose(x, y, z, pitch, yaw))
        sensors.append(
            VirtualSensor(
                pose=pose,
                sensor_id=i,
                width=width,
                height=height,
                depth_noise_sigma=depth_noise_sigma,
            )
        )
    return sensors


def render_depth(
    scene: Scene,
    sensor: VirtualSensor,
    rng: np.random.Generator | None = None,
    prims: PrimitiveSet | None = None,
) -> PointCloud:
    """One world-frame point per pixel ray hitting geometry (nearest hit).

    Depth noise is Gaussian along the ray, truncated at 3 sigma so every
    point stays within 3*sigma of the true surface.
    """
    if prims is None:
        prims = primitive_set(scene)
    if len(prims) == 0:
        return PointCloud(np.empty((0, 3)), frame="world")
    dirs = sensor.pixel_rays()
    origins = np.broadcast_to(sensor.origin, dirs.shape)
    t, hit = _kernels.raycast_primitives(
        origins, dirs, prims.types, prims.rots, prims.trans, prims.dims
    )
    mask = hit >= 0
    t = t[mask]
    dirs = dirs[mask]
    ids = prims.ids[hit[mask]]
    if sensor.depth_noise_sigma > 0.0 and rng is not None:
        noise = rng.normal(0.0, sensor.depth_noise_sigma, t.shape)
        np.clip(noise, -3 * sensor.depth_noise_sigma, 3 * sensor.depth_noise_sigma, out=noise)
        t = t + noise
    pts = sensor.origin + t[:, None] * dirs
    return PointCloud(
        pts,
        frame="world",
        source_sensor=np.full(len(pts), sensor.sensor_id, np.int32),
        object_id=ids,
    )


def fuse_rig_clouds(
    scene: Scene, sensors: list[VirtualSensor], rng: np.random.Generator | None = None
) -> PointCloud:
    from .cloud import merge_clouds

    prims = primitive_set(scene)
    return merge_clouds([render_depth(scene, s, rng=rng, prims=prims) for s in sensors])


# ---------------------------------------------------------------------------
# laser device and IR imaging
# ---------------------------------------------------------------------------


def _beam_side(direction: np.ndarray) -> np.ndarray:
    side = np.cross(direction, np.array([0.0, 0.0, 1.0]))
    n = np.linalg.norm(side)
    if n < 1e-9:
        return np.array([1.0, 0.0, 0.0])
    return side / n


@dataclass(frozen=True)
class LaserDevice:
    """Two parallel beams separated by ``baseline`` meters."""

    origin: np.ndarray = field(default_factory=lambda: np.array([0.25, 0.05, 1.05]))
    direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.7, -0.714142842854285]))
    baseline: float = 0.032
    both_on: bool = True
    primary_on: bool = True

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if n == 0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "direction", d / n)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        if self.baseline <= 0:
            raise ValueError("baseline must be positive")

    def aimed_at(self, target: np.ndarray) -> "LaserDevice":
        """Aim so the midpoint between the two beams passes through target."""
        target = np.asarray(target, dtype=float)
        rough = _beam_side(target - self.origin)
        mid_origin = self.origin + (self.baseline / 2.0) * rough
        return LaserDevice(
            origin=self.origin,
            direction=target - mid_origin,
            baseline=self.baseline,
            both_on=self.both_on,
            primary_on=self.primary_on,
        )

    def beam_origins(self) -> list[np.ndarray]:
        """Origins of the active beams (primary, then confirmation beam)."""
        if not self.primary_on:
            return []
        origins = [self.origin]
        if self.both_on:
            origins.append(self.origin + self.baseline * _beam_side(self.direction))
        return origins

    @property
    def central_origin(self) -> np.ndarray:
        """Origin of the virtual ray halfway between the two beams."""
        return self.origin + (self.baseline / 2.0) * _beam_side(self.direction)


@dataclass(frozen=True)
class IRImage:
    intensity: np.ndarray  # (h, w) in [0, 1]
    sensor_id: int

    def __post_init__(self):
        arr = np.asarray(self.intensity, dtype=np.float64)
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("intensity must lie in [0, 1]")
        object.__setattr__(self, "intensity", arr)


AMBIENT_MAX = 0.1
BLOB_SIGMA_PX = 1.5


def beam_hits(scene: Scene, laser: LaserDevice, prims: PrimitiveSet | None = None) -> list[np.ndarray]:
    """First scene intersection of each active beam."""
    if prims is None:
        prims = primitive_set(scene)
    origins = laser.beam_origins()
    if not origins or len(prims) == 0:
        return []
    o = np.asarray(origins)
    d = np.tile(laser.direction, (len(o), 1))
    t, hit = _kernels.raycast_primitives(o, d, prims.types, prims.rots, prims.trans, prims.dims)
    return [o[i] + t[i] * laser.direction for i in range(len(o)) if hit[i] >= 0]


def central_hit(scene: Scene, laser: LaserDevice, prims: PrimitiveSet | None = None) -> np.ndarray | None:
    """Scene intersection of the virtual central ray (the user's aim point)."""
    if prims is None:
        prims = primitive_set(scene)
    if len(prims) == 0:
        return None
    o = laser.central_origin[None, :]
    d = laser.direction[None, :]
    t, hit = _kernels.raycast_primitives(o, d, prims.types, prims.rots, prims.trans, prims.dims)
    if hit[0] < 0:
        return None
    return o[0] + t[0] * laser.direction


def _visible_from(sensor: VirtualSensor, point: np.ndarray, prims: PrimitiveSet) -> bool:
    v = point - sensor.origin
    dist = np.linalg.norm(v)
    if dist < 1e-9:
        return False
    d = v / dist
    t, hit = _kernels.raycast_primitives(
        sensor.origin[None, :], d[None, :], prims.types, prims.rots, prims.trans, prims.dims
    )
    return bool(hit[0] >= 0 and t[0] >= dist - 1e-4)


def render_ir(
    scene: Scene,
    sensor: VirtualSensor,
    laser: LaserDevice,
    rng: np.random.Generator | None = None,
    prims: PrimitiveSet | None = None,
    center_noise_px: float = 0.0,
) -> IRImage:
    """Ambient noise plus a Gaussian blob per visible beam spot."""
    if prims is None:
        prims = primitive_set(scene)
    cam = sensor.ir_view()
    h, w = cam.height, cam.width
    if rng is not None:
        img = rng.uniform(0.0, AMBIENT_MAX, (h, w))
    else:
        img = np.zeros((h, w))
    for spot in beam_hits(scene, laser, prims):
        if not _visible_from(cam, spot, prims):
            continue
        (uv,), (z,) = cam.project(spot[None, :])
        if z <= 0:
            continue
        u, v = uv
        if center_noise_px > 0.0 and rng is not None:
            u += rng.normal(0.0, center_noise_px)
            v += rng.normal(0.0, center_noise_px)
        if not (0 <= u < w and 0 <= v < h):
            continue
        rad = int(np.ceil(4 * BLOB_SIGMA_PX))
        u0, v0 = int(np.floor(u)), int(np.floor(v))
        uu = np.arange(max(0, u0 - rad), min(w, u0 + rad + 1))
        vv = np.arange(max(0, v0 - rad), min(h, v0 + rad + 1))
        gu, gv = np.meshgrid(uu, vv)
        blob = np.exp(-(((gu - u) ** 2 + (gv - v) ** 2) / (2 * BLOB_SIGMA_PX**2)))
        img[vv[0] : vv[-1] + 1, uu[0] : uu[-1] + 1] += blob
    np.clip(img, 0.0, 1.0, out=img)
    return IRImage(img, cam.sensor_id)
