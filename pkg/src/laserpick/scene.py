"""Parametric ground-truth scenes: support surfaces plus box / cylinder /
sphere objects, a seeded rejection sampler, analytic signed distances and
surface sampling for oracles, and a YAML file format."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np
import yaml

from . import _kernels
from .geometry import Pose, rot_z


class SceneSampleError(RuntimeError):
    """Rejection sampling could not place all objects."""


@dataclass(frozen=True)
class Surface:
    """Horizontal rectangular support rendered as a thin slab."""

    height: float
    extent: tuple[float, float]
    center: tuple[float, float] = (0.0, 0.0)
    yaw: float = 0.0
    thickness: float = 0.04


@dataclass(frozen=True)
class Wall:
    """Vertical slab (environment backdrop, never graspable)."""

    center: tuple[float, float, float]
    extent: tuple[float, float]  # width (along x after yaw), height (along z)
    yaw: float = 0.0
    thickness: float = 0.04


@dataclass(frozen=True)
class SceneObject:
    kind: str  # box | cylinder | sphere
    pose: Pose
    object_id: int
    dims: tuple[float, ...] = ()
    # box: (dx, dy, dz) full extents; cylinder: (radius, height); sphere: (radius,)

    def bottom_z(self) -> float:
        if self.kind == "box":
            return self.pose.translation[2] - self.dims[2] / 2
        if self.kind == "cylinder":
            return self.pose.translation[2] - self.dims[1] / 2
        return self.pose.translation[2] - self.dims[0]

    def top_z(self) -> float:
        if self.kind == "box":
            return self.pose.translation[2] + self.dims[2] / 2
        if self.kind == "cylinder":
            return self.pose.translation[2] + self.dims[1] / 2
        return self.pose.translation[2] + self.dims[0]

    def xy_radius(self) -> float:
        """Conservative horizontal bounding radius for clearance checks."""
        if self.kind == "box":
            return float(np.hypot(self.dims[0], self.dims[1]) / 2)
        return float(self.dims[0])


@dataclass(frozen=True)
class Scene:
    surfaces: tuple[Surface, ...] = ()
    objects: tuple[SceneObject, ...] = ()
    walls: tuple[Wall, ...] = ()

    def __post_init__(self):
        ids = [o.object_id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise ValueError("object ids must be unique")

    def object_by_id(self, object_id: int) -> SceneObject:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise KeyError(object_id)

    def without_object(self, object_id: int) -> "Scene":
        return replace(
            self, objects=tuple(o for o in self.objects if o.object_id != object_id)
        )


# ---------------------------------------------------------------------------
# primitive arrays for the ray-cast kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrimitiveSet:
    """Kernel-ready encoding of a scene; ids[i] is 0 for surfaces."""

    types: np.ndarray
    rots: np.ndarray
    trans: np.ndarray
    dims: np.ndarray
    ids: np.ndarray

    def __len__(self) -> int:
        return len(self.types)


def primitive_set(scene: Scene, include_surfaces: bool = True) -> PrimitiveSet:
    types, rots, trans, dims, ids = [], [], [], [], []
    if include_surfaces:
        for s in scene.surfaces:
            types.append(_kernels.BOX)
            rots.append(rot_z(s.yaw))
            trans.append(
                np.array([s.center[0], s.center[1], s.height - s.thickness / 2])
            )
            dims.append(np.array([s.extent[0] / 2, s.extent[1] / 2, s.thickness / 2]))
            ids.append(0)
        for w in scene.walls:
            types.append(_kernels.BOX)
            rots.append(rot_z(w.yaw))
            trans.append(np.asarray(w.center, dtype=float))
            dims.append(np.array([w.extent[0] / 2, w.thickness / 2, w.extent[1] / 2]))
            ids.append(0)
    for o in scene.objects:
        rots.append(o.pose.rotation)
        trans.append(o.pose.translation)
        if o.kind == "box":
            types.append(_kernels.BOX)
            dims.append(np.array(o.dims) / 2)
        elif o.kind == "cylinder":
            types.append(_kernels.CYLINDER)
            dims.append(np.array([o.dims[0], o.dims[1] / 2, 0.0]))
        elif o.kind == "sphere":
            types.append(_kernels.SPHERE)
            dims.append(np.array([o.dims[0], 0.0, 0.0]))
        else:
            raise ValueError(f"unknown primitive kind {o.kind!r}")
        ids.append(o.object_id)
    if not types:
        return PrimitiveSet(
            np.empty(0, np.int32),
            np.empty((0, 3, 3)),
            np.empty((0, 3)),
            np.empty((0, 3)),
            np.empty(0, np.int32),
        )
    return PrimitiveSet(
        np.asarray(types, np.int32),
        np.asarray(rots, np.float64),
        np.asarray(trans, np.float64),
        np.asarray(dims, np.float64),
        np.asarray(ids, np.int32),
    )


# ---------------------------------------------------------------------------
# analytic signed distance and surface sampling (oracle support)
# ---------------------------------------------------------------------------


def signed_distance(obj: SceneObject, points: np.ndarray) -> np.ndarray:
    """Signed distance to the primitive surface; negative inside."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    local = (pts - obj.pose.translation) @ obj.pose.rotation
    if obj.kind == "box":
        half = np.asarray(obj.dims) / 2
        q = np.abs(local) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside
    if obj.kind == "sphere":
        return np.linalg.norm(local, axis=1) - obj.dims[0]
    # cylinder
    r, h = obj.dims[0], obj.dims[1] / 2
    dr = np.hypot(local[:, 0], local[:, 1]) - r
    dz = np.abs(local[:, 2]) - h
    q = np.stack([dr, dz], axis=1)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(q.max(axis=1), 0.0)
    return outside + inside


def sample_object_surface(
    obj: SceneObject, n: int, rng: np.random.Generator, include_bottom: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Area-weighted samples on the primitive surface with outward normals."""
    if obj.kind == "box":
        hx, hy, hz = np.asarray(obj.dims) / 2
        faces = [
            (np.array([1.0, 0, 0]), hx, (hy, hz), 4 * hy * hz),
            (np.array([-1.0, 0, 0]), hx, (hy, hz), 4 * hy * hz),
            (np.array([0, 1.0, 0]), hy, (hx, hz), 4 * hx * hz),
            (np.array([0, -1.0, 0]), hy, (hx, hz), 4 * hx * hz),
            (np.array([0, 0, 1.0]), hz, (hx, hy), 4 * hx * hy),
        ]
        if include_bottom:
            faces.append((np.array([0, 0, -1.0]), hz, (hx, hy), 4 * hx * hy))
        areas = np.array([f[3] for f in faces])
        counts = rng.multinomial(n, areas / areas.sum())
        pts, nrm = [], []
        for (normal, off, (a, b), _), cnt in zip(faces, counts):
            if cnt == 0:
                continue
            u = rng.uniform(-a, a, cnt)
            v = rng.uniform(-b, b, cnt)
            axis = int(np.argmax(np.abs(normal)))
            p = np.zeros((cnt, 3))
            p[:, axis] = off * np.sign(normal[axis])
            other = [k for k in range(3) if k != axis]
            p[:, other[0]] = u
            p[:, other[1]] = v
            pts.append(p)
            nrm.append(np.tile(normal, (cnt, 1)))
        local = np.concatenate(pts)
        local_n = np.concatenate(nrm)
    elif obj.kind == "sphere":
        r = obj.dims[0]
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        local = r * v
        local_n = v
    else:
        r, h = obj.dims[0], obj.dims[1]
        side_area = 2 * np.pi * r * h
        cap_area = np.pi * r * r
        areas = [side_area, cap_area] + ([cap_area] if include_bottom else [])
        counts = rng.multinomial(n, np.array(areas) / sum(areas))
        theta = rng.uniform(0, 2 * np.pi, counts[0])
        z = rng.uniform(-h / 2, h / 2, counts[0])
        side = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
        side_n = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=1)
        rad = r * np.sqrt(rng.uniform(0, 1, counts[1]))
        ang = rng.uniform(0, 2 * np.pi, counts[1])
        top = np.stack([rad * np.cos(ang), rad * np.sin(ang), np.full(counts[1], h / 2)], axis=1)
        top_n = np.tile([0.0, 0.0, 1.0], (counts[1], 1))
        parts = [side, top]
        parts_n = [side_n, top_n]
        if include_bottom:
            rad = r * np.sqrt(rng.uniform(0, 1, counts[2]))
            ang = rng.uniform(0, 2 * np.pi, counts[2])
            bot = np.stack(
                [rad * np.cos(ang), rad * np.sin(ang), np.full(counts[2], -h / 2)], axis=1
            )
            parts.append(bot)
            parts_n.append(np.tile([0.0, 0.0, -1.0], (counts[2], 1)))
        local = np.concatenate(parts)
        local_n = np.concatenate(parts_n)
    world = local @ obj.pose.rotation.T + obj.pose.translation
    world_n = local_n @ obj.pose.rotation.T
    return world, world_n


# ---------------------------------------------------------------------------
# seeded scene samplers
# ---------------------------------------------------------------------------

DEFAULT_TABLE = Surface(height=0.46, extent=(0.7, 0.5), center=(0.0, 0.72))
# backdrop behind the table; keeps the tabletop well under the plane-removal
# cap by giving the far rays something non-horizontal to land on
DEFAULT_WALL = Wall(center=(0.0, 1.25, 0.72), extent=(0.9, 0.5))

_KIND_CYCLE = ("box", "cylinder", "sphere")


def _random_object(rng: np.random.Generator, kind: str, object_id: int) -> SceneObject:
    if kind == "box":
        dx = rng.uniform(0.035, 0.07)
        dy = rng.uniform(0.035, 0.07)
        dz = rng.uniform(0.08, 0.16)
        return SceneObject("box", Pose(rot_z(rng.uniform(0, np.pi)), np.zeros(3)), object_id, (dx, dy, dz))
    if kind == "cylinder":
        r = rng.uniform(0.02, 0.032)
        h = rng.uniform(0.08, 0.16)
        return SceneObject("cylinder", Pose(), object_id, (r, h))
    r = rng.uniform(0.026, 0.032)
    return SceneObject("sphere", Pose(), object_id, (r,))


def _placed(obj: SceneObject, surface: Surface, x: float, y: float) -> SceneObject:
    if obj.kind == "box":
        z = surface.height + obj.dims[2] / 2
    elif obj.kind == "cylinder":
        z = surface.height + obj.dims[1] / 2
    else:
        z = surface.height + obj.dims[0]
    return replace(obj, pose=Pose(obj.pose.rotation, np.array([x, y, z])))


def sample_scene(
    rng_seed: int,
    object_count: int,
    surface_spec: Surface | None = None,
    clearance: float = 0.02,
    margin: float = 0.06,
    max_attempts: int = 1000,
) -> Scene:
    """Deterministic tabletop scene with pairwise object clearance."""
    surface = surface_spec if surface_spec is not None else DEFAULT_TABLE
    rng = np.random.default_rng(rng_seed)
    placed: list[SceneObject] = []
    xr = surface.extent[0] / 2 - margin
    yr = surface.extent[1] / 2 - margin
    if object_count > 0 and (xr <= 0 or yr <= 0):
        raise SceneSampleError("surface too small for requested margin")
    for oid in range(1, object_count + 1):
        kind = _KIND_CYCLE[int(rng.integers(0, len(_KIND_CYCLE)))]
        obj = _random_object(rng, kind, oid)
        ok = False
        for _ in range(max_attempts):
            x = surface.center[0] + rng.uniform(-xr, xr)
            y = surface.center[1] + rng.uniform(-yr, yr)
            cand = _placed(obj, surface, x, y)
            if all(
                np.hypot(
                    cand.pose.translation[0] - p.pose.translation[0],
                    cand.pose.translation[1] - p.pose.translation[1],
                )
                - cand.xy_radius()
                - p.xy_radius()
                >= clearance
                for p in placed
            ):
                placed.append(cand)
                ok = True
                break
        if not ok:
            raise SceneSampleError(
                f"could not place object {oid} after {max_attempts} attempts"
            )
    return Scene(surfaces=(surface,), objects=tuple(placed), walls=(DEFAULT_WALL,))


def sample_adjacent_pair(
    rng_seed: int,
    surface_spec: Surface | None = None,
    gap_range: tuple[float, float] = (0.002, 0.012),
) -> Scene:
    """Two objects placed next to each other (small surface gap)."""
    surface = surface_spec if surface_spec is not None else DEFAULT_TABLE
    rng = np.random.default_rng(rng_seed)
    kinds = [
        _KIND_CYCLE[int(rng.integers(0, len(_KIND_CYCLE)))],
        _KIND_CYCLE[int(rng.integers(0, len(_KIND_CYCLE)))],
    ]
    a = _random_object(rng, kinds[0], 1)
    b = _random_object(rng, kinds[1], 2)
    gap = rng.uniform(*gap_range)
    xr = surface.extent[0] / 2 - 0.12
    yr = surface.extent[1] / 2 - 0.12
    x = surface.center[0] + rng.uniform(-xr, xr)
    y = surface.center[1] + rng.uniform(-yr, yr)
    ang = rng.uniform(0, 2 * np.pi)
    d = a.xy_radius() + b.xy_radius() + gap
    a = _placed(a, surface, x, y)
    b = _placed(b, surface, x + d * np.cos(ang), y + d * np.sin(ang))
    return Scene(surfaces=(surface,), objects=(a, b), walls=(DEFAULT_WALL,))


# ---------------------------------------------------------------------------
# scene file format
# ---------------------------------------------------------------------------


def scene_to_dict(scene: Scene) -> dict:
    return {
        "frame": "world",
        "surfaces": [
            {
                "height": float(s.height),
                "extent": [float(v) for v in s.extent],
                "center": [float(v) for v in s.center],
                "yaw": float(s.yaw),
                "thickness": float(s.thickness),
            }
            for s in scene.surfaces
        ],
        "walls": [
            {
                "center": [float(v) for v in w.center],
                "extent": [float(v) for v in w.extent],
                "yaw": float(w.yaw),
                "thickness": float(w.thickness),
            }
            for w in scene.walls
        ],
        "objects": [
            {
                "kind": o.kind,
                "id": int(o.object_id),
                "dims": [float(v) for v in o.dims],
                "position": [float(v) for v in o.pose.translation],
                "rotation": [[float(v) for v in row] for row in o.pose.rotation],
            }
            for o in scene.objects
        ],
    }


def scene_from_dict(data: dict) -> Scene:
    surfaces = tuple(
        Surface(
            height=float(s["height"]),
            extent=tuple(s["extent"]),
            center=tuple(s.get("center", (0.0, 0.0))),
            yaw=float(s.get("yaw", 0.0)),
            thickness=float(s.get("thickness", 0.04)),
        )
        for s in data.get("surfaces", [])
    )
    walls = tuple(
        Wall(
            center=tuple(w["center"]),
            extent=tuple(w["extent"]),
            yaw=float(w.get("yaw", 0.0)),
            thickness=float(w.get("thickness", 0.04)),
        )
        for w in data.get("walls", [])
    )
    objects = tuple(
        SceneObject(
            kind=o["kind"],
            pose=Pose(np.asarray(o.get("rotation", np.eye(3).tolist())), np.asarray(o["position"])),
            object_id=int(o["id"]),
            dims=tuple(o["dims"]),
        )
        for o in data.get("objects", [])
    )
    return Scene(surfaces=surfaces, objects=objects, walls=walls)


def save_scene(scene: Scene, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scene_to_dict(scene), fh, sort_keys=False)


def load_scene(path) -> Scene:
    with open(path) as fh:
        return scene_from_dict(yaml.safe_load(fh))


def ground_truth_cloud(scene: Scene, points_per_object: int = 1500, seed: int = 0):
    """Labeled surface samples of every object (id 0 for supports)."""
    from .cloud import PointCloud

    rng = np.random.default_rng(seed)
    pts, nrm, ids = [], [], []
    for s in scene.surfaces:
        nx = max(2, int(s.extent[0] / 0.01))
        ny = max(2, int(s.extent[1] / 0.01))
        gx, gy = np.meshgrid(
            np.linspace(-s.extent[0] / 2, s.extent[0] / 2, nx),
            np.linspace(-s.extent[1] / 2, s.extent[1] / 2, ny),
        )
        p = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, 0.0)], axis=1)
        p = p @ rot_z(s.yaw).T
        p[:, 0] += s.center[0]
        p[:, 1] += s.center[1]
        p[:, 2] += s.height
        pts.append(p)
        nrm.append(np.tile([0.0, 0.0, 1.0], (len(p), 1)))
        ids.append(np.zeros(len(p), np.int32))
    for o in scene.objects:
        p, n = sample_object_surface(o, points_per_object, rng)
        pts.append(p)
        nrm.append(n)
        ids.append(np.full(len(p), o.object_id, np.int32))
    if not pts:
        return PointCloud(np.empty((0, 3)))
    return PointCloud(
        np.concatenate(pts),
        normals=np.concatenate(nrm),
        object_id=np.concatenate(ids),
    )
