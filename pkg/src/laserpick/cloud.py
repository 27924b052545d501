"""Point cloud container, rigid transforms, merging and PLY I/O."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import Pose


class FrameMismatch(ValueError):
    """Clouds expressed in different frames were combined."""


@dataclass(frozen=True)
class PointCloud:
    """Points in meters with optional per-point normals and labels.

    ``object_id`` carries ground-truth labels from the simulator and is only
    consumed by oracle/metrics code, never by the perception operators.
    """

    points: np.ndarray
    frame: str = "world"
    normals: Optional[np.ndarray] = None
    source_sensor: Optional[np.ndarray] = None
    object_id: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if not np.isfinite(pts).all():
            raise ValueError("point coordinates must be finite")
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if nrm.shape[0] != pts.shape[0]:
                raise ValueError("normals length mismatch")
            lens = np.linalg.norm(nrm, axis=1)
            if nrm.shape[0] and not np.allclose(lens, 1.0, atol=1e-6):
                raise ValueError("normals must be unit length")
            object.__setattr__(self, "normals", nrm)
        if self.source_sensor is not None:
            src = np.asarray(self.source_sensor, dtype=np.int32).reshape(-1)
            if src.shape[0] != pts.shape[0]:
                raise ValueError("source_sensor length mismatch")
            object.__setattr__(self, "source_sensor", src)
        if self.object_id is not None:
            oid = np.asarray(self.object_id, dtype=np.int32).reshape(-1)
            if oid.shape[0] != pts.shape[0]:
                raise ValueError("object_id length mismatch")
            object.__setattr__(self, "object_id", oid)

    def __len__(self) -> int:
        return self.points.shape[0]

    def select(self, index) -> "PointCloud":
        """Sub-cloud at the given indices/mask, all attributes carried along."""
        return PointCloud(
            self.points[index],
            frame=self.frame,
            normals=None if self.normals is None else self.normals[index],
            source_sensor=(
                None if self.source_sensor is None else self.source_sensor[index]
            ),
            object_id=None if self.object_id is None else self.object_id[index],
        )

    def with_normals(self, normals: np.ndarray) -> "PointCloud":
        return replace(self, normals=normals)


def empty_cloud(frame: str = "world") -> PointCloud:
    return PointCloud(np.empty((0, 3)), frame=frame)


def transform_cloud(cloud: PointCloud, pose: Pose, frame: Optional[str] = None) -> PointCloud:
    """Rigidly transform points (and normals).  Identity pose is a no-op copy."""
    if pose.is_identity():
        return replace(cloud, frame=frame if frame is not None else cloud.frame)
    pts = pose.apply(cloud.points)
    nrm = None if cloud.normals is None else pose.apply_vectors(cloud.normals)
    return PointCloud(
        pts,
        frame=frame if frame is not None else cloud.frame,
        normals=nrm,
        source_sensor=cloud.source_sensor,
        object_id=cloud.object_id,
    )


def merge_clouds(clouds: list[PointCloud]) -> PointCloud:
    """Concatenate clouds sharing one frame; per-point attributes preserved.

    Optional attributes survive only if present on every input.
    """
    if not clouds:
        return empty_cloud()
    frame = clouds[0].frame
    for c in clouds[1:]:
        if c.frame != frame:
            raise FrameMismatch(f"cannot merge frame {c.frame!r} into {frame!r}")
    pts = np.concatenate([c.points for c in clouds])
    have_n = all(c.normals is not None for c in clouds)
    have_s = all(c.source_sensor is not None for c in clouds)
    have_o = all(c.object_id is not None for c in clouds)
    return PointCloud(
        pts,
        frame=frame,
        normals=np.concatenate([c.normals for c in clouds]) if have_n else None,
        source_sensor=(
            np.concatenate([c.source_sensor for c in clouds]) if have_s else None
        ),
        object_id=np.concatenate([c.object_id for c in clouds]) if have_o else None,
    )


def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """Keep the first point (by index) in each occupied voxel; deterministic."""
    if len(cloud) == 0 or voxel <= 0:
        return cloud
    idx = np.floor(cloud.points / voxel).astype(np.int64)
    order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0]))
    sorted_idx = idx[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = (np.diff(sorted_idx, axis=0) != 0).any(axis=1)
    keep = np.sort(order[first])
    return cloud.select(keep)


# ---------------------------------------------------------------------------
# PLY import/export
# ---------------------------------------------------------------------------

_FMT = "%.9g"


def _ply_header(cloud: PointCloud, binary: bool) -> str:
    lines = ["ply"]
    lines.append(
        "format binary_little_endian 1.0" if binary else "format ascii 1.0"
    )
    lines.append(f"comment frame {cloud.frame}")
    lines.append(f"element vertex {len(cloud)}")
    kind = "double" if binary else "float"
    for ax in ("x", "y", "z"):
        lines.append(f"property {kind} {ax}")
    if cloud.normals is not None:
        for ax in ("nx", "ny", "nz"):
            lines.append(f"property {kind} {ax}")
    if cloud.object_id is not None:
        lines.append("property int object_id")
    if cloud.source_sensor is not None:
        lines.append("property int source_sensor")
    lines.append("end_header")
    return "\n".join(lines) + "\n"


def save_ply(cloud: PointCloud, path, binary: bool = False) -> None:
    """Write a PLY file; ascii uses 9 significant digits per coordinate."""
    header = _ply_header(cloud, binary)
    cols: list[np.ndarray] = [cloud.points]
    if cloud.normals is not None:
        cols.append(cloud.normals)
    ints: list[np.ndarray] = []
    if cloud.object_id is not None:
        ints.append(cloud.object_id)
    if cloud.source_sensor is not None:
        ints.append(cloud.source_sensor)
    if binary:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fl = np.concatenate(cols, axis=1) if cols else np.empty((0, 0))
            for i in range(len(cloud)):
                fh.write(struct.pack(f"<{fl.shape[1]}d", *fl[i]))
                for arr in ints:
                    fh.write(struct.pack("<i", int(arr[i])))
        return
    with open(path, "w") as fh:
        fh.write(header)
        fl = np.concatenate(cols, axis=1) if cols else np.empty((0, 0))
        for i in range(len(cloud)):
            parts = [_FMT % v for v in fl[i]]
            parts.extend(str(int(arr[i])) for arr in ints)
            fh.write(" ".join(parts) + "\n")


def load_ply(path) -> PointCloud:
    with open(path, "rb") as fh:
        data = fh.read()
    head_end = data.find(b"end_header\n")
    if head_end < 0:
        raise ValueError("not a PLY file: missing end_header")
    header = data[: head_end + 11].decode("ascii")
    body = data[head_end + 11 :]
    lines = header.strip().splitlines()
    if lines[0] != "ply":
        raise ValueError("not a PLY file")
    binary = False
    frame = "world"
    count = 0
    props: list[tuple[str, str]] = []
    for line in lines[1:]:
        if line.startswith("format"):
            binary = "binary_little_endian" in line
        elif line.startswith("comment frame "):
            frame = line[len("comment frame ") :]
        elif line.startswith("element vertex"):
            count = int(line.split()[-1])
        elif line.startswith("property"):
            _, kind, name = line.split()
            props.append((kind, name))
    names = [n for _, n in props]
    if binary:
        fmt = "<" + "".join("d" if k == "double" else ("f" if k == "float" else "i") for k, n in props)
        size = struct.calcsize(fmt)
        rows = [struct.unpack_from(fmt, body, i * size) for i in range(count)]
        table = {n: np.array([r[j] for r in rows]) for j, n in enumerate(names)}
    else:
        text = body.decode("ascii").split()
        ncol = len(names)
        arr = np.array(text[: count * ncol], dtype=np.float64).reshape(count, ncol)
        table = {n: arr[:, j] for j, n in enumerate(names)}
    pts = np.stack([table["x"], table["y"], table["z"]], axis=1) if count else np.empty((0, 3))
    normals = None
    if "nx" in table:
        normals = np.stack([table["nx"], table["ny"], table["nz"]], axis=1)
    object_id = table.get("object_id")
    source = table.get("source_sensor")
    return PointCloud(
        pts,
        frame=frame,
        normals=normals,
        object_id=None if object_id is None else object_id.astype(np.int32),
        source_sensor=None if source is None else source.astype(np.int32),
    )
