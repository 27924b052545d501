"""Hot numeric kernels: primitive ray casting, radius clustering, RANSAC
inlier scans, oriented-box queries and voxel collision tests.

Every kernel has a numba ``@njit`` implementation and a numpy/scipy fallback
that computes the same result.  The fallback is selected when numba is not
importable or when the environment variable ``LASERPICK_NO_NUMBA`` is set to
``1``/``true``/``yes``.  ``benchmarks/bench_kernels.py`` compares the two
paths.

Primitive encoding shared by the ray-cast kernels (canonical local frames):
    type 0  box       dims = half extents (hx, hy, hz)
    type 1  sphere    dims[0] = radius
    type 2  cylinder  dims[0] = radius, dims[1] = half height, axis = local z
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap

    prange = range

NUMBA_ENABLED = _HAVE_NUMBA and os.environ.get(
    "LASERPICK_NO_NUMBA", "0"
).lower() not in ("1", "true", "yes")

_EPS = 1e-9
_NO_HIT = np.inf

BOX = 0
SPHERE = 1
CYLINDER = 2


# ---------------------------------------------------------------------------
# scalar intersection helpers (numba path)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _hit_box(ox, oy, oz, dx, dy, dz, hx, hy, hz):
    tmin = -np.inf
    tmax = np.inf
    o = (ox, oy, oz)
    d = (dx, dy, dz)
    h = (hx, hy, hz)
    for k in range(3):
        if abs(d[k]) < _EPS:
            if o[k] < -h[k] or o[k] > h[k]:
                return _NO_HIT
        else:
            t1 = (-h[k] - o[k]) / d[k]
            t2 = (h[k] - o[k]) / d[k]
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
    if tmax < tmin or tmax < _EPS:
        return _NO_HIT
    if tmin > _EPS:
        return tmin
    return _NO_HIT


@njit(cache=True)
def _hit_sphere(ox, oy, oz, dx, dy, dz, r):
    b = ox * dx + oy * dy + oz * dz
    c = ox * ox + oy * oy + oz * oz - r * r
    disc = b * b - c
    if disc < 0.0:
        return _NO_HIT
    s = np.sqrt(disc)
    t = -b - s
    if t > _EPS:
        return t
    return _NO_HIT


@njit(cache=True)
def _hit_cylinder(ox, oy, oz, dx, dy, dz, r, hz):
    best = _NO_HIT
    a = dx * dx + dy * dy
    if a > _EPS * _EPS:
        b = ox * dx + oy * dy
        c = ox * ox + oy * oy - r * r
        disc = b * b - a * c
        if disc >= 0.0:
            s = np.sqrt(disc)
            t = (-b - s) / a
            if t > _EPS:
                z = oz + t * dz
                if -hz <= z <= hz:
                    best = t
    # caps
    if abs(dz) > _EPS:
        for zc in (-hz, hz):
            t = (zc - oz) / dz
            if _EPS < t < best:
                x = ox + t * dx
                y = oy + t * dy
                if x * x + y * y <= r * r:
                    best = t
    return best


@njit(cache=True, parallel=True)
def _raycast_nb(origins, dirs, types, rots, trans, dims):
    n = origins.shape[0]
    m = types.shape[0]
    t_out = np.full(n, _NO_HIT)
    hit = np.full(n, -1, dtype=np.int32)
    for i in prange(n):
        best = _NO_HIT
        best_m = -1
        for j in range(m):
            # local frame: p_local = R^T (p - t)
            px = origins[i, 0] - trans[j, 0]
            py = origins[i, 1] - trans[j, 1]
            pz = origins[i, 2] - trans[j, 2]
            ox = rots[j, 0, 0] * px + rots[j, 1, 0] * py + rots[j, 2, 0] * pz
            oy = rots[j, 0, 1] * px + rots[j, 1, 1] * py + rots[j, 2, 1] * pz
            oz = rots[j, 0, 2] * px + rots[j, 1, 2] * py + rots[j, 2, 2] * pz
            dx = (
                rots[j, 0, 0] * dirs[i, 0]
                + rots[j, 1, 0] * dirs[i, 1]
                + rots[j, 2, 0] * dirs[i, 2]
            )
            dy = (
                rots[j, 0, 1] * dirs[i, 0]
                + rots[j, 1, 1] * dirs[i, 1]
                + rots[j, 2, 1] * dirs[i, 2]
            )
            dz = (
                rots[j, 0, 2] * dirs[i, 0]
                + rots[j, 1, 2] * dirs[i, 1]
                + rots[j, 2, 2] * dirs[i, 2]
            )
            if types[j] == BOX:
                t = _hit_box(ox, oy, oz, dx, dy, dz, dims[j, 0], dims[j, 1], dims[j, 2])
            elif types[j] == SPHERE:
                t = _hit_sphere(ox, oy, oz, dx, dy, dz, dims[j, 0])
            else:
                t = _hit_cylinder(ox, oy, oz, dx, dy, dz, dims[j, 0], dims[j, 1])
            if t < best:
                best = t
                best_m = j
        t_out[i] = best
        hit[i] = best_m
    return t_out, hit


def _raycast_np(origins, dirs, types, rots, trans, dims):
    n = origins.shape[0]
    t_out = np.full(n, _NO_HIT)
    hit = np.full(n, -1, dtype=np.int32)
    for j in range(types.shape[0]):
        o = (origins - trans[j]) @ rots[j]
        d = dirs @ rots[j]
        if types[j] == BOX:
            t = _box_hits_np(o, d, dims[j])
        elif types[j] == SPHERE:
            t = _sphere_hits_np(o, d, dims[j, 0])
        else:
            t = _cylinder_hits_np(o, d, dims[j, 0], dims[j, 1])
        closer = t < t_out
        t_out[closer] = t[closer]
        hit[closer] = j
    return t_out, hit


def _box_hits_np(o, d, half):
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    par = np.abs(d) < _EPS
    inside = np.abs(o) <= half
    lo[par] = -np.inf
    hi[par] = np.inf
    lo[par & ~inside] = np.inf
    hi[par & ~inside] = -np.inf
    tmin = lo.max(axis=1)
    tmax = hi.min(axis=1)
    t = np.where((tmax >= tmin) & (tmax >= _EPS) & (tmin > _EPS), tmin, _NO_HIT)
    return t


def _sphere_hits_np(o, d, r):
    b = np.einsum("ij,ij->i", o, d)
    c = np.einsum("ij,ij->i", o, o) - r * r
    disc = b * b - c
    ok = disc >= 0.0
    t = np.full(o.shape[0], _NO_HIT)
    s = np.sqrt(disc[ok])
    cand = -b[ok] - s
    t_ok = np.where(cand > _EPS, cand, _NO_HIT)
    t[ok] = t_ok
    return t


def _cylinder_hits_np(o, d, r, hz):
    n = o.shape[0]
    best = np.full(n, _NO_HIT)
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1]
    c = o[:, 0] ** 2 + o[:, 1] ** 2 - r * r
    quad = a > _EPS * _EPS
    disc = b * b - a * c
    ok = quad & (disc >= 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_side = (-b - np.sqrt(np.where(ok, disc, 0.0))) / np.where(quad, a, 1.0)
    z = o[:, 2] + t_side * d[:, 2]
    side_ok = ok & (t_side > _EPS) & (np.abs(z) <= hz)
    best[side_ok] = t_side[side_ok]
    nz = np.abs(d[:, 2]) > _EPS
    for zc in (-hz, hz):
        with np.errstate(divide="ignore", invalid="ignore"):
            t_cap = (zc - o[:, 2]) / d[:, 2]
        x = o[:, 0] + t_cap * d[:, 0]
        y = o[:, 1] + t_cap * d[:, 1]
        cap_ok = nz & (t_cap > _EPS) & (x * x + y * y <= r * r) & (t_cap < best)
        best[cap_ok] = t_cap[cap_ok]
    return best


def raycast_primitives(origins, dirs, types, rots, trans, dims):
    """Nearest-hit ray cast. Returns (t, prim_index), t=inf / index=-1 on miss."""
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    types = np.ascontiguousarray(types, dtype=np.int32)
    rots = np.ascontiguousarray(rots, dtype=np.float64)
    trans = np.ascontiguousarray(trans, dtype=np.float64)
    dims = np.ascontiguousarray(dims, dtype=np.float64)
    if origins.size == 0 or types.size == 0:
        return (
            np.full(origins.shape[0], _NO_HIT),
            np.full(origins.shape[0], -1, dtype=np.int32),
        )
    if NUMBA_ENABLED:
        return _raycast_nb(origins, dirs, types, rots, trans, dims)
    return _raycast_np(origins, dirs, types, rots, trans, dims)


# ---------------------------------------------------------------------------
# connected components under a radius threshold
# ---------------------------------------------------------------------------


@njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True)
def _cluster_nb(points, radius):
    n = points.shape[0]
    parent = np.arange(n)
    inv = 1.0 / radius
    cells = np.empty((n, 3), dtype=np.int64)
    for i in range(n):
        for k in range(3):
            cells[i, k] = np.int64(np.floor(points[i, k] * inv))
    # pack to sortable keys; 21 bits per axis, offset to stay positive
    keys = np.empty(n, dtype=np.int64)
    off = np.int64(1) << 20
    for i in range(n):
        keys[i] = (
            ((cells[i, 0] + off) << 42)
            | ((cells[i, 1] + off) << 21)
            | (cells[i, 2] + off)
        )
    order = np.argsort(keys)
    sorted_keys = keys[order]
    r2 = radius * radius
    for i in range(n):
        for du in range(-1, 2):
            for dv in range(-1, 2):
                for dw in range(-1, 2):
                    key = (
                        ((cells[i, 0] + du + off) << 42)
                        | ((cells[i, 1] + dv + off) << 21)
                        | (cells[i, 2] + dw + off)
                    )
                    lo = np.searchsorted(sorted_keys, key)
                    hi = np.searchsorted(sorted_keys, key + 1)
                    for s in range(lo, hi):
                        j = order[s]
                        if j <= i:
                            continue
                        dx = points[i, 0] - points[j, 0]
                        dy = points[i, 1] - points[j, 1]
                        dz = points[i, 2] - points[j, 2]
                        if dx * dx + dy * dy + dz * dz <= r2:
                            ri = _find(parent, i)
                            rj = _find(parent, j)
                            if ri != rj:
                                parent[rj] = ri
    roots = np.empty(n, dtype=np.int64)
    for i in range(n):
        roots[i] = _find(parent, i)
    return roots


def _cluster_np(points, radius):
    from scipy import sparse
    from scipy.spatial import cKDTree

    n = points.shape[0]
    tree = cKDTree(points)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    graph = sparse.coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
    )
    _, labels = sparse.csgraph.connected_components(graph, directed=False)
    return labels


def cluster_radius(points, radius):
    """Labels of the connected components of the <=radius proximity graph.

    Labels are canonical: component of point 0 gets 0, the next unseen
    component 1, etc.  Identical for both kernel paths.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    raw = _cluster_nb(points, radius) if NUMBA_ENABLED else _cluster_np(points, radius)
    labels = np.empty(n, dtype=np.int64)
    remap: dict[int, int] = {}
    nxt = 0
    for i, r in enumerate(raw):
        r = int(r)
        if r not in remap:
            remap[r] = nxt
            nxt += 1
        labels[i] = remap[r]
    return labels


# ---------------------------------------------------------------------------
# RANSAC plane inlier scan
# ---------------------------------------------------------------------------


@njit(cache=True)
def _plane_scan_nb(points, normals, offsets, valid, dist_th):
    k = normals.shape[0]
    n = points.shape[0]
    counts = np.zeros(k, dtype=np.int64)
    for it in range(k):
        if not valid[it]:
            continue
        a = normals[it, 0]
        b = normals[it, 1]
        c = normals[it, 2]
        d = offsets[it]
        cnt = 0
        for i in range(n):
            r = a * points[i, 0] + b * points[i, 1] + c * points[i, 2] - d
            if -dist_th <= r <= dist_th:
                cnt += 1
        counts[it] = cnt
    return counts


def _plane_scan_np(points, normals, offsets, valid, dist_th):
    counts = np.zeros(normals.shape[0], dtype=np.int64)
    for it in range(normals.shape[0]):
        if not valid[it]:
            continue
        r = points @ normals[it] - offsets[it]
        counts[it] = int(np.count_nonzero(np.abs(r) <= dist_th))
    return counts


def plane_inlier_counts(points, normals, offsets, valid, dist_th):
    """Inlier count per candidate plane (unit normal, offset); invalid rows 0."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    normals = np.ascontiguousarray(normals, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.float64)
    valid = np.ascontiguousarray(valid, dtype=np.bool_)
    if NUMBA_ENABLED:
        return _plane_scan_nb(points, normals, offsets, valid, dist_th)
    return _plane_scan_np(points, normals, offsets, valid, dist_th)


# ---------------------------------------------------------------------------
# oriented-box point queries
# ---------------------------------------------------------------------------


@njit(cache=True)
def _obb_any_nb(points, rot, center, half):
    for i in range(points.shape[0]):
        px = points[i, 0] - center[0]
        py = points[i, 1] - center[1]
        pz = points[i, 2] - center[2]
        x = rot[0, 0] * px + rot[1, 0] * py + rot[2, 0] * pz
        if x < -half[0] or x > half[0]:
            continue
        y = rot[0, 1] * px + rot[1, 1] * py + rot[2, 1] * pz
        if y < -half[1] or y > half[1]:
            continue
        z = rot[0, 2] * px + rot[1, 2] * py + rot[2, 2] * pz
        if -half[2] <= z <= half[2]:
            return True
    return False


def obb_mask(points, rot, center, half):
    """Boolean mask of points inside an oriented box (numpy, both paths)."""
    local = (points - center) @ rot
    return (np.abs(local) <= half).all(axis=1)


def obb_contains_any(points, rot, center, half):
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.shape[0] == 0:
        return False
    rot = np.ascontiguousarray(rot, dtype=np.float64)
    center = np.ascontiguousarray(center, dtype=np.float64)
    half = np.ascontiguousarray(half, dtype=np.float64)
    if NUMBA_ENABLED:
        return bool(_obb_any_nb(points, rot, center, half))
    return bool(obb_mask(points, rot, center, half).any())


# ---------------------------------------------------------------------------
# voxel occupancy vs oriented box
# ---------------------------------------------------------------------------


@njit(cache=True)
def _voxel_box_nb(grid, origin, vsize, rot, center, half, margin):
    nx, ny, nz = grid.shape
    # AABB of the box in world coordinates
    ext = np.empty(3)
    for k in range(3):
        ext[k] = (
            abs(rot[k, 0]) * half[0]
            + abs(rot[k, 1]) * half[1]
            + abs(rot[k, 2]) * half[2]
        )
    h0 = half[0] + margin
    h1 = half[1] + margin
    h2 = half[2] + margin
    i0 = max(0, int(np.floor((center[0] - ext[0] - margin - origin[0]) / vsize)))
    j0 = max(0, int(np.floor((center[1] - ext[1] - margin - origin[1]) / vsize)))
    k0 = max(0, int(np.floor((center[2] - ext[2] - margin - origin[2]) / vsize)))
    i1 = min(nx - 1, int(np.floor((center[0] + ext[0] + margin - origin[0]) / vsize)))
    j1 = min(ny - 1, int(np.floor((center[1] + ext[1] + margin - origin[1]) / vsize)))
    k1 = min(nz - 1, int(np.floor((center[2] + ext[2] + margin - origin[2]) / vsize)))
    for i in range(i0, i1 + 1):
        cx = origin[0] + (i + 0.5) * vsize - center[0]
        for j in range(j0, j1 + 1):
            cy = origin[1] + (j + 0.5) * vsize - center[1]
            for k in range(k0, k1 + 1):
                if not grid[i, j, k]:
                    continue
                cz = origin[2] + (k + 0.5) * vsize - center[2]
                x = rot[0, 0] * cx + rot[1, 0] * cy + rot[2, 0] * cz
                if x < -h0 or x > h0:
                    continue
                y = rot[0, 1] * cx + rot[1, 1] * cy + rot[2, 1] * cz
                if y < -h1 or y > h1:
                    continue
                z = rot[0, 2] * cx + rot[1, 2] * cy + rot[2, 2] * cz
                if -h2 <= z <= h2:
                    return True
    return False


def _voxel_box_np(grid, origin, vsize, rot, center, half, margin):
    ext = np.abs(rot) @ half
    lo = np.floor((center - ext - margin - origin) / vsize).astype(np.int64)
    hi = np.floor((center + ext + margin - origin) / vsize).astype(np.int64)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.asarray(grid.shape) - 1)
    if np.any(hi < lo):
        return False
    sub = grid[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1]
    idx = np.argwhere(sub)
    if idx.size == 0:
        return False
    centers = origin + (idx + lo + 0.5) * vsize
    local = (centers - center) @ rot
    return bool((np.abs(local) <= half + margin).all(axis=1).any())


def voxel_box_collides(grid, origin, vsize, rot, center, half, margin):
    """True if any occupied voxel center lies in the box grown by margin."""
    if grid.size == 0:
        return False
    rot = np.ascontiguousarray(rot, dtype=np.float64)
    center = np.ascontiguousarray(center, dtype=np.float64)
    half = np.ascontiguousarray(half, dtype=np.float64)
    origin = np.ascontiguousarray(origin, dtype=np.float64)
    if NUMBA_ENABLED:
        return bool(_voxel_box_nb(grid, origin, vsize, rot, center, half, margin))
    return bool(_voxel_box_np(grid, origin, vsize, rot, center, half, margin))
