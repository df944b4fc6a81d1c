"""Ray-mesh intersection, surface sampling, and point-set distances.

Quads are split into two triangles along their stored 0-2 diagonal (the same
diagonal the tokenizer encodes). Intersection queries run against a bounding
volume hierarchy with batched traversal: each node test is vectorized over
the rays still active at that node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptySetError, NoAreaError
from .mesh import Mesh

_LEAF_SIZE = 8
_TINY = 1e-30
_EDGE_EPS = 1e-12


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray  # unit vector

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(d)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"ray direction must be unit length, got |d| = {norm}")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class RayHit:
    face_id: int
    t: float
    normal: np.ndarray  # unit, oriented by source-face winding (CCW = outward)


class TriangulatedView:
    """Immutable triangle view of a mesh with a BVH for first-hit queries."""

    def __init__(self, mesh: Mesh):
        tris = []
        tri_face = []
        for fid, face in enumerate(mesh.faces):
            tris.append((face[0], face[1], face[2]))
            tri_face.append(fid)
            if len(face) == 4:
                tris.append((face[0], face[2], face[3]))
                tri_face.append(fid)
        self.mesh = mesh
        self.triangles = mesh.vertices[np.array(tris, dtype=np.int64).reshape(-1, 3)]
        self.tri_face = np.array(tri_face, dtype=np.int64)
        self._build_normals()
        self._build_bvh()

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def _build_normals(self):
        v0, v1, v2 = self.triangles[:, 0], self.triangles[:, 1], self.triangles[:, 2]
        n = np.cross(v1 - v0, v2 - v0)
        self.tri_areas = 0.5 * np.linalg.norm(n, axis=1)
        lens = np.linalg.norm(n, axis=1)
        lens[lens == 0.0] = 1.0
        self.tri_normals = n / lens[:, None]

    def _build_bvh(self):
        n = self.n_triangles
        centroids = self.triangles.mean(axis=1)
        tri_lo = self.triangles.min(axis=1)
        tri_hi = self.triangles.max(axis=1)

        order = np.arange(n)
        node_lo: list[np.ndarray] = []
        node_hi: list[np.ndarray] = []
        node_left: list[int] = []  # -1 for leaves
        node_right: list[int] = []
        node_start: list[int] = []
        node_count: list[int] = []

        def build(start: int, count: int) -> int:
            idx = len(node_lo)
            sel = order[start : start + count]
            node_lo.append(tri_lo[sel].min(axis=0) if count else np.zeros(3))
            node_hi.append(tri_hi[sel].max(axis=0) if count else np.zeros(3))
            node_left.append(-1)
            node_right.append(-1)
            node_start.append(start)
            node_count.append(count)
            if count <= _LEAF_SIZE:
                return idx
            cents = centroids[sel]
            axis = int(np.argmax(cents.max(axis=0) - cents.min(axis=0)))
            part = np.argsort(cents[:, axis], kind="stable")
            order[start : start + count] = sel[part]
            half = count // 2
            if half == 0 or half == count:
                return idx
            node_left[idx] = build(start, half)
            node_right[idx] = build(start + half, count - half)
            return idx

        if n:
            build(0, n)
        else:
            node_lo.append(np.zeros(3))
            node_hi.append(np.zeros(3))
            node_left.append(-1)
            node_right.append(-1)
            node_start.append(0)
            node_count.append(0)

        self._order = order
        self._node_lo = np.array(node_lo)
        self._node_hi = np.array(node_hi)
        self._node_left = np.array(node_left)
        self._node_right = np.array(node_right)
        self._node_start = np.array(node_start)
        self._node_count = np.array(node_count)

    # -- queries --------------------------------------------------------------

    def raycast_batch(
        self, origins: np.ndarray, dirs: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """First hit for each ray.

        Returns (t, tri_idx): t = inf and tri_idx = -1 for misses. Ties in t
        break toward the lower triangle index.
        """
        origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
        n_rays = len(origins)
        best_t = np.full(n_rays, np.inf)
        best_tri = np.full(n_rays, -1, dtype=np.int64)
        if self.n_triangles == 0 or n_rays == 0:
            return best_t, best_tri

        safe = np.where(np.abs(dirs) < _TINY, np.where(dirs < 0, -_TINY, _TINY), dirs)
        inv = 1.0 / safe

        def slab(node: int, rays: np.ndarray) -> np.ndarray:
            o, iv = origins[rays], inv[rays]
            t1 = (self._node_lo[node] - o) * iv
            t2 = (self._node_hi[node] - o) * iv
            tmin = np.minimum(t1, t2).max(axis=1)
            tmax = np.maximum(t1, t2).min(axis=1)
            return rays[(tmax >= np.maximum(tmin, 0.0) - 1e-12) & (tmin <= best_t[rays])]

        def visit(node: int, rays: np.ndarray):
            if len(rays) == 0:
                return
            if self._node_left[node] < 0:
                s, c = self._node_start[node], self._node_count[node]
                tri_ids = self._order[s : s + c]
                self._leaf_hits(tri_ids, rays, origins, dirs, best_t, best_tri)
                return
            for child in (self._node_left[node], self._node_right[node]):
                visit(child, slab(child, rays))

        visit(0, slab(0, np.arange(n_rays)))
        return best_t, best_tri

    def _leaf_hits(self, tri_ids, rays, origins, dirs, best_t, best_tri):
        """Vectorized Moller-Trumbore for active rays x leaf triangles."""
        tri = self.triangles[tri_ids]  # (T, 3, 3)
        v0 = tri[:, 0]
        e1 = tri[:, 1] - v0
        e2 = tri[:, 2] - v0
        o = origins[rays][:, None, :]  # (R, 1, 3)
        d = dirs[rays][:, None, :]

        h = np.cross(d, e2[None, :, :])
        a = np.einsum("tk,rtk->rt", e1, h)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = 1.0 / a
            s = o - v0[None, :, :]
            u = f * np.einsum("rtk,rtk->rt", s, h)
            q = np.cross(s, e1[None, :, :])
            v = f * np.einsum("rtk,rtk->rt", d, q)
            t = f * np.einsum("tk,rtk->rt", e2, q)
            valid = (
                (np.abs(a) > _TINY)
                & (u >= -_EDGE_EPS)
                & (v >= -_EDGE_EPS)
                & (u + v <= 1.0 + _EDGE_EPS)
                & (t >= 0.0)
            )
        t = np.where(valid, t, np.inf)
        # lowest t, then lowest triangle id (argmin takes the first minimum
        # and tri_ids inherit build order, so sort leaf candidates by id)
        sort = np.argsort(tri_ids, kind="stable")
        t_sorted = t[:, sort]
        k = np.argmin(t_sorted, axis=1)
        tmin = t_sorted[np.arange(len(rays)), k]
        better = tmin < best_t[rays]
        upd = rays[better]
        best_t[upd] = tmin[better]
        best_tri[upd] = tri_ids[sort][k[better]]

    def raycast_first_hit(self, ray: Ray) -> RayHit | None:
        """Nearest intersection along the ray, or None."""
        t, tri = self.raycast_batch(ray.origin[None, :], ray.direction[None, :])
        if tri[0] < 0:
            return None
        return RayHit(
            face_id=int(self.tri_face[tri[0]]),
            t=float(t[0]),
            normal=self.tri_normals[tri[0]].copy(),
        )


def orthogonal_ray_grid(
    bounds: tuple[np.ndarray, np.ndarray],
    per_axis: int = 32,
    jitter: float = 0.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Six planar grids of per_axis^2 origins outside an axis-aligned box,
    each origin contributing one axis-aligned ray and one direction-perturbed
    copy: 12 * per_axis^2 rays total.

    Returns (origins, directions) arrays of shape (12 * per_axis^2, 3).
    """
    lo = np.asarray(bounds[0], dtype=np.float64)
    hi = np.asarray(bounds[1], dtype=np.float64)
    extent = np.maximum(hi - lo, _TINY)
    margin = 0.5 * float(extent.max())
    rng = np.random.default_rng(seed)

    # cell-centered offsets avoid grazing the box boundary
    frac = (np.arange(per_axis) + 0.5) / per_axis

    origins = []
    dirs = []
    for axis in range(3):
        u, v = (axis + 1) % 3, (axis + 2) % 3
        gu, gv = np.meshgrid(lo[u] + frac * extent[u], lo[v] + frac * extent[v])
        for sign in (1.0, -1.0):
            o = np.zeros((per_axis * per_axis, 3))
            o[:, u] = gu.ravel()
            o[:, v] = gv.ravel()
            o[:, axis] = (lo[axis] - margin) if sign > 0 else (hi[axis] + margin)
            d = np.zeros((per_axis * per_axis, 3))
            d[:, axis] = sign
            perturb = d + jitter * rng.uniform(-1.0, 1.0, size=d.shape)
            perturb /= np.linalg.norm(perturb, axis=1, keepdims=True)
            origins.extend((o, o))
            dirs.extend((d, perturb))
    return np.concatenate(origins), np.concatenate(dirs)


def _sample_with_tris(
    view: TriangulatedView, count: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    areas = view.tri_areas
    total = areas.sum()
    if total <= 0.0:
        raise NoAreaError("mesh has no face with positive area")
    tri_ids = rng.choice(len(areas), size=count, p=areas / total)
    r1 = np.sqrt(rng.uniform(size=count))
    r2 = rng.uniform(size=count)
    tri = view.triangles[tri_ids]
    pts = (
        (1.0 - r1)[:, None] * tri[:, 0]
        + (r1 * (1.0 - r2))[:, None] * tri[:, 1]
        + (r1 * r2)[:, None] * tri[:, 2]
    )
    return pts, tri_ids


def sample_surface_points(mesh: Mesh, count: int, seed: int = 0) -> np.ndarray:
    """Area-uniform surface samples; deterministic for a fixed seed."""
    view = mesh if isinstance(mesh, TriangulatedView) else TriangulatedView(mesh)
    pts, _ = _sample_with_tris(view, count, np.random.default_rng(seed))
    return pts


def hausdorff_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance: max of the two directed max-min terms."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise EmptySetError("hausdorff_distance needs two nonempty point sets")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return float(max(d_ab.max(), d_ba.max()))


def chamfer_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric L2 chamfer distance: mean NN distance a->b plus b->a."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise EmptySetError("chamfer_distance needs two nonempty point sets")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return float(d_ab.mean() + d_ba.mean())


def f1_score(
    pred: np.ndarray, gt: np.ndarray, threshold: float = 0.01
) -> tuple[float, float, float]:
    """Bidirectional NN precision/recall at a distance threshold."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if len(pred) == 0 or len(gt) == 0:
        raise EmptySetError("f1_score needs two nonempty point sets")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    d_pg, _ = cKDTree(gt).query(pred)
    d_gp, _ = cKDTree(pred).query(gt)
    precision = float((d_pg < threshold).mean())
    recall = float((d_gp < threshold).mean())
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def normal_consistency(pred: Mesh, gt: Mesh, count: int = 4096, seed: int = 0) -> float:
    """Mean |n_pred . n_gt| at nearest-neighbor sample correspondences.

    The absolute value makes the score winding-agnostic.
    """
    rng = np.random.default_rng(seed)
    pv, gv = TriangulatedView(pred), TriangulatedView(gt)
    p_pts, p_tris = _sample_with_tris(pv, count, rng)
    g_pts, g_tris = _sample_with_tris(gv, count, rng)
    _, nn = cKDTree(g_pts).query(p_pts)
    dots = np.einsum("ij,ij->i", pv.tri_normals[p_tris], gv.tri_normals[g_tris[nn]])
    return float(np.abs(dots).mean())
