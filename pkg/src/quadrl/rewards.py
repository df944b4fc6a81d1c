"""Gated mesh reward: ray-casting integrity, quad-flow topology, and a
Hausdorff-distance gate.

total = w_qr * N_qr + N_ql^2 when (N_bf < theta_ray and D_hd < theta_hd),
else 0. N_bf counts faces that are both flagged by back-facing ray probes and
incident to an open (boundary) edge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import TriangulatedView, orthogonal_ray_grid, sample_surface_points, hausdorff_distance
from .errors import NoAreaError
from .mesh import Mesh, build_edge_adjacency, edge_key


@dataclass(frozen=True)
class RewardConfig:
    w_qr: float = 0.1
    theta_ray: float = 1.0
    theta_hd: float = 0.1
    theta_angle: float = 0.0
    theta_ratio: float = 0.0005
    per_axis: int = 32
    jitter: float = 0.02
    probe_count: int = 16
    probe_radius_frac: float = 0.01  # fraction of the bbox diagonal
    sample_count: int = 2048  # surface samples for the Hausdorff gate
    viewpoints: np.ndarray | None = None  # default: 6 axis viewpoints

    def __post_init__(self):
        for name in ("theta_ray", "theta_hd", "theta_ratio", "probe_radius_frac"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.probe_count < 1:
            raise ValueError("probe_count must be >= 1")


@dataclass(frozen=True)
class RewardReport:
    n_bad_faces: int
    hausdorff: float
    n_quad_rings: int
    n_quad_lines: int
    gated: bool
    total: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_bad_faces": self.n_bad_faces,
                "hausdorff": self.hausdorff,
                "n_quad_rings": self.n_quad_rings,
                "n_quad_lines": self.n_quad_lines,
                "gated": self.gated,
                "total": self.total,
            }
        )


def _ungated(n_bf: int = 0, hausdorff: float = float("inf"), n_qr: int = 0, n_ql: int = 0) -> RewardReport:
    return RewardReport(n_bf, hausdorff, n_qr, n_ql, False, 0.0)


def default_viewpoints(mesh: Mesh) -> np.ndarray:
    """Six viewpoints on the +-axis directions at twice the bounding radius."""
    lo, hi = mesh.bounds()
    center = (lo + hi) / 2.0
    radius = 0.5 * float(np.linalg.norm(hi - lo))
    radius = max(radius, 1e-6)
    out = []
    for axis in range(3):
        for sign in (1.0, -1.0):
            p = center.copy()
            p[axis] += sign * 2.0 * radius
            out.append(p)
    return np.array(out)


def global_integrity_precheck(
    view: TriangulatedView, cfg: RewardConfig = RewardConfig(), seed: int = 0
) -> tuple[float, bool]:
    """Cast the orthogonal grid and measure the back-face hit ratio.

    passed iff ratio <= theta_ratio; an empty hit set passes with ratio 0.
    """
    lo, hi = view.mesh.bounds()
    origins, dirs = orthogonal_ray_grid((lo, hi), cfg.per_axis, cfg.jitter, seed)
    t, tri = view.raycast_batch(origins, dirs)
    hit = tri >= 0
    n_hits = int(hit.sum())
    if n_hits == 0:
        return 0.0, True
    normals = view.tri_normals[tri[hit]]
    facing = np.einsum("ij,ij->i", normals, -dirs[hit])
    ratio = float((facing < cfg.theta_angle).mean())
    return ratio, ratio <= cfg.theta_ratio


def locate_bad_vertices(
    view: TriangulatedView, cfg: RewardConfig = RewardConfig(), seed: int = 0
) -> set[int]:
    """Probe each viewpoint-visible vertex's neighborhood with random rays;
    a vertex is bad iff any probe's first hit is back-facing."""
    mesh = view.mesh
    lo, hi = mesh.bounds()
    radius = cfg.probe_radius_frac * float(np.linalg.norm(hi - lo))
    radius = max(radius, 1e-9)
    viewpoints = cfg.viewpoints if cfg.viewpoints is not None else default_viewpoints(mesh)
    rng = np.random.default_rng(seed)

    bad: set[int] = set()
    for vi, vertex in enumerate(mesh.vertices):
        for vp in viewpoints:
            to_v = vertex - vp
            dist = np.linalg.norm(to_v)
            if dist < 1e-12:
                continue
            t, tri = view.raycast_batch(vp[None, :], (to_v / dist)[None, :])
            if tri[0] < 0:
                continue
            hit_point = vp + t[0] * (to_v / dist)
            if np.linalg.norm(hit_point - vertex) > radius:
                continue  # vertex occluded from this viewpoint

            targets = vertex + radius * _uniform_ball(rng, cfg.probe_count)
            d = targets - vp
            lens = np.linalg.norm(d, axis=1, keepdims=True)
            lens[lens == 0.0] = 1.0
            d /= lens
            pt, ptri = view.raycast_batch(np.broadcast_to(vp, d.shape), d)
            phit = ptri >= 0
            if phit.any():
                facing = np.einsum(
                    "ij,ij->i", view.tri_normals[ptri[phit]], -d[phit]
                )
                if (facing < cfg.theta_angle).any():
                    bad.add(vi)
                    break
    return bad


def _uniform_ball(rng: np.random.Generator, count: int) -> np.ndarray:
    pts = rng.normal(size=(count, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return pts * rng.uniform(size=(count, 1)) ** (1.0 / 3.0)


def identify_bad_faces(mesh: Mesh, bad_vertices: set[int], adjacency=None) -> set[int]:
    """Faces incident to a bad vertex, intersected with faces incident to an
    open (boundary) edge."""
    if not bad_vertices:
        return set()
    adjacency = adjacency or build_edge_adjacency(mesh)
    candidates = {
        fid for fid, face in enumerate(mesh.faces) if any(v in bad_vertices for v in face)
    }
    return candidates & adjacency.boundary_faces()


def _opposite_edge(edge: tuple[int, int], face) -> tuple[int, int]:
    for i in range(4):
        if edge_key(face[i], face[(i + 1) % 4]) == edge:
            return edge_key(face[(i + 2) % 4], face[(i + 3) % 4])
    raise ValueError(f"edge {edge} not on face {face}")


def quad_flow_analysis(mesh: Mesh, adjacency=None) -> tuple[int, int]:
    """Count quad rings and quad lines by opposite-edge traversal.

    Starting from each unprocessed edge (ascending canonical order), the walk
    repeatedly enters an incident quad not yet traversed on this path and
    crosses to its opposite edge. A walk returning to its start edge is a
    ring; one that terminates is a line. Triangles never continue a walk, and
    non-manifold edges (more than two incident quads) terminate it.
    """
    adjacency = adjacency or build_edge_adjacency(mesh)
    is_quad = [len(f) == 4 for f in mesh.faces]
    n_qr = 0
    n_ql = 0
    processed: set[tuple[int, int]] = set()

    for e_start in sorted(adjacency.edge_faces):
        if e_start in processed:
            continue
        path_edges: set[tuple[int, int]] = set()
        path_faces: set[int] = set()
        e_current: tuple[int, int] | None = e_start
        while e_current is not None and e_current not in path_edges:
            path_edges.add(e_current)
            incident_quads = [f for f in adjacency.edge_faces[e_current] if is_quad[f]]
            if len(incident_quads) > 2:
                e_current = None  # non-manifold: terminate the walk
                break
            untraversed = [f for f in incident_quads if f not in path_faces]
            if not untraversed:
                e_current = None
                break
            f_adj = min(untraversed)
            path_faces.add(f_adj)
            e_current = _opposite_edge(e_current, mesh.faces[f_adj])
        processed |= path_edges
        if path_faces:
            if e_current == e_start:
                n_qr += 1
            else:
                n_ql += 1
    return n_qr, n_ql


def count_bad_faces(mesh: Mesh, view: TriangulatedView, cfg: RewardConfig, seed: int = 0) -> set[int]:
    """Full precheck -> localization -> boundary-intersection pipeline."""
    _, passed = global_integrity_precheck(view, cfg, seed)
    if passed:
        return set()
    bad_vertices = locate_bad_vertices(view, cfg, seed)
    return identify_bad_faces(mesh, bad_vertices)


def compute_reward(
    mesh: Mesh, condition_points: np.ndarray, cfg: RewardConfig = RewardConfig(), seed: int = 0
) -> RewardReport:
    """Gated reward for a full mesh against its conditioning point cloud."""
    if mesh.n_vertices == 0 or mesh.n_faces == 0:
        return _ungated()
    view = TriangulatedView(mesh)
    try:
        samples = sample_surface_points(view, cfg.sample_count, seed)
    except NoAreaError:
        return _ungated()
    bad_faces = count_bad_faces(mesh, view, cfg, seed)
    n_bf = len(bad_faces)
    d_hd = hausdorff_distance(condition_points, samples)
    n_qr, n_ql = quad_flow_analysis(mesh)
    gated = n_bf < cfg.theta_ray and d_hd < cfg.theta_hd
    total = cfg.w_qr * n_qr + n_ql**2 if gated else 0.0
    return RewardReport(n_bf, d_hd, n_qr, n_ql, gated, total)


def windowed_rewards(
    mesh: Mesh,
    face_windows: list[list[int]],
    condition_points: np.ndarray,
    cfg: RewardConfig = RewardConfig(),
    seed: int = 0,
) -> list[RewardReport]:
    """Reward reports for several face-id windows of one mesh at once.

    Shares the expensive full-mesh work (ray casting, bad-face localization,
    surface sampling) across windows, unlike calling ``truncated_reward`` per
    window. Windows may be arbitrary face-id subsets, which lets callers map
    token windows through dropped-block bookkeeping. A non-finite theta_ray
    disables the ray gate entirely and skips bad-face localization.
    """
    if mesh.n_faces == 0 or mesh.n_vertices == 0:
        return [_ungated() for _ in face_windows]
    view = TriangulatedView(mesh)
    try:
        samples = sample_surface_points(view, cfg.sample_count, seed)
    except NoAreaError:
        return [_ungated() for _ in face_windows]
    if np.isfinite(cfg.theta_ray):
        bad_faces = count_bad_faces(mesh, view, cfg, seed)
    else:
        bad_faces = set()
    d_hd = hausdorff_distance(condition_points, samples)

    out = []
    for window in face_windows:
        if not window:
            out.append(_ungated(hausdorff=d_hd))
            continue
        n_bf = len(bad_faces & set(window))
        sub = Mesh(mesh.vertices, [mesh.faces[i] for i in window])
        n_qr, n_ql = quad_flow_analysis(sub)
        gated = n_bf < cfg.theta_ray and d_hd < cfg.theta_hd
        total = cfg.w_qr * n_qr + n_ql**2 if gated else 0.0
        out.append(RewardReport(n_bf, d_hd, n_qr, n_ql, gated, total))
    return out


def truncated_reward(
    mesh: Mesh,
    window_faces: range,
    condition_points: np.ndarray,
    cfg: RewardConfig = RewardConfig(),
    seed: int = 0,
) -> RewardReport:
    """Reward restricted to a contiguous face-index window.

    Bad faces are computed on the full mesh and counted only inside the
    window; quad flow runs on the window-induced sub-mesh. The Hausdorff gate
    uses the full mesh, so all windows of one mesh share its geometric gate.
    """
    if len(window_faces) == 0 or mesh.n_faces == 0:
        return _ungated()
    if window_faces.start < 0 or window_faces.stop > mesh.n_faces:
        raise IndexError(f"window {window_faces} outside [0, {mesh.n_faces})")
    view = TriangulatedView(mesh)
    try:
        samples = sample_surface_points(view, cfg.sample_count, seed)
    except NoAreaError:
        return _ungated()
    bad_faces = count_bad_faces(mesh, view, cfg, seed)
    n_bf = len(bad_faces & set(window_faces))
    d_hd = hausdorff_distance(condition_points, samples)
    sub = Mesh(mesh.vertices, [mesh.faces[i] for i in window_faces])
    n_qr, n_ql = quad_flow_analysis(sub)
    gated = n_bf < cfg.theta_ray and d_hd < cfg.theta_hd
    total = cfg.w_qr * n_qr + n_ql**2 if gated else 0.0
    return RewardReport(n_bf, d_hd, n_qr, n_ql, gated, total)
