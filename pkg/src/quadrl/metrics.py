"""Evaluation-side scoring: broken-mesh classification and quad ratio."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCorpusError, EmptyMeshError
from .geometry import TriangulatedView, orthogonal_ray_grid
from .mesh import Mesh, normalize_mesh


@dataclass(frozen=True)
class BrokenCheckConfig:
    theta_angle: float = 0.0
    theta_succ: float = 0.01
    sigma_rand: float = 0.05  # direction perturbation scale before renormalizing
    per_axis: int = 64

    def __post_init__(self):
        if not (0.0 < self.theta_succ < 1.0):
            raise ValueError("theta_succ must be in (0, 1)")
        if self.per_axis < 1:
            raise ValueError("per_axis must be >= 1")


def broken_check(
    mesh: Mesh, cfg: BrokenCheckConfig = BrokenCheckConfig(), seed: int = 0
) -> tuple[float, bool]:
    """Fracture score and broken classification via back-face hit counting.

    The mesh is normalized to a unit box first, so the check is
    scale-invariant. Aligned and perturbed rays from all six axis directions
    are cast together; score = back-face hits / total hits. No hits at all
    scores (0, False).
    """
    if mesh.n_vertices == 0 or mesh.n_faces == 0:
        raise EmptyMeshError("broken_check needs a nonempty mesh")
    mesh = normalize_mesh(mesh)
    view = TriangulatedView(mesh)
    lo, hi = mesh.bounds()
    origins, dirs = orthogonal_ray_grid((lo, hi), cfg.per_axis, cfg.sigma_rand, seed)
    t, tri = view.raycast_batch(origins, dirs)
    hit = tri >= 0
    n_hits = int(hit.sum())
    if n_hits == 0:
        return 0.0, False
    facing = np.einsum("ij,ij->i", view.tri_normals[tri[hit]], -dirs[hit])
    score = float((facing < cfg.theta_angle).mean())
    return score, score > cfg.theta_succ


def broken_ratio(
    meshes: list[Mesh], cfg: BrokenCheckConfig = BrokenCheckConfig(), seed: int = 0
) -> float:
    """Fraction of meshes classified broken. Each mesh gets an independent
    seed derived from (corpus seed, index)."""
    if not meshes:
        raise EmptyCorpusError("broken_ratio needs at least one mesh")
    flags = [broken_check(m, cfg, seed=hash((seed, i)) & 0x7FFFFFFF)[1] for i, m in enumerate(meshes)]
    return float(np.mean(flags))


def quad_ratio(mesh: Mesh) -> float:
    """Quad faces over total faces."""
    if mesh.n_faces == 0:
        raise EmptyMeshError("quad_ratio needs at least one face")
    quads = sum(1 for f in mesh.faces if len(f) == 4)
    return quads / mesh.n_faces
