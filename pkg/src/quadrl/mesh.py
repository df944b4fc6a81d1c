"""Core mesh types: normalization, quantization, canonical ordering, adjacency.

Meshes are mixed triangle/quad surfaces. All types are immutable in spirit:
operations return new objects and never mutate their inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateBoundsError,
    EmptyMeshError,
    InvalidFaceError,
)

NORM_LIMIT = 0.95  # normalized meshes live in [-NORM_LIMIT, NORM_LIMIT]^3

Face = tuple[int, ...]


def _check_faces(faces: list[Face], n_vertices: int) -> None:
    for fi, face in enumerate(faces):
        if len(face) not in (3, 4):
            raise InvalidFaceError(f"face {fi} has arity {len(face)}, expected 3 or 4")
        if len(set(face)) != len(face):
            raise InvalidFaceError(f"face {fi} repeats a vertex index: {face}")
        for v in face:
            if not (0 <= v < n_vertices):
                raise InvalidFaceError(f"face {fi} references vertex {v} of {n_vertices}")


@dataclass(frozen=True)
class Mesh:
    """Vertex positions plus mixed triangle/quad faces.

    Faces are tuples of 3 or 4 vertex indices in counterclockwise (outward)
    winding order.
    """

    vertices: np.ndarray  # (N, 3) float64
    faces: list[Face] = field(default_factory=list)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "vertices", verts)
        faces = [tuple(int(v) for v in f) for f in self.faces]
        object.__setattr__(self, "faces", faces)
        _check_faces(faces, len(verts))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise EmptyMeshError("mesh has no vertices")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass(frozen=True)
class QuantizedMesh:
    """Integer-lattice mesh with coordinates in [0, 2^bits - 1]."""

    vertices: np.ndarray  # (N, 3) int64
    faces: list[Face] = field(default_factory=list)
    bits: int = 10

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", verts)
        faces = [tuple(int(v) for v in f) for f in self.faces]
        object.__setattr__(self, "faces", faces)
        _check_faces(faces, len(verts))
        hi = (1 << self.bits) - 1
        if len(verts) and (verts.min() < 0 or verts.max() > hi):
            raise InvalidFaceError(f"quantized coordinates outside [0, {hi}]")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)


def normalize_mesh(mesh: Mesh) -> Mesh:
    """Center the bounding box and scale uniformly so the longest axis spans
    [-0.95, 0.95]. Aspect ratios and faces are unchanged."""
    if mesh.n_vertices == 0:
        raise EmptyMeshError("cannot normalize an empty mesh")
    lo, hi = mesh.bounds()
    extent = hi - lo
    longest = float(extent.max())
    if longest <= 0.0:
        raise DegenerateBoundsError("all vertices coincide")
    center = (lo + hi) / 2.0
    scale = 2.0 * NORM_LIMIT / longest
    return Mesh((mesh.vertices - center) * scale, mesh.faces)


def quantize_vertices(mesh: Mesh, bits: int = 10) -> QuantizedMesh:
    """Map each coordinate to floor((v - v_min)/(v_max - v_min) * 2^bits),
    clamped to [0, 2^bits - 1]. v_min/v_max are taken per axis.

    Floor binning pairs with the midpoint reconstruction in
    dequantize_vertices: every coordinate, including the clamped per-axis
    maximum, reconstructs within half a quantization step. A zero-extent axis
    maps to 0 with a warning.
    """
    if bits < 2:
        raise ValueError("bits must be >= 2")
    if mesh.n_vertices == 0:
        raise EmptyMeshError("cannot quantize an empty mesh")
    lo, hi = mesh.bounds()
    extent = hi - lo
    degenerate = extent <= 0.0
    if degenerate.any():
        warnings.warn("degenerate axis: v_max == v_min; axis quantizes to 0")
    safe_extent = np.where(degenerate, 1.0, extent)
    t = (mesh.vertices - lo) / safe_extent
    t[:, degenerate] = 0.0
    q = np.floor(t * (1 << bits)).astype(np.int64)
    np.clip(q, 0, (1 << bits) - 1, out=q)
    return QuantizedMesh(q, mesh.faces, bits)


def dequantize_vertices(
    qmesh: QuantizedMesh,
    v_min: float | np.ndarray = -NORM_LIMIT,
    v_max: float | np.ndarray = NORM_LIMIT,
) -> Mesh:
    """Midpoint reconstruction of quantized coordinates into [v_min, v_max]."""
    lo = np.broadcast_to(np.asarray(v_min, dtype=np.float64), (3,))
    hi = np.broadcast_to(np.asarray(v_max, dtype=np.float64), (3,))
    steps = float(1 << qmesh.bits)
    verts = lo + (qmesh.vertices + 0.5) / steps * (hi - lo)
    return Mesh(verts, qmesh.faces)


def _rotate_min_first(face: Face) -> Face:
    k = face.index(min(face))
    return face[k:] + face[:k]


def canonicalize(qmesh: QuantizedMesh) -> tuple[QuantizedMesh, int]:
    """Produce the canonical form of a quantized mesh.

    Duplicate vertices are merged, faces reindexed, degenerate faces (repeated
    indices after merging) dropped, vertices sorted lexicographically by
    (x, y, z), each face cyclically rotated so its minimum index is first, and
    faces sorted ascending by their index tuples.

    Returns the canonical mesh and the number of dropped degenerate faces.
    Idempotent: canonicalizing a canonical mesh is the identity.
    """
    if qmesh.n_vertices == 0:
        return QuantizedMesh(np.zeros((0, 3), dtype=np.int64), [], qmesh.bits), 0
    unique, inverse = np.unique(qmesh.vertices, axis=0, return_inverse=True)
    inverse = inverse.ravel()

    dropped = 0
    faces: list[Face] = []
    for face in qmesh.faces:
        remapped = tuple(int(inverse[v]) for v in face)
        if len(set(remapped)) != len(remapped):
            dropped += 1
            continue
        faces.append(_rotate_min_first(remapped))
    faces.sort()
    return QuantizedMesh(unique, faces, qmesh.bits), dropped


def edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class EdgeAdjacency:
    """Undirected edge -> incident face ids, plus per-face edge lists."""

    edge_faces: dict[tuple[int, int], list[int]]
    face_edges: list[list[tuple[int, int]]]

    @property
    def n_edges(self) -> int:
        return len(self.edge_faces)

    def boundary_edges(self) -> set[tuple[int, int]]:
        return {e for e, fs in self.edge_faces.items() if len(fs) == 1}

    def non_manifold_edges(self) -> set[tuple[int, int]]:
        return {e for e, fs in self.edge_faces.items() if len(fs) > 2}

    def is_boundary(self, edge: tuple[int, int]) -> bool:
        return len(self.edge_faces[edge]) == 1

    def boundary_faces(self) -> set[int]:
        """Faces incident to at least one boundary (open) edge."""
        out: set[int] = set()
        for e, fs in self.edge_faces.items():
            if len(fs) == 1:
                out.add(fs[0])
        return out


def build_edge_adjacency(mesh: Mesh | QuantizedMesh) -> EdgeAdjacency:
    """Build the undirected edge->faces map. Non-manifold edges are allowed."""
    edge_faces: dict[tuple[int, int], list[int]] = {}
    face_edges: list[list[tuple[int, int]]] = []
    for fid, face in enumerate(mesh.faces):
        edges = []
        n = len(face)
        for i in range(n):
            e = edge_key(face[i], face[(i + 1) % n])
            edges.append(e)
            edge_faces.setdefault(e, []).append(fid)
        face_edges.append(edges)
    return EdgeAdjacency(edge_faces, face_edges)
