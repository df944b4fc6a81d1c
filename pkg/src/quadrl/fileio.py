"""File formats: Wavefront OBJ (v + tri/quad f records) and XYZ point sets."""

from __future__ import annotations

import numpy as np

from .mesh import Mesh


def read_obj(path) -> Mesh:
    """Read `v` and 3/4-index `f` records. Slashed forms (`f a/b/c`) are
    accepted; only the vertex index is used. Indices are 1-based, negative
    indices count from the end."""
    vertices: list[list[float]] = []
    faces: list[tuple[int, ...]] = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                faces.append(tuple(idx))
    verts = np.array(vertices, dtype=np.float64).reshape(-1, 3)
    return Mesh(verts, faces)


def write_obj(mesh: Mesh, path) -> None:
    """Write faces as read: tris as `f i j k`, quads as `f i j k l` (1-based)."""
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for face in mesh.faces:
            fh.write("f " + " ".join(str(i + 1) for i in face) + "\n")


def read_xyz(path) -> np.ndarray:
    """Read one `x y z` triple per line into an (N, 3) array."""
    pts = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if parts:
                pts.append([float(x) for x in parts[:3]])
    return np.array(pts, dtype=np.float64).reshape(-1, 3)


def write_xyz(points: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        for p in np.asarray(points, dtype=np.float64).reshape(-1, 3):
            fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
