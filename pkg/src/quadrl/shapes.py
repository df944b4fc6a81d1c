"""Procedural meshes: fixtures for rewards/metrics and conditions for the
toy RL task. All closed shapes use outward (counterclockwise) winding."""

from __future__ import annotations

import numpy as np

from .mesh import Mesh


def box(size: float = 1.0, center=(0.0, 0.0, 0.0)) -> Mesh:
    """Axis-aligned cube of 6 quads."""
    c = np.asarray(center, dtype=np.float64)
    h = size / 2.0
    corners = np.array(
        [
            [-h, -h, -h],
            [h, -h, -h],
            [h, h, -h],
            [-h, h, -h],
            [-h, -h, h],
            [h, -h, h],
            [h, h, h],
            [-h, h, h],
        ]
    )
    faces = [
        (0, 3, 2, 1),  # bottom (-z)
        (4, 5, 6, 7),  # top (+z)
        (0, 1, 5, 4),  # front (-y)
        (1, 2, 6, 5),  # right (+x)
        (2, 3, 7, 6),  # back (+y)
        (3, 0, 4, 7),  # left (-x)
    ]
    return Mesh(corners + c, faces)


def box_with_hole(size: float = 1.0) -> Mesh:
    """Cube missing its +z face: an open box with a 4-edge boundary rim."""
    full = box(size)
    return Mesh(full.vertices, [f for i, f in enumerate(full.faces) if i != 1])


def flipped(mesh: Mesh, face_ids=None) -> Mesh:
    """Reverse winding of the selected faces (default: all)."""
    ids = set(range(mesh.n_faces)) if face_ids is None else set(face_ids)
    faces = [f[::-1] if i in ids else f for i, f in enumerate(mesh.faces)]
    return Mesh(mesh.vertices, faces)


def quad_grid(nx: int, ny: int, size: float = 1.0) -> Mesh:
    """Open nx x ny sheet of quads in the z = 0 plane, +z winding."""
    xs = np.linspace(0.0, size, nx + 1)
    ys = np.linspace(0.0, size, ny + 1)
    verts = np.array([[x, y, 0.0] for y in ys for x in xs])
    faces = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            faces.append((a, a + 1, a + nx + 2, a + nx + 1))
    return Mesh(verts, faces)


def quad_band(n: int, radius: float = 1.0, height: float = 1.0) -> Mesh:
    """Closed band (open tube) of n quads around the z axis."""
    angles = 2.0 * np.pi * np.arange(n) / n
    bottom = np.stack([radius * np.cos(angles), radius * np.sin(angles), np.zeros(n)], axis=1)
    top = bottom + np.array([0.0, 0.0, height])
    verts = np.concatenate([bottom, top])
    faces = [(i, (i + 1) % n, n + (i + 1) % n, n + i) for i in range(n)]
    return Mesh(verts, faces)


def uv_sphere(n_lat: int = 18, n_lon: int = 20, radius: float = 1.0) -> Mesh:
    """Watertight UV sphere: quad rings with triangle fans at the poles."""
    verts = [[0.0, 0.0, radius]]
    for i in range(1, n_lat):
        theta = np.pi * i / n_lat
        for j in range(n_lon):
            phi = 2.0 * np.pi * j / n_lon
            verts.append(
                [
                    radius * np.sin(theta) * np.cos(phi),
                    radius * np.sin(theta) * np.sin(phi),
                    radius * np.cos(theta),
                ]
            )
    verts.append([0.0, 0.0, -radius])
    top, bottom = 0, len(verts) - 1

    def ring(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)

    faces: list[tuple[int, ...]] = []
    for j in range(n_lon):
        faces.append((ring(1, j), ring(1, j + 1), top))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            faces.append((ring(i + 1, j), ring(i + 1, j + 1), ring(i, j + 1), ring(i, j)))
    for j in range(n_lon):
        faces.append((ring(n_lat - 1, j + 1), ring(n_lat - 1, j), bottom))
    return Mesh(np.array(verts), faces)


def torus(n_major: int = 12, n_minor: int = 8, major_radius: float = 1.0, minor_radius: float = 0.35) -> Mesh:
    """Watertight all-quad torus."""
    verts = []
    for i in range(n_major):
        u = 2.0 * np.pi * i / n_major
        for j in range(n_minor):
            v = 2.0 * np.pi * j / n_minor
            a = major_radius + minor_radius * np.cos(v)
            verts.append([a * np.cos(u), a * np.sin(u), minor_radius * np.sin(v)])

    def vid(i, j):
        return (i % n_major) * n_minor + (j % n_minor)

    faces = [
        (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1))
        for i in range(n_major)
        for j in range(n_minor)
    ]
    return Mesh(np.array(verts), faces)
