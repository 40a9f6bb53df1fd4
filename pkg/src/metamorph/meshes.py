"""Synthetic test meshes: icospheres, flat square grids, bump signals."""

from __future__ import annotations

import numpy as np

from .fshape import DiscreteFshape

# Icosahedron with unit circumradius.
_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array(
    [
        [-1.0, _PHI, 0.0],
        [1.0, _PHI, 0.0],
        [-1.0, -_PHI, 0.0],
        [1.0, -_PHI, 0.0],
        [0.0, -1.0, _PHI],
        [0.0, 1.0, _PHI],
        [0.0, -1.0, -_PHI],
        [0.0, 1.0, -_PHI],
        [_PHI, 0.0, -1.0],
        [_PHI, 0.0, 1.0],
        [-_PHI, 0.0, -1.0],
        [-_PHI, 0.0, 1.0],
    ]
) / np.sqrt(1.0 + _PHI**2)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [5, 4, 9], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
)


def icosphere(subdivisions: int, radius: float = 1.0) -> DiscreteFshape:
    """Geodesic sphere by repeated edge-midpoint subdivision of an icosahedron.

    Vertex counts by level: 12, 42, 162, 642, 2562, ... Signals start at 0.
    """
    if subdivisions < 0:
        raise ValueError("subdivisions must be nonnegative")
    verts = [v for v in _ICO_VERTS]
    faces = _ICO_FACES.tolist()
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def midpoint_index(i, j):
            key = (i, j) if i < j else (j, i)
            idx = midpoint.get(key)
            if idx is None:
                m = verts[i] + verts[j]
                m = m / np.linalg.norm(m)
                verts.append(m)
                idx = len(verts) - 1
                midpoint[key] = idx
            return idx

        new_faces = []
        for a, b, c in faces:
            ab = midpoint_index(a, b)
            bc = midpoint_index(b, c)
            ca = midpoint_index(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    vertices = radius * np.array(verts)
    return DiscreteFshape(
        vertices=vertices,
        signals=np.zeros(len(verts)),
        cells=np.array(faces, dtype=np.int64),
    )


def grid_square(m: int, half_width: float = 1.0) -> DiscreteFshape:
    """Flat square [-w, w]^2 x {0} triangulated from an m x m vertex grid."""
    if m < 2:
        raise ValueError("grid needs at least 2 x 2 vertices")
    line = np.linspace(-half_width, half_width, m)
    xx, yy = np.meshgrid(line, line, indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(m * m)])
    cells = []
    for i in range(m - 1):
        for j in range(m - 1):
            v00 = i * m + j
            v10 = (i + 1) * m + j
            v01 = i * m + j + 1
            v11 = (i + 1) * m + j + 1
            cells.append([v00, v10, v11])
            cells.append([v00, v11, v01])
    return DiscreteFshape(
        vertices=vertices,
        signals=np.zeros(m * m),
        cells=np.array(cells, dtype=np.int64),
    )


def polyline(points: np.ndarray, signals=None) -> DiscreteFshape:
    """Open polyline through the given points (d=1 fshape)."""
    points = np.asarray(points, dtype=float)
    P = points.shape[0]
    cells = np.column_stack([np.arange(P - 1), np.arange(1, P)])
    if signals is None:
        signals = np.zeros(P)
    return DiscreteFshape(vertices=points, signals=signals, cells=cells)


def bump_signal(
    fs: DiscreteFshape, center, width: float, amplitude: float = 1.0
) -> np.ndarray:
    """Gaussian bump evaluated at the mesh vertices."""
    center = np.asarray(center, dtype=float)
    d2 = ((fs.vertices - center[None, :]) ** 2).sum(axis=1)
    return amplitude * np.exp(-d2 / (2.0 * width**2))
