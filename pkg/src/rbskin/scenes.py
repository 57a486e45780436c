"""Primitive boundaries used by the examples, tests and acceptance suite."""
from __future__ import annotations

import numpy as np

CUBE_VERTICES = np.array([
    [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
    [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
], dtype=float)

# outward-facing (counter-clockwise seen from outside)
CUBE_FACES = np.array([
    [0, 2, 1], [0, 3, 2],  # z = 0
    [4, 5, 6], [4, 6, 7],  # z = 1
    [0, 1, 5], [0, 5, 4],  # y = 0
    [3, 7, 6], [3, 6, 2],  # y = 1
    [0, 4, 7], [0, 7, 3],  # x = 0
    [1, 2, 6], [1, 6, 5],  # x = 1
], dtype=np.int64)


def cube(lo=0.0, hi=1.0):
    """Closed axis-aligned cube, 12 triangles."""
    return lo + (hi - lo) * CUBE_VERTICES, CUBE_FACES.copy()


def open_cube(lo=0.0, hi=1.0):
    """Cube with its ``z = hi`` face removed (10 triangles)."""
    v, f = cube(lo, hi)
    return v, f[[0, 1, 4, 5, 6, 7, 8, 9, 10, 11]]


def icosphere(subdivisions=2, radius=1.0, center=(0.0, 0.0, 0.0)):
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    v = np.array(verts) * radius + np.asarray(center, dtype=float)
    return v, np.array(faces, dtype=np.int64)


def polygon(points):
    """Closed polygon (counter-clockwise for positive winding) as vertices + edges."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    edges = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
    return pts, edges


def bar(length=64.0, height=16.0):
    """Axis-aligned rectangle ``[0, length] x [0, height]``."""
    return polygon([(0, 0), (length, 0), (length, height), (0, height)])


def u_shape(arm_width=16.0, gap=2.0, height=64.0, base=16.0):
    """U polygon: two arms of ``arm_width`` separated by ``gap``, joined by a base."""
    w = 2 * arm_width + gap
    return polygon([
        (0, 0), (w, 0), (w, height), (arm_width + gap, height),
        (arm_width + gap, base), (arm_width, base), (arm_width, height), (0, height),
    ])
