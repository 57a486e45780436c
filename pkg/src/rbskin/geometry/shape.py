from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .bvh import BVH


class GeometryError(ValueError):
    """Raised for empty or malformed boundary input."""


@dataclass(frozen=True)
class Normalization:
    """Translate-then-scale map from original coordinates into ``[0, 1]^d``."""

    offset: np.ndarray
    scale: float

    @classmethod
    def fit(cls, points: np.ndarray) -> "Normalization":
        lo = points.min(axis=0)
        extent = float((points.max(axis=0) - lo).max())
        if not extent > 0:
            raise GeometryError("boundary has zero extent")
        return cls(offset=lo.astype(float), scale=1.0 / extent)

    @classmethod
    def identity(cls, d: int) -> "Normalization":
        return cls(offset=np.zeros(d), scale=1.0)

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.offset) * self.scale

    def invert(self, x):
        return np.asarray(x, dtype=float) / self.scale + self.offset

    def to_array(self) -> np.ndarray:
        return np.append(self.offset, self.scale)

    @classmethod
    def from_array(cls, a) -> "Normalization":
        a = np.asarray(a, dtype=float)
        return cls(offset=a[:-1].copy(), scale=float(a[-1]))


def _facet_status(verts, facets):
    d = verts.shape[1]
    tiny = 1e-12
    if d == 2:
        length = np.linalg.norm(verts[facets[:, 1]] - verts[facets[:, 0]], axis=1)
        return np.where(length > tiny, K.REGULAR, K.COLLAPSED).astype(np.int8)
    a, b, c = (verts[facets[:, k]] for k in range(3))
    edges = np.stack([np.linalg.norm(b - a, axis=1),
                      np.linalg.norm(c - b, axis=1),
                      np.linalg.norm(a - c, axis=1)], axis=1)
    longest = edges.max(axis=1)
    area2 = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    status = np.full(len(facets), K.REGULAR, dtype=np.int8)
    status[area2 <= tiny * np.maximum(longest, tiny) ** 2] = K.SLIVER
    status[longest <= tiny] = K.COLLAPSED
    return status


def _facet_normals(verts, facets, status):
    d = verts.shape[1]
    if d == 2:
        e = verts[facets[:, 1]] - verts[facets[:, 0]]
        n = np.stack([e[:, 1], -e[:, 0]], axis=1)
    else:
        a, b, c = (verts[facets[:, k]] for k in range(3))
        n = np.cross(b - a, c - a)
    length = np.linalg.norm(n, axis=1, keepdims=True)
    out = np.zeros_like(n)
    ok = (status == K.REGULAR)[:, None] & (length > 0)
    np.divide(n, length, out=out, where=ok)
    return out


@dataclass(eq=False)
class BoundaryShape:
    """Boundary of the domain as segments (2D) or triangles (3D).

    ``vertices`` are stored in normalized coordinates; ``normalization`` maps
    the original input frame onto them. Facet orientation only determines the
    sign of the normals and of the winding number, nothing is assumed about
    manifoldness or closure.
    """

    vertices: np.ndarray
    facets: np.ndarray
    normalization: Normalization
    content_hash: int = 0
    status: np.ndarray = field(init=False, repr=False)
    normals: np.ndarray = field(init=False, repr=False)
    bvh: BVH = field(init=False, repr=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.facets = np.ascontiguousarray(self.facets, dtype=np.int64)
        d = self.vertices.shape[1] if self.vertices.ndim == 2 else 0
        if d not in (2, 3):
            raise GeometryError(f"vertices must be (n, 2) or (n, 3), got {self.vertices.shape}")
        if self.facets.ndim != 2 or self.facets.shape[1] != d:
            raise GeometryError(f"facets must be (m, {d}) for a {d}D boundary")
        if len(self.facets) and (self.facets.min() < 0 or self.facets.max() >= len(self.vertices)):
            raise GeometryError("facet index out of range")
        self.status = _facet_status(self.vertices, self.facets)
        self.normals = _facet_normals(self.vertices, self.facets, self.status)
        self.bvh = BVH(self.vertices, self.facets, self.status)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    @property
    def degenerate(self) -> np.ndarray:
        return self.status != K.REGULAR

    @classmethod
    def from_arrays(cls, vertices, facets, *, normalize=True) -> "BoundaryShape":
        """Build a shape from raw geometry, rescaling it into the unit box."""
        vertices = np.asarray(vertices, dtype=float)
        facets = np.asarray(facets, dtype=np.int64)
        if len(vertices) == 0 or len(facets) == 0:
            raise GeometryError("empty boundary")
        digest = content_hash(vertices, facets)
        if normalize:
            # only vertices referenced by facets define the box
            norm = Normalization.fit(vertices[np.unique(facets)])
        else:
            norm = Normalization.identity(vertices.shape[1])
        return cls(norm.apply(vertices), facets, norm, digest)

    def facet_points(self, f) -> np.ndarray:
        return self.vertices[self.facets[f]]


def content_hash(vertices, facets) -> int:
    """64-bit digest of the original geometry, used to pair weight files with meshes."""
    h = hashlib.blake2b(digest_size=8)
    h.update(np.ascontiguousarray(vertices, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(facets, dtype="<i8").tobytes())
    return int.from_bytes(h.digest(), "little")


def read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    """Vertices and fan-triangulated faces of an ASCII OBJ file."""
    verts, faces = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(v) for v in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise GeometryError(f"{path}:{lineno}: face with fewer than 3 vertices")
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def read_edge_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Segments from a ``x0,y0,x1,y1`` CSV; endpoints are welded by exact equality."""
    rows = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    if rows.shape[1] != 4:
        raise GeometryError(f"{path}: expected 4 columns per edge, got {rows.shape[1]}")
    pts = rows.reshape(-1, 2)
    verts, inverse = np.unique(pts, axis=0, return_inverse=True)
    return verts, inverse.reshape(-1, 2).astype(np.int64)


def load_shape(path) -> BoundaryShape:
    """Load a boundary from ``.obj`` (3D) or ``.csv`` edge list (2D)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        verts, facets = read_edge_csv(path)
    else:
        verts, facets = read_obj(path)
    return BoundaryShape.from_arrays(verts, facets)


def write_obj(path, vertices, faces) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in vertices:
            fh.write("v {:.17g} {:.17g} {:.17g}\n".format(*v))
        for f in faces:
            fh.write("f {} {} {}\n".format(*(int(i) + 1 for i in f)))


def write_edge_csv(path, vertices, edges) -> None:
    rows = np.hstack([vertices[edges[:, 0]], vertices[edges[:, 1]]])
    np.savetxt(path, rows, delimiter=",", fmt="%.17g")
