"""Baking weights onto boundary vertices and deforming with LBS or DQS."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .field import KernelField
from .geometry import BoundaryShape

logger = logging.getLogger(__name__)

RIGID_TOL = 1e-3


class PoseError(ValueError):
    pass


# quaternions are (w, x, y, z)

def quat_mul(a, b):
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=float), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=float), -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_conj(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_from_rotation(r):
    """Unit quaternion of a 3x3 rotation (Shepperd's branch on the largest diagonal term)."""
    r = np.asarray(r, dtype=float)
    tr = np.trace(r)
    i = int(np.argmax([tr, r[0, 0], r[1, 1], r[2, 2]]))
    if i == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
    elif i == 1:
        s = 2.0 * np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
    elif i == 2:
        s = 2.0 * np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        q = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        q = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def rotation_from_quat(q):
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rigid_part(m):
    """Validate a 4x4 rigid transform and return it with an exactly orthonormal rotation."""
    m = np.asarray(m, dtype=float)
    if m.shape != (4, 4):
        raise PoseError(f"expected a 4x4 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise PoseError("matrix has non-finite entries")
    if np.abs(m[3] - [0, 0, 0, 1]).max() > 1e-9:
        raise PoseError("bottom row must be (0, 0, 0, 1)")
    u, s, vt = np.linalg.svd(m[:3, :3])
    if np.abs(s - 1.0).max() > RIGID_TOL:
        raise PoseError(f"not rigid: singular values {np.round(s, 6).tolist()}")
    r = u @ vt
    if np.linalg.det(r) < 0:
        raise PoseError("transform contains a reflection")
    out = m.copy()
    out[:3, :3] = r
    return out


def dual_quat_from_matrix(m):
    """``(real, dual)`` unit dual quaternion of a rigid 4x4 transform."""
    real = quat_from_rotation(m[:3, :3])
    t = np.concatenate([[0.0], m[:3, 3]])
    return real, 0.5 * quat_mul(t, real)


def matrix_from_dual_quat(real, dual):
    n = np.linalg.norm(real)
    real, dual = real / n, dual / n
    m = np.eye(4)
    m[:3, :3] = rotation_from_quat(real)
    m[:3, 3] = 2.0 * quat_mul(dual, quat_conj(real))[1:]
    return m


@dataclass
class Pose:
    """One rigid transform per handle, as matrices and unit dual quaternions."""

    matrices: np.ndarray    # (K, 4, 4)
    real: np.ndarray        # (K, 4)
    dual: np.ndarray        # (K, 4)

    @classmethod
    def from_matrices(cls, mats) -> "Pose":
        mats = np.asarray(mats, dtype=float)
        if mats.ndim == 2 and mats.shape[1] == 16:
            mats = mats.reshape(-1, 4, 4)
        if mats.ndim != 3 or mats.shape[1:] != (4, 4) or len(mats) == 0:
            raise PoseError("need a non-empty list of 4x4 matrices")
        mats = np.stack([rigid_part(m) for m in mats])
        dq = [dual_quat_from_matrix(m) for m in mats]
        return cls(mats, np.array([q[0] for q in dq]), np.array([q[1] for q in dq]))

    @classmethod
    def identity(cls, k: int) -> "Pose":
        return cls.from_matrices(np.repeat(np.eye(4)[None], k, axis=0))

    def __len__(self):
        return len(self.matrices)

    def compose_left(self, g) -> "Pose":
        """Pose with every transform pre-multiplied by the rigid ``g``."""
        return Pose.from_matrices(np.asarray(g, dtype=float) @ self.matrices)


def load_pose(path, k: int | None = None) -> Pose:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    mats = doc.get("transforms") if isinstance(doc, dict) else None
    if not isinstance(mats, list) or any(len(m) != 16 for m in mats):
        raise PoseError('pose file needs {"transforms": [[16 numbers], ...]}')
    if k is not None and len(mats) != k:
        raise PoseError(f"pose has {len(mats)} transforms, skeleton has {k} handles")
    return Pose.from_matrices(np.array(mats, dtype=float).reshape(-1, 4, 4))


@dataclass
class BakedWeights:
    """Per-vertex weights of a boundary mesh, vertices in the original frame."""

    weights: np.ndarray     # (n, K)
    vertices: np.ndarray    # (n, d)
    facets: np.ndarray

    @property
    def n_handles(self) -> int:
        return self.weights.shape[1]


def bake(fld: KernelField, shape: BoundaryShape | None = None, check_hash=True) -> BakedWeights:
    """Evaluate the field at every vertex of ``shape`` (default: the field's own)."""
    shape = fld.shape if shape is None else shape
    if check_hash and shape.content_hash != fld.shape.content_hash:
        raise ValueError(
            f"mesh hash {shape.content_hash:016x} differs from the solved mesh "
            f"{fld.shape.content_hash:016x}")
    w = fld.evaluate(shape.vertices)
    return BakedWeights(w, shape.normalization.invert(shape.vertices), shape.facets.copy())


def _homogeneous(v):
    v = np.asarray(v, dtype=float)
    pad = np.zeros((len(v), 4))
    pad[:, :v.shape[1]] = v
    pad[:, 3] = 1.0
    return pad


def _check(baked: BakedWeights, pose: Pose):
    if len(pose) != baked.n_handles:
        raise PoseError(f"pose has {len(pose)} transforms for {baked.n_handles} handles")


def lbs(baked: BakedWeights, pose: Pose) -> np.ndarray:
    """Linear blend skinning: each vertex moved by its weight-blended matrix."""
    _check(baked, pose)
    d = baked.vertices.shape[1]
    blended = np.einsum("nk,kij->nij", baked.weights, pose.matrices)
    out = np.einsum("nij,nj->ni", blended, _homogeneous(baked.vertices))
    return out[:, :d]


def dqs(baked: BakedWeights, pose: Pose, return_fallbacks=False):
    """Dual quaternion skinning with hemisphere alignment to the heaviest handle.

    Vertices whose blended rotation part nearly cancels fall back to LBS.
    """
    _check(baked, pose)
    w = baked.weights
    d = baked.vertices.shape[1]
    pivot = pose.real[np.argmax(w, axis=1)]
    sign = np.where(pivot @ pose.real.T < 0, -1.0, 1.0)
    ws = w * sign
    c0 = ws @ pose.real
    ce = ws @ pose.dual
    norm = np.linalg.norm(c0, axis=1)
    bad = norm < 1e-9
    norm[bad] = 1.0
    c0 = c0 / norm[:, None]
    ce = ce / norm[:, None]
    p = _homogeneous(baked.vertices)[:, :3]
    w0, v0 = c0[:, :1], c0[:, 1:]
    we, ve = ce[:, :1], ce[:, 1:]
    out = p + 2.0 * np.cross(v0, np.cross(v0, p) + w0 * p)
    out += 2.0 * (w0 * ve - we * v0 + np.cross(v0, ve))
    if bad.any():
        logger.warning("DQS: %d vertices fell back to LBS", int(bad.sum()))
        sub = BakedWeights(w[bad], baked.vertices[bad], baked.facets)
        out[bad, :d] = lbs(sub, pose)
    out = out[:, :d]
    return (out, int(bad.sum())) if return_fallbacks else out


def write_weights_csv(path, baked: BakedWeights) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["vertex_index"] + [f"w_{i + 1}" for i in range(baked.n_handles)])
        for i, row in enumerate(baked.weights):
            wr.writerow([i] + [repr(float(x)) for x in row])
