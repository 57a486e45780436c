from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .shape import BoundaryShape, GeometryError

VISIBILITY_EPS = 1e-6


class SamplingError(RuntimeError):
    """Rejection sampling could not find enough of the domain."""


class ClosestPoint(NamedTuple):
    point: np.ndarray
    distance: np.ndarray
    normal: np.ndarray
    facet: np.ndarray


def _as_points(x, d):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.ascontiguousarray(x.reshape(-1, d))
    return x, single


def closest_point(shape: BoundaryShape, x) -> ClosestPoint:
    """Closest boundary point, distance, owning facet normal and facet id.

    Accepts a single point or an ``(n, d)`` array. Ties between facets at the
    same distance resolve to the lowest facet id.
    """
    if shape.bvh.empty:
        raise GeometryError("boundary has no facet of positive measure")
    pts, single = _as_points(x, shape.dim)
    y, d2, fid = shape.bvh.closest(pts)
    res = ClosestPoint(y, np.sqrt(d2), shape.normals[fid], fid)
    if single:
        return ClosestPoint(*(a[0] for a in res))
    return res


def closest_point_brute(shape: BoundaryShape, x) -> ClosestPoint:
    """Reference closest point by scanning every facet."""
    pts, single = _as_points(x, shape.dim)
    out = np.zeros_like(pts)
    d2 = np.zeros(len(pts))
    fid = np.zeros(len(pts), dtype=np.int64)
    K.closest_point_brute(pts, shape.vertices, shape.facets, shape.status, out, d2, fid)
    res = ClosestPoint(out, np.sqrt(d2), shape.normals[fid], fid)
    if single:
        return ClosestPoint(*(a[0] for a in res))
    return res


def ray_visible(shape: BoundaryShape, x, y, eps: float = VISIBILITY_EPS):
    """True where nothing on the boundary blocks the open segment x -> y.

    Hits closer than ``eps * |y - x|`` to either endpoint are ignored, so
    points lying on the boundary do not occlude themselves.
    """
    p, single = _as_points(x, shape.dim)
    q, _ = _as_points(y, shape.dim)
    p, q = np.broadcast_arrays(p, q)
    vis = shape.bvh.visible(p, q, eps)
    return bool(vis[0]) if single and np.ndim(y) == 1 else vis


def ray_visible_brute(shape: BoundaryShape, x, y, eps: float = VISIBILITY_EPS):
    p, _ = _as_points(x, shape.dim)
    q, _ = _as_points(y, shape.dim)
    p, q = (np.ascontiguousarray(a) for a in np.broadcast_arrays(p, q))
    out = np.zeros(len(p), dtype=np.bool_)
    K.visible_pairs_brute(p, q, shape.vertices, shape.facets, shape.status, eps, out)
    return out


@dataclass(frozen=True)
class WindingContext:
    """Boundary plus the inside/outside thresholds of the winding number."""

    shape: BoundaryShape
    w_low: float = 0.1
    w_high: float = 0.4

    def __post_init__(self):
        if not 0 <= self.w_low < self.w_high <= 1:
            raise ValueError(f"need 0 <= w_low < w_high <= 1, got {self.w_low}, {self.w_high}")

    def ramp(self, w):
        """Clipped linear ramp from 0 at ``w_low`` to 1 at ``w_high``."""
        return np.clip((np.asarray(w) - self.w_low) / (self.w_high - self.w_low), 0.0, 1.0)


def winding_number(ctx, x):
    """Generalized winding number: 1 deep inside, 0 far outside.

    Exact per-facet sum of signed angles (2D) or solid angles (3D). Values on
    the boundary itself are not meaningful.
    """
    shape = ctx.shape if isinstance(ctx, WindingContext) else ctx
    pts, single = _as_points(x, shape.dim)
    out = np.zeros(len(pts))
    K.winding_numbers(pts, shape.vertices, shape.facets, shape.status, out)
    return float(out[0]) if single else out


class InteriorSample(NamedTuple):
    points: np.ndarray
    winding: np.ndarray
    acceptance_ratio: float
    n_proposals: int
    box_volume: float = 1.0

    @property
    def volume(self) -> float:
        """Monte Carlo estimate of the domain's measure."""
        return self.acceptance_ratio * self.box_volume


def sample_interior(ctx: WindingContext, n: int, rng, *, min_ratio=1e-4,
                    max_proposals=1_000_000) -> InteriorSample:
    """Uniform samples of ``{x in [0,1]^d : w(x) >= w_low}`` by rejection."""
    d = ctx.shape.dim
    rng = np.random.default_rng(rng)
    accepted, windings = [], []
    n_acc = 0
    n_prop = 0
    n_hit = 0
    ratio_guess = 0.5
    while n_acc < n:
        need = n - n_acc
        m = int(min(max(1.2 * need / ratio_guess, 1024), 1 << 20))
        prop = rng.random((m, d))
        w = winding_number(ctx, prop)
        keep = w >= ctx.w_low
        n_prop += m
        n_hit += int(keep.sum())
        accepted.append(prop[keep])
        windings.append(w[keep])
        n_acc += int(keep.sum())
        ratio_guess = max(n_hit / n_prop, 1e-4)
        if n_prop >= max_proposals and n_hit / n_prop < min_ratio:
            raise SamplingError(
                f"acceptance ratio {n_hit / n_prop:.2e} after {n_prop} proposals; "
                "the boundary encloses (almost) nothing or is inside-out "
                f"(mean winding number {float(np.mean(w)):+.3f} on the last batch)")
    pts = np.concatenate(accepted)[:n]
    ws = np.concatenate(windings)[:n]
    return InteriorSample(pts, ws, n_hit / n_prop, n_prop, 1.0)


class HashGrid:
    """Uniform grid over a fixed point set; cell size equals the query radius."""

    def __init__(self, sites, cell: float):
        self.sites = np.ascontiguousarray(sites, dtype=np.float64)
        self.cell = float(cell)
        if not self.cell > 0:
            raise ValueError("cell size must be positive")
        d = self.sites.shape[1]
        self.origin = self.sites.min(axis=0) if len(self.sites) else np.zeros(d)
        extent = (self.sites.max(axis=0) - self.origin) if len(self.sites) else np.zeros(d)
        self.dims = np.maximum(np.floor(extent / self.cell).astype(np.int64) + 1, 1)
        ijk = np.floor((self.sites - self.origin) / self.cell).astype(np.int64)
        ijk = np.minimum(ijk, self.dims - 1)
        strides = np.concatenate([[1], np.cumprod(self.dims[:-1])])
        cid = ijk @ strides
        self.order = np.argsort(cid, kind="stable").astype(np.int64)
        counts = np.bincount(cid, minlength=int(np.prod(self.dims)))
        self.cell_start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    @property
    def arrays(self):
        return (self.sites, self.origin, self.cell, self.dims, self.cell_start, self.order)

    def query(self, x, r=None):
        """CSR neighbor lists ``(indptr, indices, sq_distances)`` within ``r``."""
        r = self.cell if r is None else float(r)
        q = np.ascontiguousarray(np.asarray(x, dtype=np.float64).reshape(-1, self.sites.shape[1]))
        counts = np.zeros(len(q), dtype=np.int64)
        K.grid_count(q, r, *self.arrays, counts)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        idx = np.zeros(indptr[-1], dtype=np.int64)
        d2 = np.zeros(indptr[-1])
        K.grid_fill(q, r, *self.arrays, indptr, idx, d2)
        return indptr, idx, d2


def radius_neighbors(grid: HashGrid, x, r=None):
    """Sites within distance ``r`` of a single point ``x`` (inclusive).

    Returns ``(indices, distances)`` with indices ascending.
    """
    indptr, idx, d2 = grid.query(np.asarray(x, dtype=float)[None, :], r)
    return idx, np.sqrt(d2)


def knn_median_distance(sites, k: int) -> float:
    """Median over sites of the distance to their k-th nearest other site."""
    sites = np.asarray(sites, dtype=float)
    if len(sites) < k + 1:
        raise GeometryError(f"need at least {k + 1} sites for k={k}, got {len(sites)}")
    dist, _ = cKDTree(sites).query(sites, k=k + 1)
    return float(np.median(dist[:, k]))


def unit_directions(n: int, d: int, rng) -> np.ndarray:
    """Uniform directions on the unit sphere ``S^{d-1}``."""
    v = rng.standard_normal((n, d))
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    bad = norm[:, 0] == 0
    while bad.any():
        v[bad] = rng.standard_normal((int(bad.sum()), d))
        norm = np.linalg.norm(v, axis=1, keepdims=True)
        bad = norm[:, 0] == 0
    return v / norm

