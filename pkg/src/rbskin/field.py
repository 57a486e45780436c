"""Kernel-regression skinning-weight field with built-in constraints.

The raw field is a normalized kernel average of per-site feature vectors. It
is pushed through a softplus-normalize activation (non-negativity, partition
of unity), blended with a mollified handle indicator (Lagrange property) and
finally edited near the boundary so the normal derivative vanishes there.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from . import _assembly
from .geometry import (
    BoundaryShape,
    HashGrid,
    WindingContext,
    closest_point,
    knn_median_distance,
    ray_visible,
    sample_interior,
)
from .geometry.queries import VISIBILITY_EPS
from .skeleton import HandleSet, lagrange_mollifier, smoothstep

CHUNK = 16384


def default_knn(d: int) -> int:
    """Neighbor rank used for the kernel width: 5th in 2D, 9th in 3D."""
    return 5 if d == 2 else 9


def softplus(z):
    return np.logaddexp(0.0, z)


def activate(f):
    """Map raw feature vectors onto the simplex via normalized softplus."""
    s = softplus(np.asarray(f, dtype=float))
    return s / s.sum(axis=-1, keepdims=True)


def apply_lagrange(hs: HandleSet, phi, x):
    """Blend activated weights toward the handle indicator near the handles."""
    e, bbar = lagrange_mollifier(hs, x)
    phi = np.atleast_2d(phi)
    return e + (1.0 - bbar)[:, None] * phi


def neumann_blend(t, eps):
    """``g(t) = 1 - smoothstep(t / eps)``: 1 on the boundary, 0 beyond ``eps``."""
    return 1.0 - smoothstep(np.asarray(t, dtype=float) / eps)


class KernelField:
    """Scattered sites with optimizable features, tied to one shape and skeleton.

    Parameters
    ----------
    shape : BoundaryShape
    handles : HandleSet
        Must carry the Lagrange radius (``handles.eps``).
    sites : (N, d) array
    features : (N, K) array, optional
        Defaults to zeros (uniform weights after activation).
    sigma : float
        Gaussian spread; the kernel is truncated at ``radius_factor * sigma``.
    eps_neumann : float
        Width of the boundary shell in which the Neumann edit acts.
    visibility : bool
        Use the ray-traced kernel near the boundary. ``False`` keeps the plain
        exponential kernel everywhere (bleeds across thin gaps).
    """

    def __init__(self, shape: BoundaryShape, handles: HandleSet, sites, features=None,
                 sigma=None, *, eps_neumann, radius_factor=3.0, visibility=True, knn=None):
        self.shape = shape
        self.handles = handles
        self.sites = np.ascontiguousarray(sites, dtype=np.float64)
        if self.sites.ndim != 2 or self.sites.shape[1] != shape.dim or len(self.sites) < 1:
            raise ValueError("sites must be a non-empty (N, d) array matching the shape")
        if handles.eps is None:
            raise ValueError("handles need a Lagrange radius")
        k = len(handles)
        if features is None:
            features = np.zeros((len(self.sites), k))
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        if self.features.shape != (len(self.sites), k):
            raise ValueError(f"features must be ({len(self.sites)}, {k})")
        self.knn = default_knn(shape.dim) if knn is None else int(knn)
        if sigma is None:
            sigma = knn_median_distance(self.sites, self.knn)
        if not sigma > 0 or not eps_neumann > 0:
            raise ValueError("sigma and eps_neumann must be positive")
        self.sigma = float(sigma)
        self.radius_factor = float(radius_factor)
        self.eps_neumann = float(eps_neumann)
        self.visibility = bool(visibility)
        self.grid = HashGrid(self.sites, self.radius)
        self.generation = 0

    @property
    def radius(self) -> float:
        return self.radius_factor * self.sigma

    @property
    def dim(self) -> int:
        return self.shape.dim

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def n_handles(self) -> int:
        return len(self.handles)

    def set_features(self, features) -> None:
        features = np.ascontiguousarray(features, dtype=np.float64)
        if features.shape != self.features.shape:
            raise ValueError("feature shape mismatch")
        self.features = features
        self.generation += 1

    def plan(self, x, anchors=None, groups=None, anchor_distance=None, neumann=True):
        return FieldPlan(self, x, anchors, groups, anchor_distance, neumann)

    def evaluate(self, x, anchors=None):
        """Skinning weights at ``x`` (``(n, d)`` or a single point)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = x.reshape(-1, self.dim)
        a = None if anchors is None else np.broadcast_to(
            np.asarray(anchors, dtype=float).reshape(-1, self.dim), x.shape)
        out = np.empty((len(x), self.n_handles))
        for s in range(0, len(x), CHUNK):
            sl = slice(s, s + CHUNK)
            plan = self.plan(x[sl], None if a is None else a[sl])
            out[sl] = plan.forward(self.features)[0]
        return out[0] if single else out

    def raw(self, x, anchors=None):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = x.reshape(-1, self.dim)
        a = None if anchors is None else np.broadcast_to(
            np.asarray(anchors, dtype=float).reshape(-1, self.dim), x.shape)
        out = np.empty((len(x), self.n_handles))
        for s in range(0, len(x), CHUNK):
            sl = slice(s, s + CHUNK)
            plan = self.plan(x[sl], None if a is None else a[sl], neumann=False)
            out[sl] = plan.W @ self.features
        return out[0] if single else out

    def __repr__(self):
        return (f"KernelField(d={self.dim}, N={self.n_sites}, K={self.n_handles}, "
                f"sigma={self.sigma:.4g}, eps_L={self.handles.eps:.4g}, "
                f"eps_N={self.eps_neumann:.4g}, visibility={self.visibility})")


class FieldPlan:
    """The field linearized at a fixed set of query points.

    Holds the sparse kernel matrix, handle-indicator blend and Neumann blend
    for every row, so that evaluation for any feature matrix is a sparse
    product plus elementwise work, and the exact feature gradient is the
    transpose of the same chain.

    Each query ``x`` gets a main row ``(x, anchor)``; queries closer than
    ``eps_neumann`` to the boundary also get a row at their closest boundary
    point, evaluated with the same anchor.
    """

    def __init__(self, fld: KernelField, x, anchors=None, groups=None,
                 anchor_distance=None, neumann=True):
        x = np.ascontiguousarray(np.asarray(x, dtype=np.float64).reshape(-1, fld.dim))
        n = len(x)
        own_anchor = anchors is None
        if own_anchor:
            anchors = x
        else:
            anchors = np.ascontiguousarray(np.asarray(anchors, dtype=np.float64).reshape(n, fld.dim))
        if groups is None:
            groups = np.arange(n, dtype=np.int64)
        cp = closest_point(fld.shape, x)
        if anchor_distance is None:
            anchor_distance = cp.distance if own_anchor else closest_point(fld.shape, anchors).distance
        near = np.asarray(anchor_distance) < fld.radius
        if neumann:
            g = neumann_blend(cp.distance, fld.eps_neumann)
        else:
            g = np.zeros(n)
        bnd = np.flatnonzero(g > 0)

        q = np.vstack([x, cp.point[bnd]])
        a = np.vstack([anchors, anchors[bnd]])
        grp = np.concatenate([groups, groups[bnd]]).astype(np.int64)
        nr = np.concatenate([near, near[bnd]])
        perm = np.argsort(grp, kind="stable")
        indptr, idx, vals, fb = _assembly.assemble(
            np.ascontiguousarray(q[perm]), np.ascontiguousarray(a[perm]),
            np.ascontiguousarray(grp[perm]), np.ascontiguousarray(nr[perm]),
            fld.grid, fld.radius, fld.sigma, fld.shape, fld.visibility, VISIBILITY_EPS)
        w = sp.csr_matrix((vals, idx, indptr), shape=(len(q), fld.n_sites))
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        self.W = w[inv]
        self.fallback = fb[inv]
        e, bbar = lagrange_mollifier(fld.handles, q)
        self.e = e
        self.c = 1.0 - bbar
        self.n = n
        self.bnd = bnd
        self.g = g[bnd]
        self.distance = cp.distance
        self.closest = cp.point
        self.near = near

    @property
    def n_rows(self) -> int:
        return self.W.shape[0]

    def forward(self, features):
        z = self.W @ features
        s = softplus(z)
        tot = s.sum(axis=1)
        phi = s / tot[:, None]
        what = self.e + self.c[:, None] * phi
        w = what[:self.n].copy()
        if len(self.bnd):
            g = self.g[:, None]
            w[self.bnd] = (1.0 - g) * what[self.bnd] + g * what[self.n:]
        return w, (z, tot, phi)

    def backward(self, cache, grad_w):
        """Vector-Jacobian product: feature gradient from ``dE/dw`` at the queries."""
        z, tot, phi = cache
        d_what = np.zeros_like(phi)
        d_what[:self.n] = grad_w
        if len(self.bnd):
            g = self.g[:, None]
            d_what[self.bnd] *= 1.0 - g
            d_what[self.n:] = g * grad_w[self.bnd]
        d_phi = self.c[:, None] * d_what
        dz = expit(z) / tot[:, None] * (d_phi - (d_phi * phi).sum(axis=1, keepdims=True))
        return self.W.T @ dz


def kernel_value(fld: KernelField, x, i: int, anchor=None) -> float:
    """Unnormalized composite kernel between ``x`` and site ``i``.

    The visibility factor is traced from ``anchor`` (default ``x``) and only
    applies when the anchor lies within the truncation radius of the boundary.
    """
    x = np.asarray(x, dtype=float)
    anchor = x if anchor is None else np.asarray(anchor, dtype=float)
    xi = fld.sites[i]
    d2 = float(np.sum((x - xi) ** 2))
    if d2 > fld.radius ** 2:
        return 0.0
    k = float(np.exp(-d2 / (2.0 * fld.sigma ** 2)))
    if fld.visibility and closest_point(fld.shape, anchor).distance < fld.radius:
        if not ray_visible(fld.shape, anchor, xi):
            return 0.0
    return k


def raw_field(fld: KernelField, x, anchors=None):
    """Normalized kernel regression of the site features at ``x``."""
    return fld.raw(x, anchors)


def apply_neumann(fld: KernelField, wx, x, anchors=None):
    """Edit ``wx = w_hat(x)`` near the boundary so the normal derivative vanishes.

    ``w_hat`` at the closest boundary point is evaluated with the same
    visibility anchor as ``x`` (``x`` itself by default).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    wx = np.atleast_2d(np.asarray(wx, dtype=float))
    anchors = x if anchors is None else np.atleast_2d(np.asarray(anchors, dtype=float))
    cp = closest_point(fld.shape, x)
    g = neumann_blend(cp.distance, fld.eps_neumann)
    out = wx.copy()
    m = g > 0
    if m.any():
        y = cp.point[m]
        wy = apply_lagrange(fld.handles, activate(fld.raw(y, anchors[m])), y)
        out[m] = (1.0 - g[m, None]) * wx[m] + g[m, None] * wy
    return out


def evaluate(fld: KernelField, x, anchors=None):
    """Final skinning weights: Neumann edit of the Lagrange-wrapped activated field."""
    return fld.evaluate(x, anchors)


def upsample(fld: KernelField, ctx: WindingContext, rng, moments=()):
    """Double the site count, interpolating features and optimizer moments.

    New sites are drawn by rejection sampling; their features (and every
    array in ``moments``) are the raw-field interpolation of the old ones.
    The kernel width is recomputed from the enlarged site set.
    """
    smp = sample_interior(ctx, fld.n_sites, rng)
    plan = fld.plan(smp.points, neumann=False)
    new_feat = plan.W @ fld.features
    sites = np.vstack([fld.sites, smp.points])
    out = KernelField(
        fld.shape, fld.handles, sites, np.vstack([fld.features, new_feat]),
        knn_median_distance(sites, fld.knn), eps_neumann=fld.eps_neumann,
        radius_factor=fld.radius_factor, visibility=fld.visibility, knn=fld.knn)
    new_moments = [np.vstack([m, plan.W @ m]) for m in moments]
    return out, new_moments


def initial_field(shape: BoundaryShape, handles: HandleSet, sites, *, knn=None,
                  eps_lagrange=None, eps_neumann=None, radius_factor=3.0, visibility=True):
    """Field at level 0: zero features, width from the k-NN rule, radii default to it."""
    knn = default_knn(shape.dim) if knn is None else knn
    sigma = knn_median_distance(sites, knn)
    eps_l = sigma if eps_lagrange is None else eps_lagrange
    eps_n = sigma if eps_neumann is None else eps_neumann
    return KernelField(shape, handles.with_eps(eps_l), sites, None, sigma,
                       eps_neumann=eps_n, radius_factor=radius_factor,
                       visibility=visibility, knn=knn)
