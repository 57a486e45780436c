"""Compiled assembly of row-normalized, visibility-masked kernel matrices."""
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

from .geometry import _kernels as GK

_workers = 1


def set_workers(n: int) -> None:
    """Bound the number of threads used for kernel assembly."""
    global _workers
    if n < 1:
        raise ValueError("workers must be >= 1")
    _workers = int(n)


def get_workers() -> int:
    return _workers


@njit(cache=True, nogil=True)
def _kernel_rows(lo_row, hi_row, queries, anchors, group, near, sites, indptr, counts,
                 idx, d2, sigma, use_vis, verts, facets, status, blo, bhi, left,
                 right, start, count, order, eps, vals, fallback):
    n_sites = sites.shape[0]
    stamp = np.full(n_sites, -1, dtype=np.int64)
    vis = np.zeros(n_sites, dtype=np.bool_)
    inv2s2 = 1.0 / (2.0 * sigma * sigma)
    for i in range(lo_row, hi_row):
        a = indptr[i]
        b = a + counts[i]
        g = group[i]
        total = 0.0
        for p in range(a, b):
            j = idx[p]
            k = math.exp(-d2[p] * inv2s2)
            if use_vis and near[i]:
                if stamp[j] != g:
                    vis[j] = not GK.occluded_bvh(anchors[i], sites[j], verts, facets,
                                                 status, blo, bhi, left, right,
                                                 start, count, order, eps)
                    stamp[j] = g
                if not vis[j]:
                    k = 0.0
            vals[p] = k
            total += k
        if total > 0.0:
            for p in range(a, b):
                vals[p] = vals[p] / total
            continue
        # nothing in reach: nearest visible site, else nearest site
        fallback[i] = True
        dist = np.empty(n_sites)
        for j in range(n_sites):
            s = 0.0
            for c in range(sites.shape[1]):
                e = sites[j, c] - queries[i, c]
                s += e * e
            dist[j] = s
        rank = np.argsort(dist, kind="mergesort")
        pick = rank[0]
        for r in range(n_sites if use_vis else 0):
            j = rank[r]
            if stamp[j] == g:
                ok = vis[j]
            else:
                ok = not GK.occluded_bvh(anchors[i], sites[j], verts, facets, status,
                                         blo, bhi, left, right, start, count, order, eps)
            if ok:
                pick = j
                break
        for p in range(a, indptr[i + 1]):
            vals[p] = 0.0
        idx[a] = pick
        vals[a] = 1.0


def assemble(queries, anchors, group, near, grid, radius, sigma, shape, use_vis, eps):
    """CSR arrays of the normalized kernel for each (query, anchor) row.

    Rows sharing a ``group`` id must share the same anchor; visibility from that
    anchor is then traced once per site and reused across the group.
    """
    n = len(queries)
    counts = np.zeros(n, dtype=np.int64)
    GK.grid_count(queries, radius, *grid.arrays, counts)
    slots = np.maximum(counts, 1)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(slots, out=indptr[1:])
    idx = np.zeros(indptr[-1], dtype=np.int64)
    d2 = np.zeros(indptr[-1])
    GK.grid_fill(queries, radius, *grid.arrays, indptr, idx, d2)
    vals = np.zeros(indptr[-1])
    fallback = np.zeros(n, dtype=np.bool_)
    bvh = shape.bvh
    args = (queries, anchors, group, near, grid.sites, indptr, counts, idx, d2,
            float(sigma), bool(use_vis), shape.vertices, shape.facets, shape.status,
            *bvh.arrays, float(eps), vals, fallback)
    if _workers == 1 or n < 4096:
        _kernel_rows(0, n, *args)
    else:
        # split on group boundaries so each chunk keeps its visibility cache
        cuts = np.linspace(0, n, _workers + 1).astype(np.int64)
        for c in range(1, _workers):
            while 0 < cuts[c] < n and group[cuts[c]] == group[cuts[c] - 1]:
                cuts[c] += 1
        cuts = np.maximum.accumulate(cuts)
        with ThreadPoolExecutor(_workers) as ex:
            list(ex.map(lambda ab: _kernel_rows(ab[0], ab[1], *args), zip(cuts[:-1], cuts[1:])))
    return indptr, idx, vals, fallback
